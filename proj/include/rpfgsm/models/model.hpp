#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rpfgsm/autodiff.hpp"
#include "rpfgsm/image.hpp"
#include "rpfgsm/models/architecture.hpp"
#include "rpfgsm/random.hpp"

namespace rpfgsm::models {

/// D class probabilities; argmax is the predicted class.
class PredictionVector {
 public:
  PredictionVector() = default;
  explicit PredictionVector(std::vector<double> p) : p_(std::move(p)) {}

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  const std::vector<double>& probabilities() const { return p_; }

  /// First class with the maximal probability.
  int argmax() const {
    return static_cast<int>(std::max_element(p_.begin(), p_.end()) - p_.begin());
  }

  /// Classes sorted by descending probability, ties by ascending class index.
  std::vector<int> ranking() const {
    std::vector<int> order(p_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p_[a] > p_[b]; });
    return order;
  }

  bool in_top_k(int cls, std::size_t k) const {
    const auto order = ranking();
    const auto end = order.begin() + static_cast<std::ptrdiff_t>(std::min(k, order.size()));
    return std::find(order.begin(), end, cls) != end;
  }

  double l1_distance(const PredictionVector& other) const {
    double d = 0.0;
    for (std::size_t i = 0; i < p_.size(); ++i) d += std::abs(p_[i] - other.p_[i]);
    return d;
  }

  friend bool operator==(const PredictionVector&, const PredictionVector&) = default;

 private:
  std::vector<double> p_;
};

struct TrainingInfo {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

/// Weights of one classifier. Immutable once built; expressions built from it
/// share the parameter tensors instead of copying them.
class ModelParams {
 public:
  ModelParams(Architecture arch, std::vector<Tensor> params, TrainingInfo info = {})
      : arch_(std::move(arch)), specs_(param_specs(arch_)), info_(info) {
    if (params.size() != specs_.size()) {
      throw ShapeError(arch_.name + ": expected " + std::to_string(specs_.size()) +
                       " parameter tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].shape() != specs_[i].shape) {
        throw ShapeError(arch_.name + ": parameter " + specs_[i].name + " has shape " +
                         shape_string(params[i].shape()) + ", expected " +
                         shape_string(specs_[i].shape));
      }
      params_.push_back(std::make_shared<const Tensor>(std::move(params[i])));
    }
  }

  static ModelParams zeros(const Architecture& arch) {
    std::vector<Tensor> params;
    for (const auto& s : param_specs(arch)) params.emplace_back(s.shape);
    return ModelParams(arch, std::move(params));
  }

  /// He-normal hidden weights, 1/sqrt(fan_in) output weights, zero biases.
  static ModelParams initialize(const Architecture& arch, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> params;
    for (const auto& s : param_specs(arch)) {
      Tensor t(s.shape);
      if (!s.is_bias) {
        const double stddev = std::sqrt((s.is_output ? 1.0 : 2.0) / static_cast<double>(s.fan_in));
        for (double& v : t.data()) v = rng.normal(0.0, stddev);
      }
      params.push_back(std::move(t));
    }
    return ModelParams(arch, std::move(params), TrainingInfo{seed, 0});
  }

  const Architecture& architecture() const { return arch_; }
  const std::string& name() const { return arch_.name; }
  std::size_t classes() const { return arch_.classes; }
  const std::vector<ParamSpec>& specs() const { return specs_; }
  std::size_t param_count() const { return params_.size(); }
  const Tensor& param(std::size_t i) const { return *params_[i]; }
  const TrainingInfo& info() const { return info_; }
  void set_info(TrainingInfo info) { info_ = info; }

  /// Logits [n,classes] of a batch [n,c,h,w] (or a single [c,h,w] image, n = 1)
  /// given on the [0,255] scale. With `as_leaves` the parameters become leaves
  /// named after their specs instead of shared constants.
  ad::Expr logits(ad::Expr input, std::size_t batch = 1, bool as_leaves = false) const {
    Shape shape{batch};
    shape.insert(shape.end(), arch_.input.begin(), arch_.input.end());
    ad::Expr x = ad::scale(ad::reshape(std::move(input), shape), 1.0 / 255.0);
    std::size_t p = 0;
    auto next = [&]() {
      const std::size_t i = p++;
      return as_leaves ? ad::leaf(specs_[i].name) : ad::constant(params_[i]);
    };
    std::size_t features = 0;
    for (const Layer& l : arch_.layers) {
      switch (l.kind) {
        case Layer::Kind::conv: {
          auto w = next();
          auto b = next();
          x = ad::conv2d(x, w, b);
          shape[1] = l.units;
          break;
        }
        case Layer::Kind::relu:
          x = ad::relu(x);
          break;
        case Layer::Kind::maxpool2:
          x = ad::maxpool2(x);
          shape[2] /= 2;
          shape[3] /= 2;
          break;
        case Layer::Kind::flatten:
          features = shape_size(shape) / batch;
          x = ad::reshape(x, {batch, features});
          shape = {batch, features};
          break;
        case Layer::Kind::dense: {
          auto w = next();
          auto b = next();
          x = ad::add(ad::matmul(x, w), b);
          shape = {batch, l.units};
          break;
        }
      }
    }
    return x;
  }

  void require_input(const Tensor& image) const {
    if (image.shape() != arch_.input) {
      throw ShapeError(arch_.name + " expects input " + shape_string(arch_.input) + ", got " +
                       shape_string(image.shape()));
    }
  }

 private:
  Architecture arch_;
  std::vector<ParamSpec> specs_;
  std::vector<std::shared_ptr<const Tensor>> params_;
  TrainingInfo info_;
};

namespace detail {

inline PredictionVector softmax_row(const double* z, std::size_t d, double temperature) {
  std::vector<double> p(d);
  double zmax = z[0];
  for (std::size_t i = 1; i < d; ++i) zmax = std::max(zmax, z[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    p[i] = std::exp((z[i] - zmax) / temperature);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return PredictionVector(std::move(p));
}

}  // namespace detail

/// Raw logits of one image.
inline std::vector<double> logits(const ModelParams& model, const Tensor& image) {
  model.require_input(image);
  const Tensor z = ad::evaluate(model.logits(ad::leaf("x")), {{"x", image}});
  return z.values();
}

/// Softmax prediction of one image; `temperature` divides the logits.
inline PredictionVector predict(const ModelParams& model, const Tensor& image,
                                double temperature = 1.0) {
  const auto z = logits(model, image);
  return detail::softmax_row(z.data(), z.size(), temperature);
}

/// Predictions for many images, evaluated in batches.
inline std::vector<PredictionVector> predict_batch(const ModelParams& model,
                                                   std::span<const Tensor> images,
                                                   std::size_t batch_size = 64) {
  std::vector<PredictionVector> out;
  out.reserve(images.size());
  const std::size_t d = model.classes();
  const std::size_t per = shape_size(model.architecture().input);
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, images.size() - start);
    Shape shape{n};
    shape.insert(shape.end(), model.architecture().input.begin(), model.architecture().input.end());
    Tensor batch(shape);
    for (std::size_t i = 0; i < n; ++i) {
      model.require_input(images[start + i]);
      std::copy(images[start + i].data().begin(), images[start + i].data().end(),
                batch.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    const Tensor z = ad::evaluate(model.logits(ad::leaf("x"), n), {{"x", batch}});
    for (std::size_t i = 0; i < n; ++i) out.push_back(detail::softmax_row(&z[i * d], d, 1.0));
  }
  return out;
}

}  // namespace rpfgsm::models
