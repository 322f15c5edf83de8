#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <numeric>
#include <string>
#include <vector>

#include "rpfgsm/rpfgsm.hpp"

namespace rpfgsm::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Distinct values with gaps of at least 0.009, in random order, so small
/// perturbations never reorder them.
inline Tensor well_separated(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = 0.01 * static_cast<double>(order[i]) + rng.uniform(0.0, 0.001) - 0.5;
  }
  return t;
}

inline Tensor random_image(Rng& rng, std::size_t h = 32, std::size_t w = 32) {
  Tensor t({3, h, w});
  for (double& v : t.data()) v = static_cast<double>(rng.integer(0, 255));
  return t;
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0 ? 0.0 : std::abs(a - b) / scale;
}

struct FdReport {
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Compares reverse-mode gradients of sum(out * weights) (or of the scalar
/// `out` when there are no weights) against central differences with step h,
/// at the given coordinates of `leaf` (all of them when empty). The difference
/// is taken per output element before weighting, which keeps the roundoff of
/// large outputs out of small derivatives. `skip(i)` may veto a coordinate,
/// e.g. when the perturbation crosses a kink. Entries whose gradient is at most
/// `floor` in magnitude are not compared.
inline FdReport finite_difference_check(
    const ad::Expr& out, const std::optional<Tensor>& weights, ad::Bindings bindings,
    const std::string& leaf, std::vector<std::size_t> coords = {}, double h = 1e-5,
    const std::function<bool(std::size_t)>& skip = {}, double floor = 1e-8) {
  const ad::Expr scalar = weights ? ad::sum(ad::mul(out, ad::constant(*weights))) : out;
  const Tensor grad = ad::gradient(scalar, bindings, {leaf}).at(leaf);
  Tensor& x = bindings.at(leaf);
  if (coords.empty()) {
    coords.resize(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
  }
  FdReport r;
  for (std::size_t i : coords) {
    if (skip && skip(i)) {
      ++r.skipped;
      continue;
    }
    const double orig = x[i];
    x[i] = orig + h;
    const Tensor up = ad::evaluate(out, bindings);
    x[i] = orig - h;
    const Tensor down = ad::evaluate(out, bindings);
    x[i] = orig;
    long double acc = 0;
    for (std::size_t j = 0; j < up.size(); ++j) {
      const long double d = static_cast<long double>(up[j]) - down[j];
      acc += weights ? d * (*weights)[j] : d;
    }
    const double numeric = static_cast<double>(acc / (2 * h));
    if (std::max(std::abs(numeric), std::abs(grad[i])) <= floor) continue;
    r.worst = std::max(r.worst, relative_error(grad[i], numeric));
    ++r.checked;
  }
  return r;
}

inline FdReport finite_difference_check(
    const ad::Expr& expr, ad::Bindings bindings, const std::string& leaf,
    std::vector<std::size_t> coords = {}, double h = 1e-5,
    const std::function<bool(std::size_t)>& skip = {}) {
  return finite_difference_check(expr, std::nullopt, std::move(bindings), leaf, std::move(coords), h,
                                 skip);
}

/// sum(out * w) for fixed random weights w: a scalar whose gradient exercises
/// every output element with a different upstream value.
inline ad::Expr weighted_sum(const ad::Expr& out, const Shape& shape, Rng& rng) {
  return ad::sum(ad::mul(out, ad::constant(random_tensor(shape, rng, 0.5, 1.5))));
}

/// Values of every rounding input (round and cubic round nodes) in a graph.
inline std::vector<double> rounding_inputs(const ad::Expr& expr, const ad::Bindings& bindings) {
  std::vector<double> out;
  const ad::Tape tape(expr, bindings);
  tape.visit([&](const ad::Node& node, const Tensor* input, const Tensor&) {
    if (node.op == ad::Op::round || node.op == ad::Op::round_cubic) {
      out.insert(out.end(), input->data().begin(), input->data().end());
    }
  });
  return out;
}

inline bool same_roundings(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::round(a[i]) != std::round(b[i])) return false;
  }
  return true;
}

/// Linear classifier with explicit weights [in, classes] and biases.
inline models::ModelParams linear_model(const Shape& input, std::size_t classes,
                                        std::vector<double> weights, std::vector<double> bias) {
  const std::size_t in = shape_size(input);
  return models::ModelParams(models::linear(input, classes),
                             {Tensor({in, classes}, std::move(weights)),
                              Tensor({classes}, std::move(bias))});
}

/// Random integer images (shared by several suites).
inline std::vector<Tensor> random_images(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_image(rng));
  return out;
}

}  // namespace rpfgsm::testing
