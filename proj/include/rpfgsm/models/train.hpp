#pragma once

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "rpfgsm/eval/dataset.hpp"
#include "rpfgsm/models/model.hpp"

namespace rpfgsm::models {

struct TrainHyper {
  std::size_t epochs = 10;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Top-1 accuracy in [0,1].
inline double accuracy(const ModelParams& model, std::span<const DatasetRecord> records) {
  if (records.empty()) return 0.0;
  std::vector<Tensor> images;
  images.reserve(records.size());
  for (const auto& r : records) images.push_back(r.image);
  const auto preds = predict_batch(model, images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) correct += preds[i].argmax() == records[i].label;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

/// Mini-batch SGD with momentum (v <- mu v + g; w <- w - lr v) on mean
/// cross-entropy, the rate following a per-epoch cosine decay from
/// `learning_rate` towards zero. Deterministic given `hyper.seed`. When `heldout` is empty the
/// last tenth of `train` is held out for the recorded accuracy.
inline ModelParams train_classifier(const Architecture& arch, std::span<const DatasetRecord> train,
                                    const TrainHyper& hyper,
                                    std::span<const DatasetRecord> heldout = {}) {
  if (train.empty()) throw Error("train_classifier: empty dataset");
  if (hyper.batch_size == 0 || hyper.learning_rate <= 0) throw Error("train_classifier: bad hyperparameters");
  for (const auto& r : train) {
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= arch.classes) {
      throw Error("train_classifier: label " + std::to_string(r.label) + " outside [0," +
                  std::to_string(arch.classes) + ")");
    }
  }
  if (heldout.empty() && train.size() >= 10) {
    const std::size_t keep = train.size() - train.size() / 10;
    heldout = train.subspan(keep);
    train = train.first(keep);
  }

  ModelParams init = ModelParams::initialize(arch, hyper.seed);
  const auto& specs = init.specs();
  ad::Bindings bindings;
  std::set<std::string> wrt;
  std::vector<Tensor> velocity;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    bindings[specs[i].name] = init.param(i);
    wrt.insert(specs[i].name);
    velocity.emplace_back(specs[i].shape);
  }

  Rng rng(hyper.seed ^ 0x5eed5eedULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t per = shape_size(arch.input);

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double lr = hyper.learning_rate * 0.5 *
                      (1 + std::cos(std::acos(-1.0) * static_cast<double>(epoch) / static_cast<double>(hyper.epochs)));
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t n = std::min(hyper.batch_size, order.size() - start);
      Shape shape{n};
      shape.insert(shape.end(), arch.input.begin(), arch.input.end());
      Tensor batch(shape);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = train[order[start + i]];
        init.require_input(rec.image);
        std::copy(rec.image.data().begin(), rec.image.data().end(),
                  batch.data().begin() + static_cast<std::ptrdiff_t>(i * per));
        labels[i] = rec.label;
      }
      bindings["input"] = std::move(batch);
      const auto loss = ad::softmax_cross_entropy(init.logits(ad::leaf("input"), n, true), labels);
      const auto grads = ad::gradient(loss, bindings, wrt);
      for (std::size_t p = 0; p < specs.size(); ++p) {
        Tensor& w = bindings[specs[p].name];
        Tensor& v = velocity[p];
        const Tensor& g = grads.at(specs[p].name);
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = hyper.momentum * v[i] + g[i];
          w[i] -= lr * v[i];
        }
      }
    }
  }

  std::vector<Tensor> params;
  for (const auto& s : specs) params.push_back(std::move(bindings[s.name]));
  ModelParams trained(arch, std::move(params), TrainingInfo{hyper.seed, hyper.epochs});
  TrainingInfo info = trained.info();
  info.accuracy = heldout.empty() ? accuracy(trained, train) : accuracy(trained, heldout);
  trained.set_info(info);
  return trained;
}

}  // namespace rpfgsm::models
