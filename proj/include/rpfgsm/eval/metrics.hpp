#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "rpfgsm/attacks/common.hpp"
#include "rpfgsm/detector/detector.hpp"

namespace rpfgsm::eval {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(255^2 / MSE) over every pixel and channel; identical images give
/// the cap.
inline double psnr(const Tensor& original, const Tensor& adversarial) {
  if (original.shape() != adversarial.shape()) {
    throw ShapeError("psnr: shape mismatch " + shape_string(original.shape()) + " vs " +
                     shape_string(adversarial.shape()));
  }
  double sse = 0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = original[i] - adversarial[i];
    sse += d * d;
  }
  if (sse == 0) return kPsnrCap;
  const double mse = sse / static_cast<double>(original.size());
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

/// An attacked image with the true class the evaluator knows.
struct LabelledResult {
  const attacks::AdversarialResult* result = nullptr;
  int true_label = 0;
};

/// Percentage of images whose true class is outside the top-k of the
/// (defended) prediction.
inline double misleading_rate(std::span<const models::PredictionVector> predictions,
                              std::span<const int> true_labels, std::size_t k) {
  if (predictions.size() != true_labels.size()) throw Error("misleading_rate: size mismatch");
  if (predictions.empty()) return 0.0;
  std::size_t hidden = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    hidden += !predictions[i].in_top_k(true_labels[i], k);
  }
  return 100.0 * static_cast<double>(hidden) / static_cast<double>(predictions.size());
}

inline double misleading_rate(std::span<const LabelledResult> results,
                              const models::ModelParams& model,
                              const std::optional<transforms::TransformSpec>& defense,
                              std::size_t k) {
  if (k != 1 && k != 5) throw Error("misleading rate is reported for k = 1 or 5");
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (const auto& r : results) {
    images.push_back(r.result->image);
    labels.push_back(r.true_label);
  }
  const auto preds = detector::defended_predict_batch(
      model, defense.value_or(transforms::TransformSpec::identity()), images);
  return misleading_rate(preds, labels, k);
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Population mean and standard deviation; zeros for an empty list.
inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) return {};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace rpfgsm::eval
