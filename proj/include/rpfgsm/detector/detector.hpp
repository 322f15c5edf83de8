#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "rpfgsm/models/model.hpp"
#include "rpfgsm/transforms/transforms.hpp"

namespace rpfgsm::detector {

using models::ModelParams;
using models::PredictionVector;
using transforms::TransformKind;
using transforms::TransformSpec;

/// Parameter used for detection and defended evaluation of a defense kind:
/// 4 bits, 3x3 median, JPEG quality 50.
inline TransformSpec mid_strength(TransformKind kind) {
  switch (kind) {
    case TransformKind::identity: return TransformSpec::identity();
    case TransformKind::requantize: return TransformSpec::requantize(4);
    case TransformKind::median: return TransformSpec::median(3);
    case TransformKind::jpeg: return TransformSpec::jpeg(50);
    default:
      throw transforms::TransformError(std::string(transforms::kind_name(kind)) +
                                       " is not a defense");
  }
}

/// predict(model, apply_exact(spec, image))
inline PredictionVector defended_predict(const ModelParams& model, const TransformSpec& spec,
                                         const Tensor& image) {
  return models::predict(model, transforms::apply_exact(spec, image));
}

inline std::vector<PredictionVector> defended_predict_batch(const ModelParams& model,
                                                            const TransformSpec& spec,
                                                            std::span<const Tensor> images) {
  if (spec.kind == TransformKind::identity) return models::predict_batch(model, images);
  std::vector<Tensor> moved;
  moved.reserve(images.size());
  for (const auto& im : images) moved.push_back(transforms::apply_exact(spec, im));
  return models::predict_batch(model, moved);
}

/// L1 distance between the model's predictions before and after the defense.
inline double detection_score(const ModelParams& model, const TransformSpec& spec,
                              const Tensor& image) {
  return models::predict(model, image).l1_distance(defended_predict(model, spec, image));
}

inline std::vector<double> detection_scores(const ModelParams& model, const TransformSpec& spec,
                                            std::span<const Tensor> images) {
  const auto plain = models::predict_batch(model, images);
  const auto defended = defended_predict_batch(model, spec, images);
  std::vector<double> out(images.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = plain[i].l1_distance(defended[i]);
  return out;
}

/// The (1 - fpr) quantile of clean scores, interpolating linearly between
/// order statistics at plotting position p(n+1) (1-based). With this position
/// at most fpr*(n+1) of the calibration scores exceed the threshold.
inline double calibrate_threshold(std::vector<double> scores, double fpr) {
  if (scores.empty()) throw Error("calibration needs at least one score");
  if (!(fpr > 0 && fpr < 1)) throw Error("false-positive target must be in (0,1)");
  std::sort(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());
  const double pos = (1.0 - fpr) * (n + 1.0) - 1.0;  // 0-based
  if (pos <= 0) return scores.front();
  if (pos >= n - 1) return scores.back();
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  return scores[lo] + frac * (scores[lo + 1] - scores[lo]);
}

/// One calibrated squeezer: flags images whose score exceeds tau.
struct DetectorConfig {
  std::shared_ptr<const ModelParams> model;
  TransformSpec spec;
  double threshold = 0.0;
  double fpr = 0.05;
};

class Detector {
 public:
  explicit Detector(DetectorConfig config) : config_(std::move(config)) {
    if (!config_.model) throw Error("detector needs a model");
    if (!(config_.threshold >= 0)) throw Error("detector threshold must be >= 0");
    if (!(config_.fpr > 0 && config_.fpr < 1)) throw Error("false-positive target must be in (0,1)");
  }

  static Detector calibrate(std::shared_ptr<const ModelParams> model, const TransformSpec& spec,
                            std::span<const Tensor> clean, double fpr = 0.05) {
    const double tau = calibrate_threshold(detection_scores(*model, spec, clean), fpr);
    return Detector({std::move(model), spec, tau, fpr});
  }

  const DetectorConfig& config() const { return config_; }
  double threshold() const { return config_.threshold; }

  double score(const Tensor& image) const { return detection_score(*config_.model, config_.spec, image); }
  bool flags(const Tensor& image) const { return score(image) > config_.threshold; }

  std::vector<char> flags(std::span<const Tensor> images) const {
    const auto s = detection_scores(*config_.model, config_.spec, images);
    std::vector<char> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] > config_.threshold;
    return out;
  }

 private:
  DetectorConfig config_;
};

}  // namespace rpfgsm::detector
