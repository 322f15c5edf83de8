#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "rpfgsm/image.hpp"
#include "rpfgsm/transforms/spec.hpp"

namespace rpfgsm::attacks {

enum class Mode { targeted, untargeted };

inline const char* mode_name(Mode m) { return m == Mode::targeted ? "targeted" : "untargeted"; }

class AttackError : public Error {
 public:
  using Error::Error;
};

/// One iteration: the classifiers whose gradients were used, the transform
/// applied before them, and the first such classifier's predicted class on the
/// transformed iterate.
struct TraceStep {
  std::vector<int> classifiers;
  transforms::TransformSpec transform;
  int predicted = -1;

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

struct AdversarialResult {
  Tensor image;
  std::optional<int> target;
  std::vector<TraceStep> trace;
  double linf = 0.0;

  friend bool operator==(const AdversarialResult&, const AdversarialResult&) = default;
};

/// min{255, x + eps, max{0, x - eps, candidate}} elementwise.
inline Tensor clip_to_neighborhood(const Tensor& original, const Tensor& candidate, double eps) {
  if (original.shape() != candidate.shape()) {
    throw ShapeError("clip: shape mismatch " + shape_string(original.shape()) + " vs " +
                     shape_string(candidate.shape()));
  }
  Tensor out(candidate.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = original[i];
    out[i] = std::min({255.0, x + eps, std::max({0.0, x - eps, candidate[i]})});
  }
  return out;
}

inline double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

/// delta * sign(grad) untargeted, -delta * sign(grad) targeted.
inline Tensor perturbation_step(const Tensor& grad, double delta, Mode mode) {
  if (!(delta > 0)) throw AttackError("step size must be positive");
  const double s = mode == Mode::targeted ? -delta : delta;
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * sign(grad[i]);
  return out;
}

/// Base iteration count round(min(1.25 eps, eps + 4)), at least 1.
inline std::size_t base_iterations(double eps) {
  if (!(eps >= 1)) throw AttackError("epsilon must be at least 1");
  return static_cast<std::size_t>(std::max(1L, std::lround(std::min(1.25 * eps, eps + 4))));
}

/// Iterations for a run over K classifiers: the base count, times K when one
/// classifier is drawn per iteration.
inline std::size_t iterations_for(double eps, std::size_t k, bool random_selection) {
  if (k == 0) throw AttackError("need at least one classifier");
  return base_iterations(eps) * (random_selection ? k : 1);
}

/// Final output: iterate rounded to integers and clipped again with the
/// integer part of eps.
inline Tensor finalize(const Tensor& original, const Tensor& iterate, double eps) {
  return clip_to_neighborhood(original, quantize_pixels(iterate), std::floor(eps));
}

}  // namespace rpfgsm::attacks
