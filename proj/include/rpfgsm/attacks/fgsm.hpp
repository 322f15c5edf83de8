#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rpfgsm/attacks/common.hpp"
#include "rpfgsm/attacks/target.hpp"
#include "rpfgsm/models/gradient.hpp"
#include "rpfgsm/transforms/transforms.hpp"

namespace rpfgsm::attacks {

enum class Variant { u_fgsm, r_fgsm, l_fgsm, p_fgsm, e_fgsm, di_fgsm, eot, rp_fgsm };

/// rp-fgsm classifier choice per iteration: one drawn at random, or the sum
/// over all of them.
enum class Selection { random, ensemble };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::u_fgsm: return "u-fgsm";
    case Variant::r_fgsm: return "r-fgsm";
    case Variant::l_fgsm: return "l-fgsm";
    case Variant::p_fgsm: return "p-fgsm";
    case Variant::e_fgsm: return "e-fgsm";
    case Variant::di_fgsm: return "di-fgsm";
    case Variant::eot: return "eot";
    case Variant::rp_fgsm: return "rp-fgsm";
  }
  return "?";
}

inline Variant parse_variant(const std::string& name) {
  for (int v = 0; v <= static_cast<int>(Variant::rp_fgsm); ++v) {
    if (name == variant_name(static_cast<Variant>(v))) return static_cast<Variant>(v);
  }
  throw AttackError("unknown attack variant '" + name + "'");
}

inline Mode default_mode(Variant v) {
  return v == Variant::u_fgsm ? Mode::untargeted : Mode::targeted;
}

using ModelHandle = std::shared_ptr<const models::ModelParams>;

struct AttackConfig {
  Variant variant = Variant::rp_fgsm;
  Mode mode = Mode::targeted;
  double epsilon = 16.0;
  double delta = 1.0;
  std::size_t iterations = 0;  // 0: derived from epsilon and K
  double gamma = 0.99;
  std::uint64_t seed = 0;
  std::vector<ModelHandle> classifiers;
  transforms::TransformSet transforms = transforms::defense_set();
  Selection selection = Selection::random;
  double di_probability = 0.5;
  double eot_lambda = 0.5;
  transforms::TransformSet eot_transforms = transforms::eot_set();
  std::optional<int> target;  // fixed target instead of the variant's rule
};

inline bool single_classifier(Variant v) {
  return v == Variant::u_fgsm || v == Variant::r_fgsm || v == Variant::l_fgsm ||
         v == Variant::p_fgsm || v == Variant::eot;
}

inline void validate(const AttackConfig& c) {
  const std::string name = variant_name(c.variant);
  if (!(c.epsilon > 0)) throw AttackError("epsilon must be positive");
  if (!(c.delta > 0)) throw AttackError("delta must be positive");
  if (!(c.gamma >= 0 && c.gamma <= 1)) throw AttackError("gamma must be in [0,1]");
  if (c.classifiers.empty()) throw AttackError(name + " needs at least one classifier");
  for (const auto& m : c.classifiers) {
    if (!m) throw AttackError(name + ": null classifier handle");
  }
  if (single_classifier(c.variant) && c.classifiers.size() != 1) {
    throw AttackError(name + " attacks exactly one classifier, got " +
                      std::to_string(c.classifiers.size()));
  }
  if (c.variant == Variant::u_fgsm && c.mode != Mode::untargeted) {
    throw AttackError("u-fgsm is untargeted");
  }
  if ((c.variant == Variant::r_fgsm || c.variant == Variant::l_fgsm ||
       c.variant == Variant::p_fgsm) && c.mode != Mode::targeted) {
    throw AttackError(name + " is targeted");
  }
  if (c.variant == Variant::rp_fgsm && c.transforms.empty()) {
    throw AttackError("rp-fgsm needs a nonempty transform set");
  }
  if (c.variant == Variant::eot && c.eot_transforms.empty()) {
    throw AttackError("eot needs a nonempty transform set");
  }
  if (!(c.di_probability >= 0 && c.di_probability <= 1)) {
    throw AttackError("di probability must be in [0,1]");
  }
  if (c.target && c.mode != Mode::targeted) throw AttackError("fixed target given to an untargeted attack");
}

/// Total iterations the config will run.
inline std::size_t planned_iterations(const AttackConfig& c) {
  if (c.iterations) return c.iterations;
  const bool random = c.variant == Variant::rp_fgsm && c.selection == Selection::random;
  return iterations_for(c.epsilon, c.classifiers.size(), random);
}

namespace detail {

inline int pick_target(const AttackConfig& c, const std::vector<PredictionVector>& clean,
                       Rng& rng) {
  if (c.target) {
    const int t = *c.target;
    if (t < 0 || static_cast<std::size_t>(t) >= clean[0].size()) {
      throw AttackError("target class " + std::to_string(t) + " out of range");
    }
    for (const auto& p : clean) {
      if (p.argmax() == t) throw AttackError("target class equals a predicted class");
    }
    return t;
  }
  switch (c.variant) {
    case Variant::l_fgsm: return least_likely_class(clean[0]);
    case Variant::p_fgsm:
    case Variant::rp_fgsm: return select_target_class(clean, c.gamma, rng);
    default: return select_unpredicted_class(clean, rng);
  }
}

/// Resize to r x r (r uniform over [7W/8, W)) at a random offset, zero padded.
inline transforms::TransformSpec draw_resize_pad(std::size_t side, Rng& rng) {
  const long w = static_cast<long>(side);
  const long r = rng.integer(std::max(1L, w * 7 / 8), std::max(1L, w - 1));
  transforms::TransformSpec s{transforms::TransformKind::resize_pad, double(r)};
  s.param2 = static_cast<double>(rng.integer(0, w - r));
  s.param3 = static_cast<double>(rng.integer(0, w - r));
  return s;
}

}  // namespace detail

/// Runs one FGSM-family attack on a [c,h,w] image. `image_index` selects the
/// per-image random stream derived from the config's seed.
///
/// Random draws, in order: the target class, then per iteration the classifier
/// (rp-fgsm, random selection), the transform (rp-fgsm, eot) or the resize
/// coin, side and offsets (di-fgsm).
inline AdversarialResult run_fgsm_attack(const AttackConfig& c, const Tensor& image,
                                         std::uint64_t image_index = 0) {
  validate(c);
  require_image(image);
  for (const auto& m : c.classifiers) m->require_input(image);
  Rng rng = Rng::derive(c.seed, image_index);
  const std::size_t k = c.classifiers.size();

  std::vector<PredictionVector> clean;
  for (const auto& m : c.classifiers) clean.push_back(models::predict(*m, image));

  AdversarialResult result;
  std::vector<int> labels(k);
  if (c.mode == Mode::targeted) {
    result.target = detail::pick_target(c, clean, rng);
    labels.assign(k, *result.target);
  } else {
    for (std::size_t i = 0; i < k; ++i) labels[i] = clean[i].argmax();
  }

  std::vector<int> all(k);
  for (std::size_t i = 0; i < k; ++i) all[i] = static_cast<int>(i);
  const std::size_t iterations = planned_iterations(c);
  const Shape& shape = image.shape();

  Tensor x = image;
  result.trace.reserve(iterations);
  for (std::size_t n = 0; n < iterations; ++n) {
    TraceStep step;
    step.classifiers = all;
    switch (c.variant) {
      case Variant::u_fgsm:
      case Variant::r_fgsm:
      case Variant::l_fgsm:
      case Variant::p_fgsm:
      case Variant::e_fgsm:
        break;
      case Variant::di_fgsm:
        if (rng.bernoulli(c.di_probability)) step.transform = detail::draw_resize_pad(shape[2], rng);
        break;
      case Variant::eot:
        step.transform = transforms::sample_transform(c.eot_transforms, rng);
        break;
      case Variant::rp_fgsm:
        if (c.selection == Selection::random) step.classifiers = {static_cast<int>(rng.index(k))};
        step.transform = transforms::sample_transform(c.transforms, rng);
        break;
    }

    const ad::Expr input = ad::leaf("x");
    const ad::Expr moved = transforms::apply(step.transform, input, shape, transforms::Rounding::surrogate);
    ad::Expr total;
    ad::Expr first_logits;
    for (int idx : step.classifiers) {
      const auto& model = *c.classifiers[static_cast<std::size_t>(idx)];
      ad::Expr z = model.logits(moved);
      if (!first_logits) first_logits = z;
      ad::Expr l = ad::softmax_cross_entropy(z, {labels[static_cast<std::size_t>(idx)]});
      total = total ? total + l : l;
    }
    if (c.variant == Variant::eot && c.eot_lambda != 0) {
      // perceptual term: Lab distance between transformed original and iterate
      const Tensor reference = ad::evaluate(
          transforms::rgb_to_lab(transforms::apply(step.transform, ad::leaf("x"), shape,
                                                   transforms::Rounding::surrogate)),
          {{"x", image}});
      ad::Expr diff = transforms::rgb_to_lab(moved) - ad::constant(reference);
      ad::Expr dist = ad::pow(ad::add_scalar(ad::sum(ad::pow(diff, 2.0)), 1e-12), 0.5);
      const double lambda = c.mode == Mode::targeted ? c.eot_lambda : -c.eot_lambda;
      total = total + ad::scale(dist, lambda);
    }

    const ad::Bindings bindings{{"x", x}};
    const ad::Tape tape(total, bindings);
    const Tensor grad = tape.gradient({"x"}).at("x");
    const Tensor& z = tape.value(first_logits);
    step.predicted = static_cast<int>(std::max_element(z.data().begin(), z.data().end()) -
                                      z.data().begin());
    const Tensor delta = perturbation_step(grad, c.delta, c.mode);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += delta[i];
    x = clip_to_neighborhood(image, x, c.epsilon);
    result.trace.push_back(std::move(step));
  }

  result.image = finalize(image, x, c.epsilon);
  result.linf = linf_distance(result.image, image);
  return result;
}

}  // namespace rpfgsm::attacks
