#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "rpfgsm/attacks/common.hpp"
#include "rpfgsm/models/model.hpp"

namespace rpfgsm::attacks {

// --- JSMA --------------------------------------------------------------------

/// Zero when the target gradient is negative or the other classes' summed
/// gradient is positive; otherwise target_grad * |others_grad|.
inline double jsma_saliency(double target_grad, double others_grad) {
  if (target_grad < 0 || others_grad > 0) return 0.0;
  return target_grad * std::abs(others_grad);
}

namespace detail {

inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Logits of one image and the gradients of the selected logit combinations.
inline std::vector<Tensor> logit_vjps(const models::ModelParams& model, const Tensor& image,
                                      const std::vector<Tensor>& seeds, std::vector<double>& z) {
  const ad::Bindings bindings{{"x", image}};
  const ad::Tape tape(model.logits(ad::leaf("x")), bindings);
  z = tape.output().values();
  std::vector<Tensor> out;
  for (const auto& s : seeds) out.push_back(tape.vjp(s, {"x"}).at("x"));
  return out;
}

}  // namespace detail

/// Saliency-map attack on the logits. Each iteration raises by one intensity
/// unit the (at most) two elements with the highest positive saliency,
/// skipping saturated ones; ties go to the lower index. Stops once the target
/// is predicted, when no element has positive saliency, or when another
/// iteration would exceed `pixel_budget` increments.
inline AdversarialResult run_jsma(const models::ModelParams& model, const Tensor& image,
                                  int target, std::size_t pixel_budget) {
  model.require_input(image);
  const std::size_t d = model.classes();
  if (target < 0 || static_cast<std::size_t>(target) >= d) throw AttackError("jsma target out of range");
  std::vector<double> z;
  Tensor seed_t({1, d}, 0.0), seed_o({1, d}, 1.0);
  seed_t[static_cast<std::size_t>(target)] = 1.0;
  seed_o[static_cast<std::size_t>(target)] = 0.0;

  AdversarialResult result;
  result.target = target;
  Tensor x = image;
  auto grads = detail::logit_vjps(model, x, {seed_t, seed_o}, z);
  if (detail::argmax(z) == target) throw AttackError("jsma target equals the predicted class");

  std::size_t used = 0;
  while (used + 2 <= pixel_budget) {
    std::ptrdiff_t best[2] = {-1, -1};
    double score[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] >= 255.0) continue;
      const double s = jsma_saliency(grads[0][i], grads[1][i]);
      if (s <= 0) continue;
      if (s > score[0]) {
        best[1] = best[0], score[1] = score[0];
        best[0] = static_cast<std::ptrdiff_t>(i), score[0] = s;
      } else if (s > score[1]) {
        best[1] = static_cast<std::ptrdiff_t>(i), score[1] = s;
      }
    }
    if (best[0] < 0) break;
    for (auto b : best) {
      if (b < 0) continue;
      x[static_cast<std::size_t>(b)] += 1.0;
      ++used;
    }
    grads = detail::logit_vjps(model, x, {seed_t, seed_o}, z);
    result.trace.push_back({{0}, {}, detail::argmax(z)});
    if (result.trace.back().predicted == target) break;
  }
  result.image = x;
  result.linf = linf_distance(x, image);
  return result;
}

// --- DeepFool ----------------------------------------------------------------

/// Class scores at a point and their gradients (one row per class).
struct Linearization {
  std::vector<double> logits;
  std::vector<std::vector<double>> gradients;
};

using LinearizeFn = std::function<Linearization(const std::vector<double>&)>;
using ProjectFn = std::function<std::vector<double>(std::vector<double>)>;

struct DeepFoolPath {
  std::vector<double> point;
  int original_class = -1;
  std::vector<int> classes;  // predicted class after each step
};

/// Multiclass DeepFool: at each point, step onto the nearest linearized
/// boundary, r_i = |f_l| / ||w_l||^2 * w_l with f_l = z_l - z_k0 and
/// w_l = grad z_l - grad z_k0; the next point is x0 + (1 + eta) * sum r_i,
/// passed through `project` when given. Stops when the class differs from
/// `reference` (default: the class at x0) or after `max_iterations`.
inline DeepFoolPath deepfool_point(const LinearizeFn& f, const std::vector<double>& x0,
                                   double eta = 0.02, std::size_t max_iterations = 50,
                                   const ProjectFn& project = {},
                                   std::optional<int> reference = std::nullopt) {
  DeepFoolPath out;
  out.point = x0;
  Linearization lin = f(x0);
  int cls = detail::argmax(lin.logits);
  const int k0 = reference.value_or(cls);
  out.original_class = k0;
  std::vector<double> total(x0.size(), 0.0);
  for (std::size_t it = 0; it < max_iterations && cls == k0; ++it) {
    double best = INFINITY;
    std::vector<double> step;
    for (std::size_t l = 0; l < lin.logits.size(); ++l) {
      if (static_cast<int>(l) == k0) continue;
      std::vector<double> w(x0.size());
      double norm2 = 0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = lin.gradients[l][i] - lin.gradients[static_cast<std::size_t>(k0)][i];
        norm2 += w[i] * w[i];
      }
      if (norm2 == 0) continue;
      const double fl = std::abs(lin.logits[l] - lin.logits[static_cast<std::size_t>(k0)]);
      const double dist = fl / std::sqrt(norm2);
      if (dist < best) {
        best = dist;
        for (double& v : w) v *= fl / norm2;
        step = std::move(w);
      }
    }
    if (step.empty()) break;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += step[i];
    std::vector<double> next(x0.size());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = x0[i] + (1 + eta) * total[i];
    out.point = project ? project(std::move(next)) : std::move(next);
    lin = f(out.point);
    cls = detail::argmax(lin.logits);
    out.classes.push_back(cls);
  }
  return out;
}

/// DeepFool on a model. Points are clamped to [0,255] and rounded, so the
/// stopping test is made on the image actually returned.
inline AdversarialResult run_deepfool(const models::ModelParams& model, const Tensor& image,
                                      double eta = 0.02,
                                      std::optional<int> reference = std::nullopt,
                                      std::size_t max_iterations = 50) {
  model.require_input(image);
  const std::size_t d = model.classes();
  std::vector<Tensor> seeds;
  for (std::size_t c = 0; c < d; ++c) {
    Tensor s({1, d}, 0.0);
    s[c] = 1.0;
    seeds.push_back(std::move(s));
  }
  const Shape shape = image.shape();
  LinearizeFn f = [&](const std::vector<double>& p) {
    Linearization lin;
    const auto grads = detail::logit_vjps(model, Tensor(shape, p), seeds, lin.logits);
    for (const auto& g : grads) lin.gradients.push_back(g.values());
    return lin;
  };
  ProjectFn project = [](std::vector<double> p) {
    for (double& v : p) v = std::clamp(std::round(v), 0.0, 255.0);
    return p;
  };
  const auto path = deepfool_point(f, image.values(), eta, max_iterations, project, reference);
  AdversarialResult result;
  result.image = Tensor(shape, path.point);
  for (int cls : path.classes) result.trace.push_back({{0}, {}, cls});
  result.linf = linf_distance(result.image, image);
  return result;
}

}  // namespace rpfgsm::attacks
