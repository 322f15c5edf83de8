#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "rpfgsm/attacks/common.hpp"
#include "rpfgsm/models/model.hpp"
#include "rpfgsm/random.hpp"

namespace rpfgsm::attacks {

using models::PredictionVector;

/// Classes at sorted rank j+1 for every j in [1, D-1] whose top-j cumulative
/// probability exceeds gamma. Ascending class order.
inline std::vector<int> candidate_set(const PredictionVector& p, double gamma) {
  const auto order = p.ranking();
  std::vector<int> out;
  double cumulative = 0.0;
  for (std::size_t j = 1; j < order.size(); ++j) {
    cumulative += p[static_cast<std::size_t>(order[j - 1])];
    if (cumulative > gamma) out.push_back(order[j]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Intersection of the per-classifier candidate sets.
inline std::vector<int> candidate_targets(const std::vector<PredictionVector>& predictions,
                                          double gamma) {
  if (predictions.empty()) throw AttackError("target selection needs at least one prediction");
  if (!(gamma >= 0 && gamma <= 1)) throw AttackError("gamma must be in [0,1]");
  std::vector<int> common = candidate_set(predictions[0], gamma);
  for (std::size_t k = 1; k < predictions.size(); ++k) {
    if (predictions[k].size() != predictions[0].size()) {
      throw AttackError("classifiers disagree on the number of classes");
    }
    const auto next = candidate_set(predictions[k], gamma);
    std::vector<int> both;
    std::set_intersection(common.begin(), common.end(), next.begin(), next.end(),
                          std::back_inserter(both));
    common = std::move(both);
  }
  return common;
}

/// Uniform draw from the candidate intersection. An empty intersection is
/// retried with gamma relaxed through 0.99, 0.9, 0.5, 0.1, 0 (values below the
/// requested gamma, largest first).
inline int select_target_class(const std::vector<PredictionVector>& predictions, double gamma,
                               Rng& rng) {
  auto candidates = candidate_targets(predictions, gamma);
  constexpr std::array<double, 5> kRelaxed = {0.99, 0.9, 0.5, 0.1, 0.0};
  for (double g : kRelaxed) {
    if (!candidates.empty()) break;
    if (g < gamma) candidates = candidate_targets(predictions, g);
  }
  if (candidates.empty()) {
    throw AttackError("no target class: every class is predicted by some classifier");
  }
  return candidates[rng.index(candidates.size())];
}

/// Uniform draw among classes that no classifier predicts.
inline int select_unpredicted_class(const std::vector<PredictionVector>& predictions, Rng& rng) {
  const std::size_t d = predictions.at(0).size();
  std::vector<char> predicted(d, 0);
  for (const auto& p : predictions) predicted[static_cast<std::size_t>(p.argmax())] = 1;
  std::vector<int> free;
  for (std::size_t c = 0; c < d; ++c) {
    if (!predicted[c]) free.push_back(static_cast<int>(c));
  }
  if (free.empty()) throw AttackError("no target class: every class is predicted by some classifier");
  return free[rng.index(free.size())];
}

/// Least likely class other than the predicted one, lowest index on ties.
inline int least_likely_class(const PredictionVector& p) {
  const int top = p.argmax();
  int best = -1;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (static_cast<int>(c) == top) continue;
    if (best < 0 || p[c] < p[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  if (best < 0) throw AttackError("least-likely target needs at least two classes");
  return best;
}

}  // namespace rpfgsm::attacks
