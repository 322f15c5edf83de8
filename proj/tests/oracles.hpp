#pragma once

// Reference computations shared by the unit tests and the acceptance runner.

#include <set>

#include "support.hpp"

namespace rpfgsm::testing {

/// Target candidates by brute force: class c qualifies when it is not ranked
/// first and the probabilities of every class ranked strictly above it sum to
/// more than gamma; a class's rank counts the classes with a larger
/// probability, or an equal one and a lower index.
inline std::set<int> brute_force_candidates(const std::vector<double>& p, double gamma) {
  std::set<int> out;
  const int d = static_cast<int>(p.size());
  for (int c = 0; c < d; ++c) {
    std::vector<std::pair<double, int>> higher;
    for (int o = 0; o < d; ++o) {
      if (p[o] > p[c] || (p[o] == p[c] && o < c)) higher.push_back({-p[o], o});
    }
    if (higher.empty()) continue;
    // summed largest first, the order a cumulative sum would use
    std::sort(higher.begin(), higher.end());
    double above = 0.0;
    for (const auto& h : higher) above -= h.first;
    if (above > gamma) out.insert(c);
  }
  return out;
}

inline std::set<int> brute_force_intersection(const std::vector<std::vector<double>>& ps, double gamma) {
  std::set<int> common = brute_force_candidates(ps[0], gamma);
  for (std::size_t k = 1; k < ps.size(); ++k) {
    const auto next = brute_force_candidates(ps[k], gamma);
    std::set<int> both;
    for (int c : common) {
      if (next.count(c)) both.insert(c);
    }
    common = both;
  }
  return common;
}

/// Random probability vector of length d. Half of the draws are peaked
/// (softmax of wide logits), and some are coarse so that ties occur.
inline std::vector<double> random_probabilities(std::size_t d, Rng& rng) {
  std::vector<double> p(d);
  const int style = static_cast<int>(rng.index(3));
  double total = 0;
  for (double& v : p) {
    if (style == 0) v = std::exp(rng.uniform(-8, 8));
    else if (style == 1) v = rng.uniform(0, 1);
    else v = static_cast<double>(rng.integer(0, 4));
    total += v;
  }
  if (total == 0) {
    p[rng.index(d)] = 1;
    total = 1;
  }
  for (double& v : p) v /= total;
  return p;
}

/// The two-class linear DeepFool example: logits (0, w.x) with w = (1, 0),
/// starting from x = (2, 0).
inline attacks::DeepFoolPath deepfool_linear_example(double eta = 0.02) {
  const attacks::LinearizeFn f = [](const std::vector<double>& x) {
    return attacks::Linearization{{0.0, x[0]}, {{0.0, 0.0}, {1.0, 0.0}}};
  };
  return attacks::deepfool_point(f, {2.0, 0.0}, eta, 1);
}

}  // namespace rpfgsm::testing
