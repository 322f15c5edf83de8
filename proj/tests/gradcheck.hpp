#pragma once

// Finite-difference sweep over every autodiff primitive, shared by the unit
// tests and the acceptance runner.

#include <optional>
#include <string>
#include <vector>

#include "support.hpp"

namespace rpfgsm::testing {

struct PrimitiveCheck {
  std::string primitive;
  double worst = 0.0;
  std::size_t checked = 0;
};

namespace detail {

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.integer(static_cast<long>(lo), static_cast<long>(hi)));
}

/// Builds one random case: a scalar expression over leaf "x" (and maybe
/// more leaves) plus its bindings. Every leaf is checked.
struct Case {
  ad::Expr out;
  std::optional<Tensor> weights;  // checked scalar: sum(out * weights)
  ad::Bindings bindings;
  std::vector<std::string> leaves;

  void weigh(ad::Expr e, const Shape& shape, Rng& rng) {
    out = std::move(e);
    weights = random_tensor(shape, rng, 0.5, 1.5);
  }
};

// Linear primitives are checked on small inputs: their gradients do not depend
// on the input, and small outputs keep the differences' rounding error low.
inline constexpr double kSmall = 0.01;

inline Case make_case(const std::string& op, Rng& rng) {
  using namespace ad;
  Case c;
  const Expr x = leaf("x");
  auto bind = [&](const std::string& name, Tensor t) {
    c.bindings[name] = std::move(t);
    c.leaves.push_back(name);
  };
  const std::size_t a = dim(rng, 1, 4), b = dim(rng, 1, 5);
  if (op == "add" || op == "sub" || op == "mul") {
    const bool broadcast = rng.bernoulli(0.5);
    bind("x", random_tensor({a, b}, rng, -kSmall, kSmall));
    bind("y", random_tensor(broadcast ? Shape{b} : Shape{a, b}, rng, -kSmall, kSmall));
    const Expr y = leaf("y");
    const Expr out = op == "add" ? add(x, y) : op == "sub" ? sub(x, y) : mul(x, y);
    c.weigh(out, {a, b}, rng);
  } else if (op == "scale") {
    bind("x", random_tensor({a, b}, rng, -kSmall, kSmall));
    c.weigh(scale(x, rng.uniform(-2, 2)), {a, b}, rng);
  } else if (op == "add_scalar") {
    bind("x", random_tensor({a, b}, rng, -kSmall, kSmall));
    c.weigh(add_scalar(x, rng.uniform(-kSmall, kSmall)), {a, b}, rng);
  } else if (op == "matmul") {
    const std::size_t k = dim(rng, 1, 5);
    bind("x", random_tensor({a, k}, rng, -0.1, 0.1));
    bind("w", random_tensor({k, b}, rng, -0.1, 0.1));
    c.weigh(matmul(x, leaf("w")), {a, b}, rng);
  } else if (op == "conv2d") {
    const std::size_t n = dim(rng, 1, 2), ci = dim(rng, 1, 3), co = dim(rng, 1, 3);
    const std::size_t k = rng.bernoulli(0.5) ? 3 : 1, h = dim(rng, 3, 6), w = dim(rng, 3, 6);
    bind("x", random_tensor({n, ci, h, w}, rng, -0.1, 0.1));
    bind("w", random_tensor({co, ci, k, k}, rng, -0.1, 0.1));
    bind("b", random_tensor({co}, rng, -kSmall, kSmall));
    c.weigh(conv2d(x, leaf("w"), leaf("b")), {n, co, h, w}, rng);
  } else if (op == "relu") {
    Tensor t = random_tensor({a, b}, rng);
    for (double& v : t.data()) v += v >= 0 ? 1e-3 : -1e-3;
    bind("x", std::move(t));
    c.weigh(relu(x), {a, b}, rng);
  } else if (op == "maxpool2") {
    const std::size_t ch = dim(rng, 1, 2), h = 2 * dim(rng, 1, 3), w = 2 * dim(rng, 1, 3);
    bind("x", well_separated({1, ch, h, w}, rng));
    c.weigh(maxpool2(x), {1, ch, h / 2, w / 2}, rng);
  } else if (op == "softmax") {
    bind("x", random_tensor({a, b + 1}, rng, -2, 2));
    c.weigh(softmax(x), {a, b + 1}, rng);
  } else if (op == "softmax_cross_entropy") {
    std::vector<int> labels(a);
    for (auto& l : labels) l = static_cast<int>(rng.index(b + 1));
    bind("x", random_tensor({a, b + 1}, rng, -2, 2));
    c.out = softmax_cross_entropy(x, labels);
  } else if (op == "reshape") {
    bind("x", random_tensor({a, b}, rng, -kSmall, kSmall));
    c.weigh(reshape(x, {b, a}), {b, a}, rng);
  } else if (op == "bilinear") {
    const std::size_t h = dim(rng, 2, 5), w = dim(rng, 2, 5), oh = dim(rng, 1, 4), ow = dim(rng, 1, 4);
    auto grid = std::make_shared<Tensor>(random_tensor({oh, ow, 2}, rng, -0.7, 5.0));
    bind("x", random_tensor({2, h, w}, rng, -kSmall, kSmall));
    c.weigh(bilinear(x, grid), {2, oh, ow}, rng);
  } else if (op == "dct8" || op == "idct8") {
    const std::size_t h = 8 * dim(rng, 1, 2), w = 8 * dim(rng, 1, 2);
    bind("x", random_tensor({1, h, w}, rng, -kSmall, kSmall));
    c.weigh(op == "dct8" ? dct8(x) : idct8(x), {1, h, w}, rng);
  } else if (op == "round_cubic") {
    Tensor t({a, b});
    for (double& v : t.data()) v = static_cast<double>(rng.integer(-5, 5)) +
                                       (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.05, 0.49);
    bind("x", std::move(t));
    c.weigh(round_cubic(x), {a, b}, rng);
  } else if (op == "clamp") {
    Tensor t = random_tensor({a, b}, rng, -2, 2);
    for (double& v : t.data()) {
      if (std::abs(std::abs(v) - 1.0) < 1e-3) v *= 1.01;
    }
    bind("x", std::move(t));
    c.weigh(clamp(x, -1.0, 1.0), {a, b}, rng);
  } else if (op == "median") {
    const int k = std::array<int, 3>{2, 3, 5}[rng.index(3)];
    const std::size_t h = dim(rng, 2, 6), w = dim(rng, 2, 6);
    bind("x", well_separated({2, h, w}, rng));
    c.weigh(median(x, k), {2, h, w}, rng);
  } else if (op == "pow") {
    bind("x", random_tensor({a, b}, rng, 0.5, 2.0));
    c.weigh(pow(x, rng.uniform(-2.5, 3.5)), {a, b}, rng);
  } else if (op == "sum") {
    bind("x", random_tensor({a, b}, rng));
    c.out = sum(x);
  } else if (op == "mean") {
    bind("x", random_tensor({a, b}, rng));
    c.out = mean(x);
  } else if (op == "map") {
    auto fn = std::make_shared<const UnaryFn>(
        UnaryFn{"sin", [](double v) { return std::sin(v); }, [](double v) { return std::cos(v); }});
    bind("x", random_tensor({a, b}, rng, -3, 3));
    c.weigh(map(x, fn), {a, b}, rng);
  } else if (op == "channel_mix") {
    const std::size_t h = dim(rng, 1, 4), w = dim(rng, 1, 4);
    bind("x", random_tensor({3, h, w}, rng, -kSmall, kSmall));
    c.weigh(channel_mix(x, random_tensor({3, 3}, rng), random_tensor({3}, rng, -kSmall, kSmall)),
            {3, h, w}, rng);
  } else {
    throw Error("no gradient case for primitive '" + op + "'");
  }
  return c;
}

}  // namespace detail

inline std::vector<std::string> differentiable_primitives() {
  return {"add",  "sub",     "mul",    "scale",  "add_scalar",  "matmul", "conv2d",
          "relu", "maxpool2", "softmax", "softmax_cross_entropy", "reshape", "bilinear",
          "dct8", "idct8",    "round_cubic", "clamp", "median", "pow",   "sum",
          "mean", "map",      "channel_mix"};
}

/// `trials` random cases per primitive; worst relative error over every leaf
/// entry whose gradient magnitude exceeds 1e-8.
inline std::vector<PrimitiveCheck> check_all_primitives(std::size_t trials, std::uint64_t seed) {
  std::vector<PrimitiveCheck> out;
  Rng rng(seed);
  for (const auto& op : differentiable_primitives()) {
    PrimitiveCheck pc{op};
    for (std::size_t t = 0; t < trials; ++t) {
      const auto c = detail::make_case(op, rng);
      for (const auto& name : c.leaves) {
        const auto r = finite_difference_check(c.out, c.weights, c.bindings, name);
        pc.worst = std::max(pc.worst, r.worst);
        pc.checked += r.checked;
      }
    }
    out.push_back(pc);
  }
  return out;
}

}  // namespace rpfgsm::testing
