#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rpfgsm/tensor.hpp"

namespace rpfgsm::ad {

enum class Op {
  leaf,
  constant,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  matmul,
  conv2d,
  relu,
  maxpool2,
  softmax,
  softmax_xent,
  reshape,
  bilinear,
  dct8,
  idct8,
  round_cubic,
  round,
  clamp,
  median,
  pow,
  sum,
  mean,
  map,
  channel_mix,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::matmul: return "matmul";
    case Op::conv2d: return "conv2d";
    case Op::relu: return "relu";
    case Op::maxpool2: return "maxpool2";
    case Op::softmax: return "softmax";
    case Op::softmax_xent: return "softmax_xent";
    case Op::reshape: return "reshape";
    case Op::bilinear: return "bilinear";
    case Op::dct8: return "dct8";
    case Op::idct8: return "idct8";
    case Op::round_cubic: return "round_cubic";
    case Op::round: return "round";
    case Op::clamp: return "clamp";
    case Op::median: return "median";
    case Op::pow: return "pow";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::map: return "map";
    case Op::channel_mix: return "channel_mix";
  }
  return "?";
}

/// Elementwise scalar function with its derivative, used by Op::map.
struct UnaryFn {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
};

class Expr;

struct Node {
  Op op = Op::constant;
  std::uint64_t id = 0;
  std::vector<Expr> inputs;
  std::string name;                       // leaf
  std::shared_ptr<const Tensor> tensor;   // constant value, sampling grid, mixing matrix
  std::shared_ptr<const Tensor> tensor2;  // mixing offset
  std::vector<double> scalars;
  std::vector<int> labels;
  Shape shape;  // reshape target
  std::shared_ptr<const UnaryFn> fn;

  std::string describe() const {
    std::string s = "node #" + std::to_string(id) + " (" + op_name(op);
    if (op == Op::leaf) s += " '" + name + "'";
    return s + ")";
  }
};

/// Immutable handle to a node of an expression DAG.
class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  const Node& node() const { return *node_; }
  const Node* get() const { return node_.get(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<const Node> node_;
};

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline Expr make(Node node) {
  node.id = next_node_id();
  return Expr(std::make_shared<const Node>(std::move(node)));
}

inline Expr make(Op op, std::vector<Expr> inputs, std::vector<double> scalars = {}) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.scalars = std::move(scalars);
  return make(std::move(n));
}

}  // namespace detail

inline Expr leaf(std::string name) {
  Node n;
  n.op = Op::leaf;
  n.name = std::move(name);
  return detail::make(std::move(n));
}

inline Expr constant(std::shared_ptr<const Tensor> value) {
  Node n;
  n.op = Op::constant;
  n.tensor = std::move(value);
  return detail::make(std::move(n));
}

inline Expr constant(Tensor value) {
  return constant(std::make_shared<const Tensor>(std::move(value)));
}

/// Elementwise a + b; b may also have a shape equal to a trailing suffix of a's shape.
inline Expr add(Expr a, Expr b) { return detail::make(Op::add, {std::move(a), std::move(b)}); }
inline Expr sub(Expr a, Expr b) { return detail::make(Op::sub, {std::move(a), std::move(b)}); }
inline Expr mul(Expr a, Expr b) { return detail::make(Op::mul, {std::move(a), std::move(b)}); }
inline Expr scale(Expr a, double c) { return detail::make(Op::scale, {std::move(a)}, {c}); }
inline Expr add_scalar(Expr a, double c) {
  return detail::make(Op::add_scalar, {std::move(a)}, {c});
}

inline Expr operator+(Expr a, Expr b) { return add(std::move(a), std::move(b)); }
inline Expr operator-(Expr a, Expr b) { return sub(std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return mul(std::move(a), std::move(b)); }
inline Expr operator*(double c, Expr a) { return scale(std::move(a), c); }

/// [n,k] x [k,m] -> [n,m]
inline Expr matmul(Expr a, Expr b) {
  return detail::make(Op::matmul, {std::move(a), std::move(b)});
}

/// Stride-1 "same" convolution. x: [n,c,h,w], weight: [o,c,k,k] (k odd), bias: [o].
inline Expr conv2d(Expr x, Expr weight, Expr bias) {
  return detail::make(Op::conv2d, {std::move(x), std::move(weight), std::move(bias)});
}

inline Expr relu(Expr x) { return detail::make(Op::relu, {std::move(x)}); }

/// 2x2 stride-2 max pooling over the last two axes of [n,c,h,w].
inline Expr maxpool2(Expr x) { return detail::make(Op::maxpool2, {std::move(x)}); }

/// Softmax over the last axis.
inline Expr softmax(Expr x) { return detail::make(Op::softmax, {std::move(x)}); }

/// Mean over the batch of -log softmax(logits)[label]. logits: [n,d], one label per row.
inline Expr softmax_cross_entropy(Expr logits, std::vector<int> labels) {
  Node n;
  n.op = Op::softmax_xent;
  n.inputs = {std::move(logits)};
  n.labels = std::move(labels);
  return detail::make(std::move(n));
}

inline Expr reshape(Expr x, Shape shape) {
  Node n;
  n.op = Op::reshape;
  n.inputs = {std::move(x)};
  n.shape = std::move(shape);
  return detail::make(std::move(n));
}

/// Bilinear resampling of the last two axes. grid: [ho,wo,2] of (row, col) source
/// coordinates; neighbours outside the input contribute zero.
inline Expr bilinear(Expr x, std::shared_ptr<const Tensor> grid) {
  Node n;
  n.op = Op::bilinear;
  n.inputs = {std::move(x)};
  n.tensor = std::move(grid);
  return detail::make(std::move(n));
}

/// Blockwise orthonormal 8x8 type-II DCT over the last two axes (multiples of 8).
inline Expr dct8(Expr x) { return detail::make(Op::dct8, {std::move(x)}); }
inline Expr idct8(Expr x) { return detail::make(Op::idct8, {std::move(x)}); }

/// round(x) + (x - round(x))^3
inline Expr round_cubic(Expr x) { return detail::make(Op::round_cubic, {std::move(x)}); }

/// Exact rounding; its derivative is zero everywhere.
inline Expr round(Expr x) { return detail::make(Op::round, {std::move(x)}); }

inline Expr clamp(Expr x, double lo, double hi) {
  return detail::make(Op::clamp, {std::move(x)}, {lo, hi});
}

/// k x k median over the last two axes with reflect padding (k = 2 covers the
/// pixel and its right/down neighbours).
inline Expr median(Expr x, int k) {
  return detail::make(Op::median, {std::move(x)}, {static_cast<double>(k)});
}

inline Expr pow(Expr x, double p) { return detail::make(Op::pow, {std::move(x)}, {p}); }
inline Expr sum(Expr x) { return detail::make(Op::sum, {std::move(x)}); }
inline Expr mean(Expr x) { return detail::make(Op::mean, {std::move(x)}); }

inline Expr map(Expr x, std::shared_ptr<const UnaryFn> fn) {
  Node n;
  n.op = Op::map;
  n.inputs = {std::move(x)};
  n.fn = std::move(fn);
  return detail::make(std::move(n));
}

/// Per-pixel affine map across the channel axis of [c,h,w] or [n,c,h,w]:
/// out[o] = sum_c matrix[o,c] * x[c] + offset[o].
inline Expr channel_mix(Expr x, Tensor matrix, Tensor offset) {
  Node n;
  n.op = Op::channel_mix;
  n.inputs = {std::move(x)};
  n.tensor = std::make_shared<const Tensor>(std::move(matrix));
  n.tensor2 = std::make_shared<const Tensor>(std::move(offset));
  return detail::make(std::move(n));
}

}  // namespace rpfgsm::ad
