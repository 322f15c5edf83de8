#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rpfgsm/autodiff/expr.hpp"
#include "rpfgsm/autodiff/kernels.hpp"
#include "rpfgsm/tensor.hpp"

namespace rpfgsm::ad {

class BindingError : public Error {
 public:
  using Error::Error;
};

using Bindings = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;

/// One forward evaluation of an expression, kept around so that any number of
/// reverse passes can be run against it.
///
/// The tape borrows the bound tensors and the expression's constants; both
/// must outlive it.
class Tape {
 public:
  Tape(const Expr& root, const Bindings& bindings) : root_(root) {
    if (!root) throw BindingError("cannot evaluate an empty expression");
    topological_sort(root.get());
    for (const auto& [name, t] : bindings) bound_shapes_[name] = t.shape();
    for (std::size_t s = 0; s < slots_.size(); ++s) forward(s, bindings);
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Tensor& output() const { return *slots_.back().value; }

  /// Forward value of a subexpression that is part of this tape's graph.
  const Tensor& value(const Expr& e) const {
    auto it = index_.find(e.get());
    if (it == index_.end()) throw BindingError("expression is not part of this tape");
    return *slots_[it->second].value;
  }

  /// Calls f(node, first input value or nullptr, value) for every node in
  /// evaluation order.
  template <class F>
  void visit(F&& f) const {
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const Tensor* first = slots_[s].inputs.empty() ? nullptr : &in(s, 0);
      f(*slots_[s].node, first, *slots_[s].value);
    }
  }

  /// Vector-Jacobian product: gradient of <seed, output> w.r.t. the named leaves.
  GradientMap vjp(const Tensor& seed, const std::set<std::string>& wrt) const {
    if (seed.shape() != output().shape()) {
      throw ShapeError("seed shape " + shape_string(seed.shape()) + " does not match output " +
                       shape_string(output().shape()));
    }
    const std::size_t n = slots_.size();
    std::vector<char> needs(n, 0);
    std::set<std::string> present;
    for (std::size_t s = 0; s < n; ++s) {
      const Node& node = *slots_[s].node;
      if (node.op == Op::leaf) {
        present.insert(node.name);
        needs[s] = wrt.count(node.name) ? 1 : 0;
      } else if (node.op != Op::constant && node.op != Op::round) {
        for (std::size_t in : slots_[s].inputs) needs[s] |= needs[in];
      }
    }
    for (const auto& name : wrt) {
      if (!present.count(name) && !bound_shapes_.count(name)) {
        throw BindingError("gradient requested for unbound leaf '" + name + "'");
      }
    }

    std::vector<Tensor> grads(n);
    std::vector<char> has(n, 0);
    auto grad_of = [&](std::size_t s) -> Tensor& {
      if (!has[s]) {
        grads[s] = Tensor(slots_[s].value->shape());
        has[s] = 1;
      }
      return grads[s];
    };
    if (needs[n - 1]) {
      grad_of(n - 1) = seed;
    }
    for (std::size_t s = n; s-- > 0;) {
      if (!needs[s] || !has[s] || slots_[s].node->op == Op::leaf) continue;
      backward(s, grads[s], needs, grad_of);
    }

    // leaves bound but unused by the expression get zero gradients
    GradientMap out;
    for (const auto& name : wrt) {
      out[name] = present.count(name) ? Tensor() : Tensor(bound_shapes_.at(name));
    }
    std::set<std::string> seen;
    for (std::size_t s = 0; s < n; ++s) {
      const Node& node = *slots_[s].node;
      if (node.op != Op::leaf || !wrt.count(node.name)) continue;
      Tensor& dst = out[node.name];
      if (!seen.count(node.name)) {
        dst = Tensor(slots_[s].value->shape());
        seen.insert(node.name);
      }
      if (has[s]) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grads[s][i];
      }
    }
    return out;
  }

  /// Gradient of a scalar output.
  GradientMap gradient(const std::set<std::string>& wrt) const {
    if (output().size() != 1) {
      throw ShapeError("gradient needs a scalar output, got shape " +
                       shape_string(output().shape()));
    }
    return vjp(Tensor(output().shape(), 1.0), wrt);
  }

 private:
  struct Slot {
    const Node* node = nullptr;
    std::vector<std::size_t> inputs;
    const Tensor* value = nullptr;
    std::vector<std::size_t> index;  // argmax / median source
    std::vector<double> buffer;      // im2col columns / softmax probabilities
    std::vector<kernels::BilinearTaps> taps;
  };

  void topological_sort(const Node* root) {
    // iterative post-order DFS
    std::vector<std::pair<const Node*, std::size_t>> stack{{root, 0}};
    std::unordered_map<const Node*, char> visiting;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const Node* child = node->inputs[next++].get();
        if (!child) throw BindingError(node->describe() + ": empty input expression");
        if (index_.count(child)) continue;
        if (visiting[child]) throw BindingError(node->describe() + ": expression is cyclic");
        visiting[child] = 1;
        stack.emplace_back(child, 0);
        continue;
      }
      Slot slot;
      slot.node = node;
      for (const auto& in : node->inputs) slot.inputs.push_back(index_.at(in.get()));
      index_[node] = slots_.size();
      slots_.push_back(std::move(slot));
      stack.pop_back();
    }
  }

  const Tensor& in(std::size_t s, std::size_t i) const { return *slots_[slots_[s].inputs[i]].value; }

  Tensor& own(Tensor t) {
    owned_.push_back(std::move(t));
    return owned_.back();
  }

  [[noreturn]] void shape_fail(const Node& node, const std::string& what) const {
    throw ShapeError(node.describe() + ": " + what);
  }

  static bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
  }

  void check_broadcast(const Node& node, const Tensor& a, const Tensor& b) const {
    if (!is_suffix(b.shape(), a.shape())) {
      shape_fail(node, "cannot combine " + shape_string(a.shape()) + " with " +
                           shape_string(b.shape()));
    }
  }

  void forward(std::size_t s, const Bindings& bindings) {
    Slot& slot = slots_[s];
    const Node& node = *slot.node;
    switch (node.op) {
      case Op::leaf: {
        auto it = bindings.find(node.name);
        if (it == bindings.end()) throw BindingError(node.describe() + ": leaf is not bound");
        slot.value = &it->second;
        return;
      }
      case Op::constant:
        slot.value = node.tensor.get();
        return;
      case Op::add:
      case Op::sub:
      case Op::mul: {
        const Tensor& a = in(s, 0);
        const Tensor& b = in(s, 1);
        check_broadcast(node, a, b);
        Tensor out(a.shape());
        const std::size_t inner = b.size();
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double bv = b[i % inner];
          out[i] = node.op == Op::add ? a[i] + bv : node.op == Op::sub ? a[i] - bv : a[i] * bv;
        }
        slot.value = &own(std::move(out));
        return;
      }
      case Op::scale:
      case Op::add_scalar: {
        const Tensor& a = in(s, 0);
        Tensor out(a.shape());
        const double c = node.scalars[0];
        for (std::size_t i = 0; i < a.size(); ++i) {
          out[i] = node.op == Op::scale ? a[i] * c : a[i] + c;
        }
        slot.value = &own(std::move(out));
        return;
      }
      case Op::matmul: {
        const Tensor& a = in(s, 0);
        const Tensor& b = in(s, 1);
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
          shape_fail(node, "cannot multiply " + shape_string(a.shape()) + " by " +
                               shape_string(b.shape()));
        }
        Tensor out({a.dim(0), b.dim(1)});
        MatrixOut(out, a.dim(0), b.dim(1)).noalias() =
            kernels::ConstMatrixMap(a.data().data(), static_cast<Eigen::Index>(a.dim(0)),
                                    static_cast<Eigen::Index>(a.dim(1))) *
            kernels::ConstMatrixMap(b.data().data(), static_cast<Eigen::Index>(b.dim(0)),
                                    static_cast<Eigen::Index>(b.dim(1)));
        slot.value = &own(std::move(out));
        return;
      }
      case Op::conv2d: {
        const Tensor& x = in(s, 0);
        const Tensor& w = in(s, 1);
        const Tensor& b = in(s, 2);
        if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3) ||
            w.dim(2) % 2 == 0 || b.rank() != 1 || b.dim(0) != w.dim(0)) {
          shape_fail(node, "bad conv2d operands x" + shape_string(x.shape()) + " w" +
                               shape_string(w.shape()) + " b" + shape_string(b.shape()));
        }
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
        const std::size_t o = w.dim(0), k = w.dim(2), ckk = c * k * k, hw = h * wd;
        slot.buffer.resize(n * ckk * hw);
        Tensor out({n, o, h, wd});
        const auto weights = kernels::ConstMatrixMap(w.data().data(), static_cast<Eigen::Index>(o),
                                                     static_cast<Eigen::Index>(ckk));
        for (std::size_t i = 0; i < n; ++i) {
          double* cols = slot.buffer.data() + i * ckk * hw;
          kernels::im2col(x.data().data() + i * c * hw, c, h, wd, k, cols);
          auto y = kernels::MatrixMap(out.data().data() + i * o * hw, static_cast<Eigen::Index>(o),
                                      static_cast<Eigen::Index>(hw));
          y.noalias() = weights * kernels::ConstMatrixMap(cols, static_cast<Eigen::Index>(ckk),
                                                          static_cast<Eigen::Index>(hw));
          for (std::size_t oc = 0; oc < o; ++oc) y.row(static_cast<Eigen::Index>(oc)).array() += b[oc];
        }
        slot.value = &own(std::move(out));
        return;
      }
      case Op::relu: {
        const Tensor& a = in(s, 0);
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0 ? a[i] : 0.0;
        slot.value = &own(std::move(out));
        return;
      }
      case Op::maxpool2: {
        const Tensor& a = in(s, 0);
        if (a.rank() != 4 || a.dim(2) < 2 || a.dim(3) < 2) {
          shape_fail(node, "maxpool2 needs [n,c,h,w] with h,w >= 2, got " + shape_string(a.shape()));
        }
        const std::size_t planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
        const std::size_t oh = h / 2, ow = w / 2;
        Tensor out({a.dim(0), a.dim(1), oh, ow});
        slot.index.resize(out.size());
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              std::size_t best = p * h * w + 2 * i * w + 2 * j;
              for (std::size_t di = 0; di < 2; ++di) {
                for (std::size_t dj = 0; dj < 2; ++dj) {
                  const std::size_t idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
                  if (a[idx] > a[best]) best = idx;
                }
              }
              const std::size_t o = (p * oh + i) * ow + j;
              out[o] = a[best];
              slot.index[o] = best;
            }
          }
        }
        slot.value = &own(std::move(out));
        return;
      }
      case Op::softmax: {
        const Tensor& a = in(s, 0);
        if (a.rank() == 0) shape_fail(node, "softmax needs rank >= 1");
        const std::size_t d = a.shape().back();
        Tensor out(a.shape());
        for (std::size_t r = 0; r < a.size() / d; ++r) softmax_row(&a[r * d], &out[r * d], d);
        slot.value = &own(std::move(out));
        return;
      }
      case Op::softmax_xent: {
        const Tensor& a = in(s, 0);
        if (a.rank() != 2 || a.dim(0) != node.labels.size()) {
          shape_fail(node, "logits " + shape_string(a.shape()) + " vs " +
                               std::to_string(node.labels.size()) + " labels");
        }
        const std::size_t n = a.dim(0), d = a.dim(1);
        slot.buffer.resize(a.size());
        double loss = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          const int label = node.labels[r];
          if (label < 0 || static_cast<std::size_t>(label) >= d) {
            shape_fail(node, "label " + std::to_string(label) + " outside [0," + std::to_string(d) + ")");
          }
          const double* z = &a[r * d];
          double* p = &slot.buffer[r * d];
          softmax_row(z, p, d);
          const double zmax = *std::max_element(z, z + d);
          double total = 0.0;
          for (std::size_t i = 0; i < d; ++i) total += std::exp(z[i] - zmax);
          loss += zmax + std::log(total) - z[label];
        }
        slot.value = &own(Tensor::scalar(loss / static_cast<double>(n)));
        return;
      }
      case Op::reshape: {
        const Tensor& a = in(s, 0);
        if (shape_size(node.shape) != a.size()) {
          shape_fail(node, "cannot reshape " + shape_string(a.shape()) + " to " +
                               shape_string(node.shape));
        }
        slot.value = &own(a.reshaped(node.shape));
        return;
      }
      case Op::bilinear: {
        const Tensor& a = in(s, 0);
        const Tensor& grid = *node.tensor;
        if (a.rank() < 2 || grid.rank() != 3 || grid.dim(2) != 2) {
          shape_fail(node, "bilinear needs [...,h,w] input and [ho,wo,2] grid");
        }
        const std::size_t h = a.shape()[a.rank() - 2], w = a.shape().back();
        const std::size_t oh = grid.dim(0), ow = grid.dim(1);
        const std::size_t planes = a.size() / (h * w);
        slot.taps = kernels::bilinear_taps(grid.data(), oh * ow, h, w);
        Shape shape = a.shape();
        shape[shape.size() - 2] = oh;
        shape.back() = ow;
        Tensor out(shape);
        for (std::size_t p = 0; p < planes; ++p) {
          const double* src = &a[p * h * w];
          for (std::size_t o = 0; o < oh * ow; ++o) {
            const auto& t = slot.taps[o];
            double acc = 0.0;
            for (int q = 0; q < 4; ++q) {
              if (t.index[q] >= 0) acc += t.weight[q] * src[t.index[q]];
            }
            out[p * oh * ow + o] = acc;
          }
        }
        slot.value = &own(std::move(out));
        return;
      }
      case Op::dct8:
      case Op::idct8: {
        const Tensor& a = in(s, 0);
        if (a.rank() < 2 || a.shape()[a.rank() - 2] % 8 != 0 || a.shape().back() % 8 != 0) {
          shape_fail(node, "8x8 DCT needs trailing dims that are multiples of 8, got " +
                               shape_string(a.shape()));
        }
        const std::size_t h = a.shape()[a.rank() - 2], w = a.shape().back();
        Tensor out(a.shape());
        kernels::dct8_blocks(a.data().data(), out.data().data(), a.size() / (h * w), h, w,
                             node.op == Op::idct8);
        slot.value = &own(std::move(out));
        return;
      }
      case Op::round_cubic:
      case Op::round: {
        const Tensor& a = in(s, 0);
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double r = std::round(a[i]);
          const double f = a[i] - r;
          out[i] = node.op == Op::round ? r : r + f * f * f;
        }
        slot.value = &own(std::move(out));
        return;
      }
      case Op::clamp: {
        const Tensor& a = in(s, 0);
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
          out[i] = std::clamp(a[i], node.scalars[0], node.scalars[1]);
        }
        slot.value = &own(std::move(out));
        return;
      }
      case Op::median: {
        const Tensor& a = in(s, 0);
        const int k = static_cast<int>(node.scalars[0]);
        if (a.rank() < 2 || k < 1) shape_fail(node, "median needs [...,h,w] input and k >= 1");
        const std::size_t h = a.shape()[a.rank() - 2], w = a.shape().back();
        Tensor out(a.shape());
        slot.index.resize(a.size());
        kernels::median_filter(a.data().data(), out.data().data(), slot.index.data(),
                               a.size() / (h * w), h, w, k);
        slot.value = &own(std::move(out));
        return;
      }
      case Op::pow: {
        const Tensor& a = in(s, 0);
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::pow(a[i], node.scalars[0]);
        slot.value = &own(std::move(out));
        return;
      }
      case Op::sum:
      case Op::mean: {
        const Tensor& a = in(s, 0);
        double total = 0.0;
        for (double v : a.data()) total += v;
        if (node.op == Op::mean) total /= static_cast<double>(a.size());
        slot.value = &own(Tensor::scalar(total));
        return;
      }
      case Op::map: {
        const Tensor& a = in(s, 0);
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = node.fn->f(a[i]);
        slot.value = &own(std::move(out));
        return;
      }
      case Op::channel_mix: {
        const Tensor& a = in(s, 0);
        const Tensor& m = *node.tensor;
        const Tensor& off = *node.tensor2;
        const std::size_t caxis = a.rank() == 4 ? 1 : 0;
        if ((a.rank() != 3 && a.rank() != 4) || m.rank() != 2 || m.dim(1) != a.dim(caxis) ||
            off.size() != m.dim(0)) {
          shape_fail(node, "channel_mix of " + shape_string(a.shape()) + " by " +
                               shape_string(m.shape()));
        }
        const std::size_t batch = caxis == 1 ? a.dim(0) : 1;
        const std::size_t c = m.dim(1), co = m.dim(0);
        const std::size_t plane = a.size() / (batch * c);
        Shape shape = a.shape();
        shape[caxis] = co;
        Tensor out(shape);
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t oc = 0; oc < co; ++oc) {
            double* dst = &out[(n * co + oc) * plane];
            std::fill(dst, dst + plane, off[oc]);
            for (std::size_t ic = 0; ic < c; ++ic) {
              const double coef = m[oc * c + ic];
              const double* src = &a[(n * c + ic) * plane];
              for (std::size_t p = 0; p < plane; ++p) dst[p] += coef * src[p];
            }
          }
        }
        slot.value = &own(std::move(out));
        return;
      }
    }
    shape_fail(node, "unknown operation");
  }

  template <class GradOf>
  void backward(std::size_t s, const Tensor& g, const std::vector<char>& needs,
                GradOf& grad_of) const {
    const Slot& slot = slots_[s];
    const Node& node = *slot.node;
    auto need = [&](std::size_t i) { return needs[slot.inputs[i]] != 0; };
    auto gin = [&](std::size_t i) -> Tensor& { return grad_of(slot.inputs[i]); };

    switch (node.op) {
      case Op::leaf:
      case Op::constant:
      case Op::round:
        return;
      case Op::add:
      case Op::sub:
      case Op::mul: {
        const Tensor& a = in(s, 0);
        const Tensor& b = in(s, 1);
        const std::size_t inner = b.size();
        if (need(0)) {
          Tensor& ga = gin(0);
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += node.op == Op::mul ? g[i] * b[i % inner] : g[i];
          }
        }
        if (need(1)) {
          Tensor& gb = gin(1);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = node.op == Op::add ? g[i] : node.op == Op::sub ? -g[i] : g[i] * a[i];
            gb[i % inner] += v;
          }
        }
        return;
      }
      case Op::scale: {
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * node.scalars[0];
        return;
      }
      case Op::add_scalar:
      case Op::reshape: {
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        return;
      }
      case Op::matmul: {
        const Tensor& a = in(s, 0);
        const Tensor& b = in(s, 1);
        const auto n = static_cast<Eigen::Index>(a.dim(0));
        const auto k = static_cast<Eigen::Index>(a.dim(1));
        const auto m = static_cast<Eigen::Index>(b.dim(1));
        const auto gm = kernels::ConstMatrixMap(g.data().data(), n, m);
        if (need(0)) {
          kernels::MatrixMap(gin(0).data().data(), n, k).noalias() +=
              gm * kernels::ConstMatrixMap(b.data().data(), k, m).transpose();
        }
        if (need(1)) {
          kernels::MatrixMap(gin(1).data().data(), k, m).noalias() +=
              kernels::ConstMatrixMap(a.data().data(), n, k).transpose() * gm;
        }
        return;
      }
      case Op::conv2d: {
        const Tensor& x = in(s, 0);
        const Tensor& w = in(s, 1);
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
        const std::size_t o = w.dim(0), k = w.dim(2), ckk = c * k * k, hw = h * wd;
        const auto eo = static_cast<Eigen::Index>(o);
        const auto eckk = static_cast<Eigen::Index>(ckk);
        const auto ehw = static_cast<Eigen::Index>(hw);
        std::vector<double> dcols;
        if (need(0)) dcols.resize(ckk * hw);
        for (std::size_t i = 0; i < n; ++i) {
          const auto gy = kernels::ConstMatrixMap(g.data().data() + i * o * hw, eo, ehw);
          const auto cols = kernels::ConstMatrixMap(slot.buffer.data() + i * ckk * hw, eckk, ehw);
          if (need(1)) {
            kernels::MatrixMap(gin(1).data().data(), eo, eckk).noalias() += gy * cols.transpose();
          }
          if (need(2)) {
            Tensor& gb = gin(2);
            // plain loop: Eigen's vectorised sum depends on the buffer's alignment
            const double* row = g.data().data() + i * o * hw;
            for (std::size_t oc = 0; oc < o; ++oc) {
              double acc = 0.0;
              for (std::size_t j = 0; j < hw; ++j) acc += row[oc * hw + j];
              gb[oc] += acc;
            }
          }
          if (need(0)) {
            kernels::MatrixMap(dcols.data(), eckk, ehw).noalias() =
                kernels::ConstMatrixMap(w.data().data(), eo, eckk).transpose() * gy;
            kernels::col2im(dcols.data(), c, h, wd, k, gin(0).data().data() + i * c * hw);
          }
        }
        return;
      }
      case Op::relu: {
        const Tensor& a = in(s, 0);
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] > 0) ga[i] += g[i];
        }
        return;
      }
      case Op::maxpool2:
      case Op::median: {
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[slot.index[i]] += g[i];
        return;
      }
      case Op::softmax: {
        const Tensor& y = *slot.value;
        Tensor& ga = gin(0);
        const std::size_t d = y.shape().back();
        for (std::size_t r = 0; r < y.size() / d; ++r) {
          double dot = 0.0;
          for (std::size_t i = 0; i < d; ++i) dot += g[r * d + i] * y[r * d + i];
          for (std::size_t i = 0; i < d; ++i) ga[r * d + i] += y[r * d + i] * (g[r * d + i] - dot);
        }
        return;
      }
      case Op::softmax_xent: {
        const Tensor& a = in(s, 0);
        Tensor& ga = gin(0);
        const std::size_t n = a.dim(0), d = a.dim(1);
        const double scale = g[0] / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t i = 0; i < d; ++i) {
            const double onehot = static_cast<int>(i) == node.labels[r] ? 1.0 : 0.0;
            ga[r * d + i] += scale * (slot.buffer[r * d + i] - onehot);
          }
        }
        return;
      }
      case Op::bilinear: {
        const Tensor& a = in(s, 0);
        Tensor& ga = gin(0);
        const std::size_t h = a.shape()[a.rank() - 2], w = a.shape().back();
        const std::size_t outp = slot.taps.size();
        const std::size_t planes = a.size() / (h * w);
        for (std::size_t p = 0; p < planes; ++p) {
          double* dst = &ga[p * h * w];
          for (std::size_t o = 0; o < outp; ++o) {
            const auto& t = slot.taps[o];
            const double go = g[p * outp + o];
            for (int q = 0; q < 4; ++q) {
              if (t.index[q] >= 0) dst[t.index[q]] += t.weight[q] * go;
            }
          }
        }
        return;
      }
      case Op::dct8:
      case Op::idct8: {
        const Tensor& a = in(s, 0);
        const std::size_t h = a.shape()[a.rank() - 2], w = a.shape().back();
        Tensor back(a.shape());
        // orthonormal: the adjoint of the forward transform is the inverse
        kernels::dct8_blocks(g.data().data(), back.data().data(), a.size() / (h * w), h, w,
                             node.op == Op::dct8);
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < back.size(); ++i) ga[i] += back[i];
        return;
      }
      case Op::round_cubic: {
        const Tensor& a = in(s, 0);
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double f = a[i] - std::round(a[i]);
          ga[i] += g[i] * 3.0 * f * f;
        }
        return;
      }
      case Op::clamp: {
        const Tensor& a = in(s, 0);
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] >= node.scalars[0] && a[i] <= node.scalars[1]) ga[i] += g[i];
        }
        return;
      }
      case Op::pow: {
        const Tensor& a = in(s, 0);
        Tensor& ga = gin(0);
        const double p = node.scalars[0];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * p * std::pow(a[i], p - 1.0);
        return;
      }
      case Op::sum:
      case Op::mean: {
        Tensor& ga = gin(0);
        const double v = node.op == Op::sum ? g[0] : g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += v;
        return;
      }
      case Op::map: {
        const Tensor& a = in(s, 0);
        Tensor& ga = gin(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * node.fn->df(a[i]);
        return;
      }
      case Op::channel_mix: {
        const Tensor& a = in(s, 0);
        const Tensor& m = *node.tensor;
        Tensor& ga = gin(0);
        const std::size_t caxis = a.rank() == 4 ? 1 : 0;
        const std::size_t batch = caxis == 1 ? a.dim(0) : 1;
        const std::size_t c = m.dim(1), co = m.dim(0);
        const std::size_t plane = a.size() / (batch * c);
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t oc = 0; oc < co; ++oc) {
            const double* src = &g[(n * co + oc) * plane];
            for (std::size_t ic = 0; ic < c; ++ic) {
              const double coef = m[oc * c + ic];
              double* dst = &ga[(n * c + ic) * plane];
              for (std::size_t p = 0; p < plane; ++p) dst[p] += coef * src[p];
            }
          }
        }
        return;
      }
    }
  }

  static kernels::MatrixMap MatrixOut(Tensor& t, std::size_t rows, std::size_t cols) {
    return kernels::MatrixMap(t.data().data(), static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(cols));
  }

  static void softmax_row(const double* z, double* p, std::size_t d) {
    const double zmax = *std::max_element(z, z + d);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      p[i] = std::exp(z[i] - zmax);
      total += p[i];
    }
    for (std::size_t i = 0; i < d; ++i) p[i] /= total;
  }

  Expr root_;
  std::vector<Slot> slots_;
  std::unordered_map<const Node*, std::size_t> index_;
  std::deque<Tensor> owned_;
  std::map<std::string, Shape> bound_shapes_;
};

/// Forward value of `expr` under `bindings`.
inline Tensor evaluate(const Expr& expr, const Bindings& bindings) {
  Tape tape(expr, bindings);
  return tape.output();
}

/// Exact reverse-mode derivatives of a scalar expression w.r.t. the named leaves.
inline GradientMap gradient(const Expr& expr, const Bindings& bindings,
                            const std::set<std::string>& wrt) {
  Tape tape(expr, bindings);
  return tape.gradient(wrt);
}

/// inverse_dct(forward_dct(block)) for a single 8x8 block.
inline Tensor dct8_roundtrip(const Tensor& block) {
  if (block.shape() != Shape{8, 8}) {
    throw ShapeError("dct8_roundtrip needs an 8x8 block, got " + shape_string(block.shape()));
  }
  return evaluate(idct8(dct8(leaf("block"))), {{"block", block}});
}

}  // namespace rpfgsm::ad
