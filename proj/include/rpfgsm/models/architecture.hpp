#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rpfgsm/tensor.hpp"

namespace rpfgsm::models {

struct Layer {
  enum class Kind { conv, relu, maxpool2, flatten, dense };
  Kind kind = Kind::relu;
  std::size_t kernel = 0;  // conv only
  std::size_t units = 0;   // conv output channels or dense units

  static Layer conv(std::size_t kernel, std::size_t channels) {
    return {Kind::conv, kernel, channels};
  }
  static Layer relu() { return {Kind::relu, 0, 0}; }
  static Layer maxpool2() { return {Kind::maxpool2, 0, 0}; }
  static Layer flatten() { return {Kind::flatten, 0, 0}; }
  static Layer dense(std::size_t units) { return {Kind::dense, 0, units}; }
};

struct Architecture {
  std::string name;
  Shape input{3, 32, 32};
  std::vector<Layer> layers;
  std::size_t classes = 10;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  bool is_bias = false;
  bool is_output = false;
};

/// Parameter shapes in canonical order (layer order, weight before bias).
/// Throws when the layer list is inconsistent with the input shape or class count.
inline std::vector<ParamSpec> param_specs(const Architecture& arch) {
  if (arch.classes < 2) throw Error(arch.name + ": needs at least two classes");
  if (arch.input.size() != 3) throw ShapeError(arch.name + ": input must be [c,h,w]");
  std::vector<ParamSpec> specs;
  Shape cur = arch.input;  // [c,h,w] before flatten, [f] after
  std::size_t last_dense = 0;
  bool any_dense = false;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const Layer& l = arch.layers[i];
    const std::string prefix = "l" + std::to_string(i);
    switch (l.kind) {
      case Layer::Kind::conv:
        if (cur.size() != 3 || l.kernel % 2 == 0 || l.units == 0) {
          throw ShapeError(arch.name + ": bad conv layer " + std::to_string(i));
        }
        specs.push_back({prefix + ".w", {l.units, cur[0], l.kernel, l.kernel}, cur[0] * l.kernel * l.kernel});
        specs.push_back({prefix + ".b", {l.units}, 0, true});
        cur[0] = l.units;
        break;
      case Layer::Kind::relu:
        break;
      case Layer::Kind::maxpool2:
        if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2) {
          throw ShapeError(arch.name + ": bad maxpool layer " + std::to_string(i));
        }
        cur[1] /= 2;
        cur[2] /= 2;
        break;
      case Layer::Kind::flatten:
        cur = Shape{shape_size(cur)};
        break;
      case Layer::Kind::dense:
        if (cur.size() != 1 || l.units == 0) {
          throw ShapeError(arch.name + ": dense layer " + std::to_string(i) + " needs flattened input");
        }
        specs.push_back({prefix + ".w", {cur[0], l.units}, cur[0]});
        specs.push_back({prefix + ".b", {l.units}, 0, true});
        cur = Shape{l.units};
        last_dense = specs.size() - 2;
        any_dense = true;
        break;
    }
  }
  if (!any_dense || cur != Shape{arch.classes} ||
      arch.layers.back().kind != Layer::Kind::dense) {
    throw ShapeError(arch.name + ": final layer must be dense with " +
                     std::to_string(arch.classes) + " outputs");
  }
  specs[last_dense].is_output = true;
  specs[last_dense + 1].is_output = true;
  return specs;
}

// --- zoo ---------------------------------------------------------------------

inline Architecture cnn_a(std::size_t classes = 10) {
  using L = Layer;
  return {"cnn-a", {3, 32, 32},
          {L::conv(3, 16), L::relu(), L::maxpool2(), L::conv(3, 32), L::relu(), L::maxpool2(),
           L::flatten(), L::dense(classes)},
          classes};
}

inline Architecture cnn_b(std::size_t classes = 10) {
  using L = Layer;
  return {"cnn-b", {3, 32, 32},
          {L::conv(3, 32), L::relu(), L::maxpool2(), L::conv(3, 64), L::relu(), L::maxpool2(),
           L::flatten(), L::dense(classes)},
          classes};
}

inline Architecture cnn_c(std::size_t classes = 10) {
  using L = Layer;
  return {"cnn-c", {3, 32, 32},
          {L::conv(5, 16), L::relu(), L::maxpool2(), L::flatten(), L::dense(64), L::relu(),
           L::dense(classes)},
          classes};
}

/// The held-out ("unseen") architecture: three conv stages.
inline Architecture cnn_d(std::size_t classes = 10) {
  using L = Layer;
  return {"cnn-d", {3, 32, 32},
          {L::conv(3, 16), L::relu(), L::maxpool2(), L::conv(3, 32), L::relu(), L::maxpool2(),
           L::conv(3, 32), L::relu(), L::maxpool2(), L::flatten(), L::dense(classes)},
          classes};
}

/// A single dense layer on the flattened input: logits = W^T (x / 255) + b.
inline Architecture linear(Shape input, std::size_t classes) {
  return {"linear", std::move(input), {Layer::flatten(), Layer::dense(classes)}, classes};
}

inline std::vector<std::string> zoo_names() { return {"cnn-a", "cnn-b", "cnn-c", "cnn-d"}; }

inline Architecture zoo_architecture(const std::string& name, std::size_t classes = 10) {
  if (name == "cnn-a") return cnn_a(classes);
  if (name == "cnn-b") return cnn_b(classes);
  if (name == "cnn-c") return cnn_c(classes);
  if (name == "cnn-d") return cnn_d(classes);
  throw Error("unknown architecture '" + name + "'");
}

}  // namespace rpfgsm::models
