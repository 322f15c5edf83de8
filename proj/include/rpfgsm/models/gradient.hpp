#pragma once

#include <optional>

#include "rpfgsm/models/model.hpp"
#include "rpfgsm/transforms/transforms.hpp"

namespace rpfgsm::models {

/// Cross-entropy of the model's prediction on `input` against `cls`.
inline ad::Expr loss(const ModelParams& model, ad::Expr input, int cls) {
  if (cls < 0 || static_cast<std::size_t>(cls) >= model.classes()) {
    throw Error("class " + std::to_string(cls) + " outside [0," +
                std::to_string(model.classes()) + ")");
  }
  return ad::softmax_cross_entropy(model.logits(std::move(input)), {cls});
}

/// d loss(model(transform(x)), cls) / dx for one [c,h,w] image, with the
/// transform's differentiable surrogate (if any) in the path.
inline Tensor input_gradient(const ModelParams& model,
                             const std::optional<transforms::TransformSpec>& transform,
                             const Tensor& image, int cls) {
  model.require_input(image);
  ad::Expr x = ad::leaf("x");
  if (transform) x = transforms::build_differentiable(*transform, image.shape())(x);
  return ad::gradient(loss(model, x, cls), {{"x", image}}, {"x"}).at("x");
}

}  // namespace rpfgsm::models
