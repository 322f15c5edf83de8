#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>

#include "rpfgsm/autodiff.hpp"
#include "rpfgsm/image.hpp"
#include "rpfgsm/random.hpp"
#include "rpfgsm/transforms/color.hpp"
#include "rpfgsm/transforms/jpeg.hpp"
#include "rpfgsm/transforms/spec.hpp"

namespace rpfgsm::transforms {

/// How the rounding steps of requantize and JPEG are built: `exact` uses true
/// rounding (zero gradient), `surrogate` the cubic approximation.
enum class Rounding { exact, surrogate };

/// Maps an input image expression to the transformed image expression.
using Fragment = std::function<ad::Expr(ad::Expr)>;

/// Sampling grid [h,w,2] of (row, col) source coordinates for the 2D
/// transforms. Coordinates falling outside the image sample zero.
inline std::shared_ptr<const Tensor> sampling_grid(const TransformSpec& s, std::size_t h,
                                                   std::size_t w) {
  auto grid = std::make_shared<Tensor>(Shape{h, w, 2});
  const double cy = (static_cast<double>(h) - 1) / 2;
  const double cx = (static_cast<double>(w) - 1) / 2;
  const double theta = s.param * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double py = static_cast<double>(y), px = static_cast<double>(x);
      double sy = py, sx = px;
      switch (s.kind) {
        case TransformKind::scale:
          sy = cy + (py - cy) / s.param;
          sx = cx + (px - cx) / s.param;
          break;
        case TransformKind::translate:
          sx = px - s.param * static_cast<double>(w);
          sy = py - s.param2 * static_cast<double>(h);
          break;
        case TransformKind::rotate:
          sx = cx + cs * (px - cx) + sn * (py - cy);
          sy = cy - sn * (px - cx) + cs * (py - cy);
          break;
        case TransformKind::resize_pad: {
          const double r = s.param;
          const double qy = py - s.param2, qx = px - s.param3;
          if (qy < 0 || qx < 0 || qy >= r || qx >= r) {
            sy = sx = -2.0;  // padding
          } else {
            sy = (qy + 0.5) * static_cast<double>(h) / r - 0.5;
            sx = (qx + 0.5) * static_cast<double>(w) / r - 0.5;
            sy = std::clamp(sy, 0.0, static_cast<double>(h) - 1);
            sx = std::clamp(sx, 0.0, static_cast<double>(w) - 1);
          }
          break;
        }
        default:
          throw TransformError(std::string(kind_name(s.kind)) + " has no sampling grid");
      }
      (*grid)[(y * w + x) * 2] = sy;
      (*grid)[(y * w + x) * 2 + 1] = sx;
    }
  }
  return grid;
}

/// Gaussian noise of the given variance for a tensor of `shape`, from `seed`.
inline std::shared_ptr<const Tensor> noise_field(double variance, std::uint64_t seed,
                                                 const Shape& shape) {
  auto noise = std::make_shared<Tensor>(shape);
  Rng rng(seed);
  const double sd = std::sqrt(variance);
  for (double& v : noise->data()) v = rng.normal(0.0, sd);
  return noise;
}

/// Applies `s` to the expression `x` of image shape [c,h,w] (or a batch of
/// them, [n,c,h,w], with `image_shape` still [c,h,w]).
inline ad::Expr apply(const TransformSpec& s, ad::Expr x, const Shape& image_shape,
                      Rounding mode) {
  validate(s, image_shape);
  if (image_shape.size() != 3) {
    throw ShapeError("transforms need an image shape [c,h,w], got " + shape_string(image_shape));
  }
  const std::size_t h = image_shape[1], w = image_shape[2];
  auto quantize = [mode](ad::Expr e) {
    return mode == Rounding::exact ? ad::round(std::move(e)) : ad::round_cubic(std::move(e));
  };
  switch (s.kind) {
    case TransformKind::identity:
      return x;
    case TransformKind::requantize: {
      const double a = (std::ldexp(1.0, static_cast<int>(s.param)) - 1.0) / 255.0;
      ad::Expr scaled = ad::scale(std::move(x), a);
      ad::Expr level = ad::round(scaled);
      ad::Expr exact = ad::round(ad::scale(level, 1.0 / a));
      if (mode == Rounding::exact) return exact;
      // exact output plus the cubic residual carried back to pixel units
      return exact + ad::scale(ad::round_cubic(scaled) - level, 1.0 / a);
    }
    case TransformKind::median:
      return ad::median(std::move(x), static_cast<int>(s.param));
    case TransformKind::jpeg:
      return jpeg::pipeline(std::move(x), static_cast<int>(s.param), h, w, quantize);
    case TransformKind::scale:
    case TransformKind::translate:
    case TransformKind::rotate:
    case TransformKind::resize_pad:
      return ad::bilinear(std::move(x), sampling_grid(s, h, w));
    case TransformKind::brighten:
      return ad::clamp(ad::add_scalar(std::move(x), s.param), 0.0, 255.0);
    case TransformKind::darken:
      return ad::clamp(ad::add_scalar(std::move(x), -s.param), 0.0, 255.0);
    case TransformKind::gauss_noise:
      return ad::clamp(std::move(x) + ad::constant(noise_field(s.param, s.noise_seed, image_shape)),
                       0.0, 255.0);
  }
  throw TransformError("unhandled transform kind");
}

/// Differentiable fragment for images of `image_shape`, using the cubic
/// rounding surrogate wherever the exact transform rounds.
inline Fragment build_differentiable(const TransformSpec& s, const Shape& image_shape,
                                     Rounding mode = Rounding::surrogate) {
  validate(s, image_shape);
  return [s, image_shape, mode](ad::Expr x) { return apply(s, std::move(x), image_shape, mode); };
}

/// Exact transform of a [c,h,w] image, always an integer image in [0,255]:
/// the 2D transforms, which resample, are rounded to the nearest intensity.
inline Tensor apply_exact(const TransformSpec& s, const Tensor& image) {
  require_image(image);
  if (s.kind == TransformKind::identity) return image;
  Tensor out = ad::evaluate(apply(s, ad::leaf("x"), image.shape(), Rounding::exact), {{"x", image}});
  return is_defense(s.kind) ? out : quantize_pixels(std::move(out));
}

/// Largest possible |surrogate - exact| for one output pixel.
inline double surrogate_bound(const TransformSpec& s) {
  validate(s);
  switch (s.kind) {
    case TransformKind::requantize:
      return 0.125 * 255.0 / (std::ldexp(1.0, static_cast<int>(s.param)) - 1.0);
    case TransformKind::jpeg:
      return jpeg::surrogate_bound(static_cast<int>(s.param));
    default:
      return 0.0;
  }
}

}  // namespace rpfgsm::transforms
