#pragma once

#include <cmath>
#include <memory>

#include "rpfgsm/autodiff.hpp"

namespace rpfgsm::transforms {

namespace detail {

// sRGB companding on [0,1] and the CIE Lab f(t).
inline std::shared_ptr<const ad::UnaryFn> srgb_linearize() {
  static const auto fn = std::make_shared<const ad::UnaryFn>(ad::UnaryFn{
      "srgb_linearize",
      [](double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); },
      [](double c) {
        return c <= 0.04045 ? 1.0 / 12.92 : 2.4 / 1.055 * std::pow((c + 0.055) / 1.055, 1.4);
      }});
  return fn;
}

inline std::shared_ptr<const ad::UnaryFn> lab_f() {
  constexpr double d = 6.0 / 29.0;
  static const auto fn = std::make_shared<const ad::UnaryFn>(ad::UnaryFn{
      "lab_f",
      [](double t) { return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0; },
      [](double t) {
        if (t > d * d * d) {
          const double r = std::cbrt(t);
          return 1.0 / (3.0 * r * r);
        }
        return 1.0 / (3 * d * d);
      }});
  return fn;
}

}  // namespace detail

/// CIE Lab (D65) of an sRGB [3,h,w] or [n,3,h,w] expression on the 0-255 scale.
inline ad::Expr rgb_to_lab(ad::Expr rgb) {
  // sRGB -> XYZ rows divided by the white point (0.95047, 1, 1.08883)
  constexpr double xn = 0.95047, zn = 1.08883;
  const Tensor to_xyz({3, 3}, {0.4124564 / xn, 0.3575761 / xn, 0.1804375 / xn,  //
                               0.2126729, 0.7151522, 0.0721750,                 //
                               0.0193339 / zn, 0.1191920 / zn, 0.9503041 / zn});
  const Tensor to_lab({3, 3}, {0, 116, 0,      //
                               500, -500, 0,   //
                               0, 200, -200});
  ad::Expr linear = ad::map(ad::scale(std::move(rgb), 1.0 / 255.0), detail::srgb_linearize());
  ad::Expr f = ad::map(ad::channel_mix(linear, to_xyz, Tensor({3}, 0.0)), detail::lab_f());
  return ad::channel_mix(f, to_lab, Tensor({3}, {-16.0, 0.0, 0.0}));
}

inline Tensor rgb_to_lab(const Tensor& image) {
  return ad::evaluate(rgb_to_lab(ad::leaf("rgb")), {{"rgb", image}});
}

}  // namespace rpfgsm::transforms
