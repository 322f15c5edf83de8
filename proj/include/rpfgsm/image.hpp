#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "rpfgsm/tensor.hpp"

namespace rpfgsm {

// Images are tensors of shape [channels, height, width] holding intensities on
// the 8-bit [0,255] scale, channel planes stored one after another.

inline void require_image(const Tensor& image, const char* what = "image") {
  if (image.rank() != 3) {
    throw ShapeError(std::string(what) + " must be [c,h,w], got " + shape_string(image.shape()));
  }
}

inline std::size_t image_channels(const Tensor& image) { return image.dim(0); }
inline std::size_t image_height(const Tensor& image) { return image.dim(1); }
inline std::size_t image_width(const Tensor& image) { return image.dim(2); }

inline bool is_valid_pixel_image(const Tensor& image) {
  return std::all_of(image.data().begin(), image.data().end(), [](double v) {
    return v >= 0.0 && v <= 255.0 && v == std::round(v);
  });
}

inline double linf_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Rounds to the nearest intensity and clamps to [0,255].
inline Tensor quantize_pixels(Tensor image) {
  for (double& v : image.data()) v = std::clamp(std::round(v), 0.0, 255.0);
  return image;
}

}  // namespace rpfgsm
