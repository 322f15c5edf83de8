#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "rpfgsm/autodiff.hpp"

namespace rpfgsm::transforms::jpeg {

using Table = std::array<int, 64>;

// Standard JPEG example tables (ITU T.81 Annex K).
inline constexpr Table kLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

inline constexpr Table kChrominance = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

/// libjpeg quality scaling: S = 5000/q below 50, else 200 - 2q; entries
/// floor((Q*S + 50) / 100) clamped to [1, 255].
inline Table scaled_table(const Table& base, int quality) {
  if (quality < 1 || quality > 100) throw Error("jpeg quality must be in 1..100");
  const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  Table out{};
  for (int i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * s + 50) / 100, 1, 255);
  return out;
}

/// Table for channel c of YCbCr: luminance for Y, chrominance for Cb and Cr.
inline Table channel_table(int channel, int quality) {
  return scaled_table(channel == 0 ? kLuminance : kChrominance, quality);
}

// JFIF full-range conversion. The forward offsets fold in the -128 level shift
// applied to every channel before the DCT.
inline Tensor rgb_to_ycbcr_matrix() {
  return Tensor({3, 3}, {0.299, 0.587, 0.114,           //
                         -0.168736, -0.331264, 0.5,     //
                         0.5, -0.418688, -0.081312});
}

inline Tensor ycbcr_to_rgb_matrix() {
  const Tensor m = rgb_to_ycbcr_matrix();
  Eigen::Matrix3d a;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a(r, c) = m[r * 3 + c];
  const Eigen::Matrix3d inv = a.inverse();
  Tensor out({3, 3});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[r * 3 + c] = inv(r, c);
  return out;
}

/// Table values tiled over a [3,h,w] image; `reciprocal` gives 1/T.
inline std::shared_ptr<const Tensor> tiled_table(int quality, std::size_t h, std::size_t w,
                                                 bool reciprocal) {
  auto t = std::make_shared<Tensor>(Shape{3, h, w});
  for (int c = 0; c < 3; ++c) {
    const Table table = channel_table(c, quality);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double q = table[(y % 8) * 8 + (x % 8)];
        (*t)[(c * h + y) * w + x] = reciprocal ? 1.0 / q : q;
      }
    }
  }
  return t;
}

/// The compression round trip on a [3,h,w] or [n,3,h,w] expression, with
/// `quantize` applied to the DCT coefficients and the output pixels.
template <class Quantize>
ad::Expr pipeline(ad::Expr x, int quality, std::size_t h, std::size_t w, Quantize quantize) {
  if (h % 8 != 0 || w % 8 != 0) {
    throw ShapeError("jpeg needs image sides that are multiples of 8, got " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
  const Tensor shift({3}, {-128.0, 0.0, 0.0});
  const Tensor unshift({3}, {128.0, 128.0, 128.0});
  ad::Expr ycc = ad::channel_mix(std::move(x), rgb_to_ycbcr_matrix(), shift);
  ad::Expr coeffs = ad::dct8(ycc);
  coeffs = ad::mul(coeffs, ad::constant(tiled_table(quality, h, w, true)));
  coeffs = quantize(coeffs);
  coeffs = ad::mul(coeffs, ad::constant(tiled_table(quality, h, w, false)));
  ad::Expr rgb = ad::channel_mix(ad::idct8(coeffs), ycbcr_to_rgb_matrix(), unshift);
  return quantize(ad::clamp(rgb, 0.0, 255.0));
}

/// Upper bound on |surrogate - exact| per output pixel.
///
/// Each cubic rounding of a coefficient errs from exact rounding by at most
/// 1/8 in quantized units, i.e. T/8 in coefficient units; the orthonormal
/// inverse DCT spreads coefficient (u,v) onto a pixel with weight at most
/// c(u)c(v). The colour transform mixes the three channel bounds and the final
/// rounding adds 1/2 + 3/8 (nearest integer vs. cubic rounding near the true
/// value).
inline double surrogate_bound(int quality) {
  std::array<double, 3> channel{};
  for (int c = 0; c < 3; ++c) {
    const Table t = channel_table(c, quality);
    double b = 0;
    for (int u = 0; u < 8; ++u) {
      for (int v = 0; v < 8; ++v) {
        const double cu = u == 0 ? std::sqrt(1.0 / 8) : 0.5;
        const double cv = v == 0 ? std::sqrt(1.0 / 8) : 0.5;
        b += 0.125 * t[u * 8 + v] * cu * cv;
      }
    }
    channel[c] = b;
  }
  const Tensor inv = ycbcr_to_rgb_matrix();
  double worst = 0;
  for (int r = 0; r < 3; ++r) {
    double b = 0;
    for (int c = 0; c < 3; ++c) b += std::abs(inv[r * 3 + c]) * channel[c];
    worst = std::max(worst, b);
  }
  return worst + 0.875;
}

}  // namespace rpfgsm::transforms::jpeg
