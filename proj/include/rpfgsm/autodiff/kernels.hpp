#pragma once

// Dense kernels behind the autodiff primitives. Everything here works on raw
// row-major buffers; shape checking happens in the engine.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace rpfgsm::ad::kernels {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// --- convolution -----------------------------------------------------------

/// Unfolds one [c,h,w] plane stack into columns [c*k*k, h*w] for a "same" convolution.
inline void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w,
                   std::size_t k, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((ch * k + ki) * k + kj) * hw;
        const auto di = static_cast<std::ptrdiff_t>(ki) - pad;
        const auto dj = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t i = 0; i < h; ++i) {
          const auto si = static_cast<std::ptrdiff_t>(i) + di;
          double* out = row + i * w;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const double* src = x + (ch * h + static_cast<std::size_t>(si)) * w;
          for (std::size_t j = 0; j < w; ++j) {
            const auto sj = static_cast<std::ptrdiff_t>(j) + dj;
            out[j] = (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w))
                         ? 0.0
                         : src[static_cast<std::size_t>(sj)];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: accumulates columns back into the plane stack.
inline void col2im(const double* cols, std::size_t c, std::size_t h, std::size_t w,
                   std::size_t k, double* x) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((ch * k + ki) * k + kj) * hw;
        const auto di = static_cast<std::ptrdiff_t>(ki) - pad;
        const auto dj = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t i = 0; i < h; ++i) {
          const auto si = static_cast<std::ptrdiff_t>(i) + di;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = x + (ch * h + static_cast<std::size_t>(si)) * w;
          const double* in = row + i * w;
          for (std::size_t j = 0; j < w; ++j) {
            const auto sj = static_cast<std::ptrdiff_t>(j) + dj;
            if (sj >= 0 && sj < static_cast<std::ptrdiff_t>(w)) {
              dst[static_cast<std::size_t>(sj)] += in[j];
            }
          }
        }
      }
    }
  }
}

// --- 8x8 DCT ---------------------------------------------------------------

/// Orthonormal DCT-II basis: basis[u][x] = c(u) cos((2x+1) u pi / 16).
inline const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        b[u][x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

/// Applies F = B X B^T (forward) or X = B^T F B (inverse) to every 8x8 block of
/// each [h,w] plane. `planes` counts the leading planes.
inline void dct8_blocks(const double* in, double* out, std::size_t planes, std::size_t h,
                        std::size_t w, bool inverse) {
  const auto& b = dct_basis();
  double tmp[8][8];
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in + p * h * w;
    double* dst = out + p * h * w;
    for (std::size_t by = 0; by < h; by += 8) {
      for (std::size_t bx = 0; bx < w; bx += 8) {
        // rows: tmp = M X, with M = B (forward) or B^T (inverse)
        for (int u = 0; u < 8; ++u) {
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) {
              const double m = inverse ? b[y][u] : b[u][y];
              acc += m * src[(by + y) * w + bx + x];
            }
            tmp[u][x] = acc;
          }
        }
        // columns: out = tmp M^T
        for (int u = 0; u < 8; ++u) {
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x) {
              const double m = inverse ? b[x][v] : b[v][x];
              acc += tmp[u][x] * m;
            }
            dst[(by + u) * w + bx + v] = acc;
          }
        }
      }
    }
  }
}

// --- median filter -----------------------------------------------------------

/// Reflect ("mirror without repeating the edge") index into [0, n).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

/// Window offsets along one axis: odd k is centred, even k is anchored so the
/// window starts at the pixel (k = 2 covers the pixel and its right/down neighbour).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> median_window(int k) {
  if (k % 2 == 1) return {-(k / 2), k / 2};
  return {-(k / 2 - 1), k / 2};
}

/// Median filter of each [h,w] plane. For each output element records the flat
/// input index that supplied the median: the lower middle element for even
/// window sizes, and among equal values the first one in row-major window order.
inline void median_filter(const double* in, double* out, std::size_t* selected,
                          std::size_t planes, std::size_t h, std::size_t w, int k) {
  const auto [lo, hi] = median_window(k);
  const std::size_t count = static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
  std::vector<double> window(count);
  std::vector<double> scratch(count);
  std::vector<std::size_t> source(count);
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        std::size_t n = 0;
        for (std::ptrdiff_t di = lo; di <= hi; ++di) {
          const std::size_t si = reflect_index(static_cast<std::ptrdiff_t>(i) + di, h);
          for (std::ptrdiff_t dj = lo; dj <= hi; ++dj) {
            const std::size_t sj = reflect_index(static_cast<std::ptrdiff_t>(j) + dj, w);
            source[n] = base + si * w + sj;
            window[n] = in[source[n]];
            ++n;
          }
        }
        std::copy(window.begin(), window.end(), scratch.begin());
        const std::size_t rank = (count - 1) / 2;
        std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(rank),
                         scratch.end());
        const double med = scratch[rank];
        std::size_t pick = 0;
        while (window[pick] != med) ++pick;
        out[base + i * w + j] = med;
        selected[base + i * w + j] = source[pick];
      }
    }
  }
}

// --- bilinear sampling -------------------------------------------------------

/// Four weighted taps into one [h,w] plane; index -1 marks an out-of-range tap.
struct BilinearTaps {
  std::array<std::ptrdiff_t, 4> index{-1, -1, -1, -1};
  std::array<double, 4> weight{0, 0, 0, 0};
};

inline std::vector<BilinearTaps> bilinear_taps(std::span<const double> grid, std::size_t out_count,
                                               std::size_t h, std::size_t w) {
  std::vector<BilinearTaps> taps(out_count);
  for (std::size_t o = 0; o < out_count; ++o) {
    const double y = grid[2 * o];
    const double x = grid[2 * o + 1];
    const double y0 = std::floor(y);
    const double x0 = std::floor(x);
    const double fy = y - y0;
    const double fx = x - x0;
    const std::array<double, 4> ys{y0, y0, y0 + 1, y0 + 1};
    const std::array<double, 4> xs{x0, x0 + 1, x0, x0 + 1};
    const std::array<double, 4> ws{(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    for (int t = 0; t < 4; ++t) {
      if (ws[t] == 0.0) continue;
      if (ys[t] < 0 || xs[t] < 0 || ys[t] > static_cast<double>(h - 1) ||
          xs[t] > static_cast<double>(w - 1)) {
        continue;
      }
      taps[o].index[t] = static_cast<std::ptrdiff_t>(ys[t]) * static_cast<std::ptrdiff_t>(w) +
                         static_cast<std::ptrdiff_t>(xs[t]);
      taps[o].weight[t] = ws[t];
    }
  }
  return taps;
}

}  // namespace rpfgsm::ad::kernels
