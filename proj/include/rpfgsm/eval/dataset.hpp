#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "rpfgsm/image.hpp"
#include "rpfgsm/random.hpp"
#include "rpfgsm/tensor.hpp"

namespace rpfgsm {

/// One labelled image: label in [0, D), image [3,32,32] of integer intensities.
struct DatasetRecord {
  int label = 0;
  Tensor image;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixels + 1;

/// Parses CIFAR-10 binary records: one label byte (0-9) followed by the R, G
/// and B planes, 1024 row-major bytes each.
inline std::vector<DatasetRecord> parse_cifar_binary(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DatasetError("truncated record: CIFAR-10 data of " + std::to_string(bytes.size()) +
                       " bytes is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  std::vector<DatasetRecord> records;
  records.reserve(bytes.size() / kCifarRecordBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes) {
    const std::uint8_t label = bytes[off];
    if (label > 9) {
      throw DatasetError("record " + std::to_string(off / kCifarRecordBytes) + " has label byte " +
                         std::to_string(label) + " > 9");
    }
    Tensor image({3, kCifarSide, kCifarSide});
    for (std::size_t i = 0; i < kCifarPixels; ++i) image[i] = bytes[off + 1 + i];
    records.push_back({label, std::move(image)});
  }
  return records;
}

inline std::vector<DatasetRecord> load_cifar_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_cifar_binary(bytes);
}

inline std::vector<std::uint8_t> encode_cifar_binary(const std::vector<DatasetRecord>& records) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(records.size() * kCifarRecordBytes);
  for (const auto& r : records) {
    if (r.label < 0 || r.label > 9) throw DatasetError("label " + std::to_string(r.label) + " does not fit the CIFAR-10 format");
    if (r.image.shape() != Shape{3, kCifarSide, kCifarSide}) {
      throw DatasetError("CIFAR-10 images must be [3,32,32], got " + shape_string(r.image.shape()));
    }
    bytes.push_back(static_cast<std::uint8_t>(r.label));
    for (double v : r.image.data()) {
      bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)));
    }
  }
  return bytes;
}

inline void save_cifar_binary(const std::string& path, const std::vector<DatasetRecord>& records) {
  const auto bytes = encode_cifar_binary(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace detail {

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = 6.0 * (h - std::floor(h));
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace detail

/// Colored-blob images: a random two-colour gradient background with a blob
/// whose hue (class / D around the colour wheel) and shape (circle, square,
/// cross by class mod 3) identify the class, plus pixel noise.
inline std::vector<DatasetRecord> generate_synthetic(std::uint64_t seed, std::size_t count,
                                                     std::size_t classes) {
  if (classes < 2) throw DatasetError("synthetic data needs at least two classes");
  constexpr double kSaturation = 0.55;
  constexpr double kValue = 0.7;
  constexpr double kNoise = 6.0;
  const std::size_t side = kCifarSide;
  Rng rng(seed);
  std::vector<DatasetRecord> records;
  records.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(rng.index(classes));
    std::array<double, 3> c1{}, c2{}, blob{};
    for (auto& v : c1) v = rng.uniform(60, 190);
    for (auto& v : c2) v = rng.uniform(60, 190);
    const double angle = rng.uniform(0, 2 * 3.14159265358979323846);
    const auto hue = detail::hsv_to_rgb(static_cast<double>(label) / static_cast<double>(classes),
                                        kSaturation, kValue);
    for (int c = 0; c < 3; ++c) blob[c] = hue[c] * 255.0 + rng.normal(0, 8);
    const double cy = rng.uniform(10, 22), cx = rng.uniform(10, 22);
    const double radius = rng.uniform(6, 9);
    const int shape = label % 3;
    Tensor image({3, side, side});
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        bool inside = false;
        if (shape == 0) {
          inside = dy * dy + dx * dx <= radius * radius;
        } else if (shape == 1) {
          inside = std::abs(dy) <= 0.8 * radius && std::abs(dx) <= 0.8 * radius;
        } else {
          inside = (std::abs(dy) <= radius && std::abs(dx) <= radius / 3) ||
                   (std::abs(dx) <= radius && std::abs(dy) <= radius / 3);
        }
        const double t = ((static_cast<double>(x) - 15.5) * std::cos(angle) +
                          (static_cast<double>(y) - 15.5) * std::sin(angle)) / 32.0 + 0.5;
        for (std::size_t c = 0; c < 3; ++c) {
          const double base = inside ? blob[c] : c1[c] * (1 - t) + c2[c] * t;
          image[(c * side + y) * side + x] = base;
        }
      }
    }
    for (double& v : image.data()) v = std::clamp(std::round(v + rng.normal(0, kNoise)), 0.0, 255.0);
    records.push_back({label, std::move(image)});
  }
  return records;
}

}  // namespace rpfgsm
