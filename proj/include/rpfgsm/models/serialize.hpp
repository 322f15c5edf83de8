#pragma once

// Model weight file:
//   "RPFW" | version u32 | name length u32 | name bytes (UTF-8)
//   per parameter, canonical order: rank u32 | dims u32... | values f64...
//   CRC-32 (zlib polynomial) of every preceding byte, u32
// All integers and floats little-endian.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "rpfgsm/models/model.hpp"

namespace rpfgsm::models {

class FormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[4] = {'R', 'P', 'F', 'W'};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const std::string& section) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated model file: missing " + section);
  }

  std::uint32_t u32(const std::string& section) {
    need(4, section);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(const std::string& section) {
    need(8, section);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string text(std::size_t n, const std::string& section) {
    need(n, section);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_model(const ModelParams& model) {
  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  detail::put_u32(out, kModelFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(model.name().size()));
  out.insert(out.end(), model.name().begin(), model.name().end());
  for (std::size_t p = 0; p < model.param_count(); ++p) {
    const Tensor& t = model.param(p);
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_f64(out, v);
  }
  detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

/// Parses a weight file. The architecture is looked up in the zoo by name; the
/// class count is taken from the final bias.
inline ModelParams decode_model(const std::vector<std::uint8_t>& bytes) {
  detail::Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw FormatError("not a model file");
  }
  in.text(4, "magic");
  const std::uint32_t version = in.u32("version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model file version " + std::to_string(version));
  }
  const std::uint32_t name_len = in.u32("architecture name length");
  const std::string name = in.text(name_len, "architecture name");

  std::vector<Tensor> params;
  const auto probe = param_specs(zoo_architecture(name));
  for (const auto& spec : probe) {
    const std::uint32_t rank = in.u32("rank of parameter " + spec.name);
    if (rank > 8) throw FormatError("parameter " + spec.name + " has implausible rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(in.u32("dims of parameter " + spec.name));
    const std::size_t count = shape_size(shape);
    in.need(count * 8, "values of parameter " + spec.name);
    std::vector<double> values(count);
    for (double& v : values) v = in.f64("values of parameter " + spec.name);
    params.emplace_back(std::move(shape), std::move(values));
  }
  const std::size_t payload = in.position();
  const std::uint32_t crc = in.u32("checksum");
  if (in.remaining() != 0) throw FormatError("trailing bytes after checksum");
  if (crc != detail::crc32_of(bytes.data(), payload)) throw FormatError("checksum mismatch");
  if (params.empty() || params.back().rank() != 1) throw FormatError("missing output bias");
  const std::size_t classes = params.back().dim(0);
  try {
    return ModelParams(zoo_architecture(name, classes), std::move(params));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("parameters do not match architecture: ") + e.what());
  }
}

inline void save_model(const ModelParams& model, const std::string& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing model file '" + path + "'");
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace rpfgsm::models
