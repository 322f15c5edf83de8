#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rpfgsm/random.hpp"
#include "rpfgsm/tensor.hpp"

namespace rpfgsm::transforms {

enum class TransformKind {
  identity,
  requantize,
  median,
  jpeg,
  scale,
  translate,
  rotate,
  brighten,
  darken,
  gauss_noise,
  resize_pad,
};

inline const char* kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::identity: return "identity";
    case TransformKind::requantize: return "requantize";
    case TransformKind::median: return "median";
    case TransformKind::jpeg: return "jpeg";
    case TransformKind::scale: return "scale";
    case TransformKind::translate: return "translate";
    case TransformKind::rotate: return "rotate";
    case TransformKind::brighten: return "brighten";
    case TransformKind::darken: return "darken";
    case TransformKind::gauss_noise: return "gauss-noise";
    case TransformKind::resize_pad: return "resize-pad";
  }
  return "?";
}

inline TransformKind parse_kind(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(TransformKind::resize_pad); ++k) {
    const auto kind = static_cast<TransformKind>(k);
    if (name == kind_name(kind)) return kind;
  }
  throw Error("unknown transform kind '" + name + "'");
}

/// Defense kinds have an exact integer-domain path; the rest are 2D transforms.
inline bool is_defense(TransformKind k) {
  return k == TransformKind::identity || k == TransformKind::requantize ||
         k == TransformKind::median || k == TransformKind::jpeg;
}

class TransformError : public Error {
 public:
  using Error::Error;
};

/// A transform kind plus its parameters.
///
/// `param`: bits (requantize), kernel (median), quality (jpeg), factor (scale),
/// horizontal shift as a fraction of the width (translate), degrees (rotate),
/// intensity (brighten/darken), variance (gauss-noise), side r (resize-pad).
/// `param2`: vertical shift fraction (translate), top offset (resize-pad).
/// `param3`: left offset (resize-pad). `noise_seed` seeds gauss-noise.
struct TransformSpec {
  TransformKind kind = TransformKind::identity;
  double param = 0.0;
  double param2 = 0.0;
  double param3 = 0.0;
  std::uint64_t noise_seed = 0;

  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;

  static TransformSpec identity() { return {}; }
  static TransformSpec requantize(int bits) { return {TransformKind::requantize, double(bits)}; }
  static TransformSpec median(int kernel) { return {TransformKind::median, double(kernel)}; }
  static TransformSpec jpeg(int quality) { return {TransformKind::jpeg, double(quality)}; }
};

namespace detail {
inline bool is_int(double v) { return v == std::round(v); }
}  // namespace detail

/// Throws TransformError unless the parameters lie in the kind's legal set.
/// `shape` ([c,h,w]) is needed for resize-pad geometry; pass {} to skip it.
inline void validate(const TransformSpec& s, const Shape& shape = {}) {
  auto fail = [&](const std::string& why) {
    throw TransformError(std::string("illegal ") + kind_name(s.kind) + " parameter: " + why);
  };
  switch (s.kind) {
    case TransformKind::identity:
      return;
    case TransformKind::requantize:
      if (!detail::is_int(s.param) || s.param < 1 || s.param > 7) fail("bits must be 1..7");
      return;
    case TransformKind::median:
      if (s.param != 2 && s.param != 3 && s.param != 5) fail("kernel must be 2, 3 or 5");
      return;
    case TransformKind::jpeg:
      if (s.param != 25 && s.param != 50 && s.param != 75 && s.param != 100) {
        fail("quality must be 25, 50, 75 or 100");
      }
      return;
    case TransformKind::scale:
      if (!(s.param >= 0.8 && s.param <= 1.2)) fail("factor must be in [0.8, 1.2]");
      return;
    case TransformKind::translate:
      if (!(std::abs(s.param) <= 0.2 && std::abs(s.param2) <= 0.2)) {
        fail("shift must be within [-0.2W, 0.2W]");
      }
      return;
    case TransformKind::rotate:
      if (!(std::abs(s.param) <= 60.0)) fail("angle must be in [-60, 60] degrees");
      return;
    case TransformKind::brighten:
    case TransformKind::darken:
      if (!(s.param >= 0.0 && s.param <= 13.0)) fail("intensity must be in [0, 13]");
      return;
    case TransformKind::gauss_noise:
      if (!(s.param > 0.0 && s.param <= 255.0)) fail("variance must be in (0, 255]");
      return;
    case TransformKind::resize_pad: {
      if (!detail::is_int(s.param) || !detail::is_int(s.param2) || !detail::is_int(s.param3) ||
          s.param < 1 || s.param2 < 0 || s.param3 < 0) {
        fail("side and offsets must be non-negative integers");
      }
      if (shape.size() == 3 && (s.param + s.param2 > double(shape[1]) ||
                                s.param + s.param3 > double(shape[2]))) {
        fail("resized block does not fit the frame");
      }
      return;
    }
  }
}

inline std::string to_string(const TransformSpec& s) {
  auto num = [](double v) {
    std::string t = std::to_string(v);
    t.erase(t.find_last_not_of('0') + 1);
    if (!t.empty() && t.back() == '.') t.pop_back();
    return t;
  };
  std::string out = kind_name(s.kind);
  switch (s.kind) {
    case TransformKind::identity: return out;
    case TransformKind::translate: return out + ":" + num(s.param) + "," + num(s.param2);
    case TransformKind::resize_pad:
      return out + ":" + num(s.param) + "," + num(s.param2) + "," + num(s.param3);
    default: return out + ":" + num(s.param);
  }
}

/// Parses "kind" or "kind:param" (identity needs no parameter).
inline TransformSpec parse_spec(const std::string& text) {
  const auto colon = text.find(':');
  TransformSpec s;
  s.kind = parse_kind(text.substr(0, colon));
  if (colon != std::string::npos) {
    std::string rest = text.substr(colon + 1);
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto comma = rest.find(',', start);
      const std::string part = rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      try {
        values.push_back(std::stod(part));
      } catch (const std::exception&) {
        throw TransformError("bad transform parameter '" + part + "' in '" + text + "'");
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (values.size() > 0) s.param = values[0];
    if (values.size() > 1) s.param2 = values[1];
    if (values.size() > 2) s.param3 = values[2];
  } else if (s.kind != TransformKind::identity) {
    throw TransformError("transform '" + text + "' needs a parameter");
  }
  validate(s);
  return s;
}

// --- sets and sampling ---------------------------------------------------------

/// One allowed kind and its parameter domain: a discrete list of values, or a
/// continuous range [lo, hi] when `values` is empty.
struct TransformDomain {
  TransformKind kind = TransformKind::identity;
  std::vector<double> values;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t frame = 32;  // resize-pad: side of the frame the block is padded into
};

struct TransformSet {
  std::vector<TransformDomain> entries;

  bool includes_identity() const {
    for (const auto& e : entries) {
      if (e.kind == TransformKind::identity) return true;
    }
    return false;
  }
  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

inline TransformDomain discrete(TransformKind kind, std::vector<double> values) {
  return {kind, std::move(values)};
}

inline TransformDomain continuous(TransformKind kind, double lo, double hi) {
  return {kind, {}, lo, hi};
}

/// Full defense parameter sets: 1-7 bits, kernels 2/3/5, qualities 25/50/75/100.
inline TransformDomain full_domain(TransformKind kind) {
  switch (kind) {
    case TransformKind::identity: return discrete(kind, {});
    case TransformKind::requantize: return discrete(kind, {1, 2, 3, 4, 5, 6, 7});
    case TransformKind::median: return discrete(kind, {2, 3, 5});
    case TransformKind::jpeg: return discrete(kind, {25, 50, 75, 100});
    case TransformKind::scale: return continuous(kind, 0.8, 1.2);
    case TransformKind::translate: return continuous(kind, -0.2, 0.2);
    case TransformKind::rotate: return continuous(kind, -60, 60);
    case TransformKind::brighten:
    case TransformKind::darken: return continuous(kind, 0, 13);
    case TransformKind::gauss_noise: return discrete(kind, {25});
    case TransformKind::resize_pad: {
      TransformDomain d = discrete(kind, {28, 29, 30, 31});
      d.frame = 32;
      return d;
    }
  }
  return {};
}

/// Identity plus requantize, median and JPEG over their full parameter sets.
inline TransformSet defense_set(bool with_identity = true) {
  TransformSet set;
  if (with_identity) set.entries.push_back(full_domain(TransformKind::identity));
  for (auto k : {TransformKind::requantize, TransformKind::median, TransformKind::jpeg}) {
    set.entries.push_back(full_domain(k));
  }
  return set;
}

inline TransformSet identity_set() { return {{full_domain(TransformKind::identity)}}; }

/// The 2D transforms used by EOT.
inline TransformSet eot_set() {
  TransformSet set;
  for (auto k : {TransformKind::scale, TransformKind::translate, TransformKind::rotate,
                 TransformKind::brighten, TransformKind::darken, TransformKind::gauss_noise}) {
    set.entries.push_back(full_domain(k));
  }
  return set;
}

/// Builds a set from names: "jpeg" allows every legal quality, "jpeg:50" only one.
inline TransformSet parse_set(const std::vector<std::string>& names) {
  TransformSet set;
  for (const auto& n : names) {
    if (n.find(':') == std::string::npos) {
      set.entries.push_back(full_domain(parse_kind(n)));
    } else {
      const TransformSpec s = parse_spec(n);
      set.entries.push_back(discrete(s.kind, {s.param}));
    }
  }
  return set;
}

/// Uniform over the set's kinds, then uniform over that kind's parameter
/// domain. Draw order: kind, parameter(s), then noise seed / offsets.
inline TransformSpec sample_transform(const TransformSet& set, Rng& rng) {
  if (set.empty()) throw TransformError("cannot sample from an empty transform set");
  const TransformDomain& d = set.entries[rng.index(set.size())];
  TransformSpec s;
  s.kind = d.kind;
  if (d.kind == TransformKind::identity) return s;
  auto draw = [&]() {
    return d.values.empty() ? rng.uniform(d.lo, d.hi) : d.values[rng.index(d.values.size())];
  };
  s.param = draw();
  if (d.kind == TransformKind::translate) s.param2 = draw();
  if (d.kind == TransformKind::gauss_noise) s.noise_seed = rng.next_u64();
  if (d.kind == TransformKind::resize_pad) {
    const auto slack = static_cast<long>(d.frame) - static_cast<long>(s.param);
    s.param2 = static_cast<double>(rng.integer(0, slack));
    s.param3 = static_cast<double>(rng.integer(0, slack));
  }
  return s;
}

}  // namespace rpfgsm::transforms
