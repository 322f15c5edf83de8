#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace rpfgsm {

/// splitmix64 finaliser.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Explicit random stream. Never shared between threads; pass by reference.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  /// Stream for one item of a run: hash(master seed, item index).
  static Rng derive(std::uint64_t master_seed, std::uint64_t index) {
    return Rng(mix64(master_seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  /// Uniform integer in [lo, hi].
  long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }

  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rpfgsm
