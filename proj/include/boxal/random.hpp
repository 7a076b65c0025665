#pragma once

// Portable random streams.
//
// Every stream is std::mt19937_64, whose output sequence is fixed by the C++ standard.
// The standard <random> distributions are implementation-defined, so all variates
// below are derived from raw 64-bit outputs with fixed formulas:
//   uniform01  : (x >> 11) * 2^-53
//   below(n)   : rejection sampling on the low-bias threshold (2^64 mod n)
//   normal     : Box-Muller, cosine branch only
//   poisson    : Knuth's product-of-uniforms method (small means)
//   exponential: -log(1 - u)
// Seeds are combined through splitmix64 so that nearby seeds give unrelated streams.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace boxal {

// Odd multiplier used to derive per-iteration substreams: seed ^ (iteration * kStreamStride).
inline constexpr std::uint64_t kStreamStride = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a; stable across platforms and builds.
constexpr std::uint64_t stable_hash(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = next();
      if (x >= threshold) return x % n;
    }
  }

  // Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential() { return -std::log1p(-uniform01()); }

  unsigned poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    const double limit = std::exp(-mean);
    unsigned k = 0;
    double product = uniform01();
    while (product > limit) {
      ++k;
      product *= uniform01();
    }
    return k;
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace boxal
