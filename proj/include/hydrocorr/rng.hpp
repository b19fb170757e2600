#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hydrocorr {

// Deterministic RNG built on std::mt19937 (fully specified by the standard).
// The std:: distributions are implementation-defined, so the distributions
// here are hand-rolled to keep outputs reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : seed_(seed), gen_(static_cast<std::uint32_t>(mix(seed) & 0xffffffffu)) {}

  std::uint32_t next_u32() { return gen_(); }

  // Uniform integer in [0, n), n > 0.
  std::uint32_t below(std::uint32_t n) { return next_u32() % n; }

  // Uniform in [0, 1).
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (both values used, one cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Gamma(shape, scale=1) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Fisher-Yates shuffle.
  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint32_t>(last - first);
    for (std::uint32_t i = n; i > 1; --i) {
      const std::uint32_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  // Independent stream derived from the construction seed.
  Rng fork(std::uint64_t salt) const {
    return Rng(mix(seed_ ^ (0x9e3779b97f4a7c15ull * (salt + 1))));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {  // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937 gen_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace hydrocorr
