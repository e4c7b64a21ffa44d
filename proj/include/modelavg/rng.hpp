#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "modelavg/common.hpp"

namespace modelavg {

/// Deterministic random source. All draws go through explicit algorithms
/// (no std distributions), so streams are identical across platforms and
/// standard libraries for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  /// Uniform integer in [0, n) by rejection.
  std::uint64_t bounded(std::uint64_t n) {
    if (n == 0) throw InvalidInput("Rng::bounded: n must be positive");
    constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t rem = (kMax % n + 1) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = gen_();
      if (rem == 0 || x <= kMax - rem) return x % n;
    }
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<Index> permutation(Index n) {
    std::vector<Index> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(bounded(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
  }

  /// m distinct indices from 0..n-1, returned in ascending order so that
  /// m == n reproduces the natural iteration order exactly.
  std::vector<Index> sample_without_replacement(Index n, Index m) {
    if (m < 0 || m > n) throw InvalidInput("Rng::sample_without_replacement: m outside [0, n]");
    std::vector<Index> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), Index{0});
    for (Index i = 0; i < m; ++i) {
      const auto j = i + static_cast<Index>(bounded(static_cast<std::uint64_t>(n - i)));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    p.resize(static_cast<std::size_t>(m));
    std::sort(p.begin(), p.end());
    return p;
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;

  std::mt19937_64 gen_;
};

}  // namespace modelavg
