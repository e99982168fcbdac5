// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace mgt {

/// Seeded generator used for all initialization and sampling.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the
/// standard. The floating-point distributions are computed here rather than
/// through <random> distributions, whose algorithms are implementation
/// defined, so a seed gives the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; one draw per call.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream keyed by `tag`. Does not advance this stream.
  Rng split(std::uint64_t tag) const;

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mgt
