// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace lcurve {

/// Explicit random state. Independent streams are derived with split() so
/// that no two consumers share a generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// A new generator whose seed mixes this generator's seed with `stream`.
  /// Does not advance this generator.
  Rng split(std::uint64_t stream) const;

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() noexcept { return engine_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lcurve
