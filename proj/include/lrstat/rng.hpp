#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace lrstat {

/// Seeded random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions below are implemented here rather than taken
/// from <random>, because library distributions differ between standard
/// library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via the Marsaglia polar method; one accepted pair per call,
  /// the second value is discarded so that each call is self-contained.
  double normal();

  /// Mixes a base seed with a list of stream coordinates (splitmix64 chain).
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lrstat
