#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace aerocrowd {

/// Seeded 64-bit Mersenne Twister with explicit conversions, so draws are
/// identical across standard libraries (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Exponential with the given rate (1/s).
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace aerocrowd
