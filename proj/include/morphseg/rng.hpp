// Small deterministic RNG. std::mt19937 is portable but the standard
// distributions are not; the helpers here pin the exact sampling algorithm
// so seeded runs are bit-identical everywhere.
#pragma once

#include <cmath>
#include <cstdint>

namespace morphseg {

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound), bound > 0. Rejection-free modulo is fine
  // here: bound is tiny relative to 2^64 and bias is < 2^-40.
  uint64_t next_below(uint64_t bound) { return next_u64() % bound; }

  // Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Box-Muller; one sample per call (the twin is discarded to keep the
  // stream position independent of call history).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace morphseg
