#pragma once

#include <cmath>
#include <cstdint>

namespace unroll {

// 64-bit finalizer used both as the stream mixer and the output function.
// Standard splitmix64 avalanche constants.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Splittable counter-based generator: each draw is mix64 of an advancing
// counter, and the counter start is a hash of (seed, stream). Independent
// streams for parallel work are derived with derive_stream, so results do
// not depend on thread scheduling.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed, uint64_t stream = 0)
      : counter_(mix64(seed + 0x9E3779B97F4A7C15ULL) ^ mix64(stream * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL)) {}

  static uint64_t derive_stream(uint64_t base_seed, uint64_t run_index) {
    return mix64(mix64(base_seed + 0x632BE59BD9B4E019ULL) + run_index * 0x9E3779B97F4A7C15ULL);
  }

  uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    return mix64(counter_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two draws per call so
  // stream positions stay easy to reason about.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  uint64_t counter_;
};

}  // namespace unroll
