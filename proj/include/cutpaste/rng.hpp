#pragma once

#include <cmath>
#include <cstdint>

namespace cutpaste {

// Counter-based pseudo-random generator.
//
// The state is a 64-bit seed plus a 64-bit draw counter. Draw number n
// (1-based) is
//
//   mix(seed + n * 0x9E3779B97F4A7C15)
//
// where mix is the splitmix64 finalizer:
//
//   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//   z ^= z >> 27;  z *= 0x94D049BB133111EB;
//   z ^= z >> 31;
//
// Any implementation that reproduces this mapping reproduces every stream in
// the project bit for bit. Saving and restoring (seed, counter) resumes a
// stream exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0, uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void restore(uint64_t seed, uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

  uint64_t next_u64() {
    ++counter_;
    uint64_t z = seed_ + counter_ * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 24 random bits, exactly representable as float.
  float uniform() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n). Modulo bias is negligible for the small n used here.
  int below(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  bool coin() { return (next_u64() & 1ULL) != 0; }

  // One N(0,1) draw via Box-Muller; always consumes exactly two uniforms.
  float normal() {
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    const double two_pi = 6.283185307179586476925286766559;
    double r = std::sqrt(-2.0 * std::log(static_cast<double>(u1)));
    return static_cast<float>(r * std::cos(two_pi * static_cast<double>(u2)));
  }

  float normal(float mean, float stddev) { return mean + stddev * normal(); }

  // Independent child stream derived from (seed, id); does not consume draws.
  Rng fork(uint64_t id) const {
    uint64_t z = seed_ ^ (0xD1B54A32D192ED03ULL + id * 0x2545F4914F6CDD1DULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace cutpaste
