#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace kamg {

// Counter-based generator (splitmix64): the state advances by a fixed odd
// increment and the output is a bijective mix of the counter, so identical
// seeds give identical streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::vector<double> uniform_vec(size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform();
    return v;
  }

  // Uniform integer in [0, n); n must be positive.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double gaussian();

  // Independent child stream for item `index` of a batch keyed by `seed`.
  static uint64_t derive(uint64_t seed, uint64_t index);

 private:
  uint64_t state_;
};

}  // namespace kamg
