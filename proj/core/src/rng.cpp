#include "kamg/rng.hpp"

#include <cmath>

namespace kamg {

double Rng::gaussian() {
  // 1 - u keeps the log argument strictly positive.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t Rng::derive(uint64_t seed, uint64_t index) {
  Rng mix(seed ^ (0xA24BAED4963EE407ULL * (index + 1)));
  return mix.next_u64();
}

}  // namespace kamg
