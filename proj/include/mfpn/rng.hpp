#pragma once

#include <cmath>
#include <cstdint>

namespace mfpn {

// Deterministic splitmix64 generator. Sample-level work derives independent
// substreams from (seed, index), so results never depend on generation order
// or thread count.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // decorrelate trivially related seeds
    next();
    next();
  }

  static Rng substream(uint64_t seed, uint64_t index) {
    return Rng(seed * 0x9e3779b97f4a7c15ull + (index + 1) * 0xd1b54a32d192ed03ull);
  }

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0,n)
  uint64_t uniform_int(uint64_t n) { return next() % n; }

  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace mfpn
