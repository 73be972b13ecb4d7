#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

namespace mgcd {

// Deterministic random source. Gaussian draws use Box-Muller without caching a
// second value, so the full state is the engine state (serializable for
// checkpoint resume).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(mix(seed)) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return eng_() % n; }

  // Derives an independent stream; advances this engine by one draw.
  Rng split() { return Rng(eng_()); }

  void save(std::ostream& os) const { os << eng_; }
  void load(std::istream& is) { is >> eng_; }

  bool operator==(const Rng& o) const { return eng_ == o.eng_; }

 private:
  static uint64_t mix(uint64_t x) {
    // splitmix64 finalizer; spreads small seeds over the state space
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace mgcd
