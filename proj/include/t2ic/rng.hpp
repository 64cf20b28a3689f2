#pragma once

#include <cmath>
#include <cstdint>

namespace t2ic {

// Counter-style splitmix64 stream. Implemented from the published algorithm so
// that streams are bit-identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller. The sine branch is discarded so the whole
  // stream state is the single 64-bit counter (checkpointable as one word).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    return r * std::cos(a);
  }

  // Derived stream for order-independent parallel work.
  Rng fork(std::uint64_t index) const {
    Rng r(state_ ^ (0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t state_;
};

}  // namespace t2ic
