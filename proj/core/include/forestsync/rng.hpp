#pragma once

// Deterministic random number generation. std::mt19937_64 has a fully
// specified output sequence, but std::uniform_real_distribution and friends
// are implementation-defined, which would break the byte-identical-output
// guarantee for seeded runs. The variates below are constructed explicitly.

#include <complex>
#include <cstdint>
#include <random>

namespace forestsync {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Uniform integer in {0, ..., n-1}.
  std::uint64_t uniform_index(std::uint64_t n) {
    // Multiplicative range reduction; bias is negligible for n << 2^64 and,
    // more importantly, the mapping is deterministic across platforms.
    return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n)) % n;
  }

  // Standard real Gaussian via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  // Standard complex Gaussian N_C(0,1): E|z|^2 = 1, Re/Im ~ N(0, 1/2).
  std::complex<double> complex_normal() {
    const double s = 0.70710678118654752440;  // 1/sqrt(2)
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace forestsync
