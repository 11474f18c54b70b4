#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace nova {

// Counter-based pseudo-random generator (splitmix64 over key + counter).
// Streams derived with fork() are independent of how much the parent has
// consumed, so sub-systems can be reseeded reproducibly from one master seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(seed), counter_(0) {}

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform index in [0, n). Modulo bias is negligible for n << 2^64.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Independent stream keyed off the original seed; distinct tags give
  // distinct streams regardless of parent consumption.
  Rng fork(std::uint64_t tag) const {
    std::uint64_t z = key_ ^ (0xD1B54A32D192ED03ull * (tag + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

  // Fisher-Yates permutation of {0..n-1}.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = index(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace nova
