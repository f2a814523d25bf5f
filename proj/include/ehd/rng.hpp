#pragma once

#include <cstdint>
#include <random>

namespace ehd {

// Seeded random source. All randomness in the pipeline derives from one of
// these, split deterministically per purpose so runs are bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // uniform in [1e-12, 1 - 1e-12]; clamped so -log(-log(u)) stays finite
  double uniform() {
    double u = dist_(eng_);
    if (u < 1e-12) u = 1e-12;
    if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
    return u;
  }

  double gumbel() { return -std::log(-std::log(uniform())); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_);
  }

  // deterministic child stream
  Rng split(std::uint64_t stream) const {
    std::uint64_t s = seed_mix(stream);
    return Rng(s);
  }

  std::uint64_t seed_mix(std::uint64_t stream) const {
    // splitmix64 over (engine state hash, stream)
    std::uint64_t z = base_ + stream * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  explicit Rng(std::uint64_t seed, std::uint64_t base)
      : eng_(seed), base_(base) {}

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::uint64_t base_ = 0x6A09E667F3BCC908ull;
  std::uniform_real_distribution<double> dist_{0.0, 1.0};
};

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t z = seed + stream * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return Rng(z ^ (z >> 31), seed);
}

}  // namespace ehd
