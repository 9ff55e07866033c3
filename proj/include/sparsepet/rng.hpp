#pragma once

// Self-contained random number generation. Every stochastic step in the
// pipeline draws from this generator rather than from <random> distributions,
// so that results are reproducible across standard library implementations.

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace sparsepet {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// xoshiro256++ seeded through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Independent child stream; (seed, tag) pairs map to distinct streams.
  Rng child(std::uint64_t tag) const {
    std::uint64_t sm = seed_;
    std::uint64_t h = splitmix64(sm);
    sm = h ^ (tag + 0x9e3779b97f4a7c15ull);
    return Rng(splitmix64(sm));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    // Box-Muller; u1 bounded away from zero so the log is finite.
    double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Exact Poisson sampling (Knuth) for moderate rates; the pipeline keeps
  // per-bin rates in the tens, far below the normal-approximation switch.
  long poisson(double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda))
      throw std::invalid_argument("Rng::poisson: rate must be finite and nonnegative");
    if (lambda == 0.0) return 0;
    if (lambda < 500.0) {
      const double l = std::exp(-lambda);
      long k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= uniform();
      } while (p > l);
      return k - 1;
    }
    double draw = std::round(lambda + std::sqrt(lambda) * normal());
    return draw < 0.0 ? 0 : static_cast<long>(draw);
  }

  // Binomial by direct Bernoulli summation; n stays small (count thinning).
  long binomial(long n, double p) {
    if (n < 0 || p < 0.0 || p > 1.0)
      throw std::invalid_argument("Rng::binomial: need n >= 0 and p in [0, 1]");
    if (p == 0.0) return 0;
    if (p == 1.0) return n;
    long k = 0;
    for (long i = 0; i < n; ++i) k += uniform() < p ? 1 : 0;
    return k;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace sparsepet
