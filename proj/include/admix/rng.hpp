#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace admix {

// Deterministic random stream (xoshiro256** seeded via splitmix64).
// The raw bit stream depends only on the seed, not on the platform's
// <random> implementation, so runs are reproducible everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  uint64_t seed() const { return seed_; }

  // Child stream derived from the original seed and a label. Streams with
  // different labels are statistically independent and individually
  // re-seedable; consuming one never advances another.
  Rng stream(std::string_view label) const {
    return Rng(splitmix64_mix(seed_ ^ (fnv1a64(label) * 0x9E3779B97F4A7C15ull)));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). Rejection sampling keeps it unbiased.
  uint64_t uniform_int(uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::uniform_int: bound must be positive");
    const uint64_t threshold = (-bound) % bound;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(alpha, 1) via Marsaglia-Tsang squeeze, with the alpha < 1 boost
  // G(a) = G(a+1) * U^(1/a).
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("Rng::gamma: alpha must be positive");
    if (alpha < 1.0) {
      const double u = 1.0 - uniform();  // (0, 1]
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Beta(beta, beta) in [0, 1]; symmetric around 1/2.
  double beta(double b) {
    if (!(b > 0.0)) throw std::invalid_argument("Rng::beta: beta must be positive");
    const double g1 = gamma(b);
    const double g2 = gamma(b);
    const double s = g1 + g2;
    if (s <= 0.0) return 0.5;  // both draws underflowed
    return g1 / s;
  }

  // Dirichlet(alpha, ..., alpha) of length k as k normalized Gamma draws.
  std::vector<double> dirichlet(size_t k, double alpha) {
    if (k < 1) throw std::invalid_argument("Rng::dirichlet: k must be >= 1");
    if (!(alpha > 0.0)) throw std::invalid_argument("Rng::dirichlet: alpha must be positive");
    std::vector<double> w(k);
    double sum = 0.0;
    for (auto& wi : w) {
      wi = gamma(alpha);
      sum += wi;
    }
    if (sum <= 0.0) {
      for (auto& wi : w) wi = 1.0 / static_cast<double>(k);
      return w;
    }
    for (auto& wi : w) wi /= sum;
    return w;
  }

  // Fisher-Yates prefix: first n entries of a random permutation of [0, l).
  std::vector<int32_t> sample_positions(int32_t l, int32_t n) {
    std::vector<int32_t> idx(static_cast<size_t>(l));
    for (int32_t i = 0; i < l; ++i) idx[static_cast<size_t>(i)] = i;
    n = std::min(n, l);
    for (int32_t i = 0; i < n; ++i) {
      const auto j = i + static_cast<int32_t>(uniform_int(static_cast<uint64_t>(l - i)));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(n));
    return idx;
  }

  static uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const char c : s) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001B3ull;
    }
    return h;
  }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9E3779B97F4A7C15ull;
    return splitmix64_mix(x);
  }

  static uint64_t splitmix64_mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t state_[4];
};

inline std::vector<double> sample_dirichlet(Rng& rng, size_t k, double alpha) {
  return rng.dirichlet(k, alpha);
}

inline double sample_beta(Rng& rng, double beta) { return rng.beta(beta); }

}  // namespace admix
