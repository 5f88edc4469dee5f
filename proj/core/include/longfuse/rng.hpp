#pragma once

#include <cstdint>
#include <random>

#include "longfuse/stats.hpp"

namespace longfuse {

// Deterministic stream generator. Replicates, bootstrap draws and simulation
// cases each get their own stream keyed by (seed, ...), so results do not
// depend on thread scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t k0, std::uint64_t k1 = 0, std::uint64_t k2 = 0)
      : engine_(derive_seed(k0, k1, k2)) {}

  /// Uniform draw in the open interval (0,1), 53-bit resolution.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal draw via inverse CDF (one engine call per draw).
  double normal() { return normal_quantile(uniform()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Unbiased uniform integer in [0, n), n >= 1.
  std::size_t below(std::size_t n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t lim = (0 - un) % un;  // 2^64 mod n
    std::uint64_t r = engine_();
    while (r < lim) r = engine_();
    return static_cast<std::size_t>(r % un);
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  static std::uint64_t derive_seed(std::uint64_t k0, std::uint64_t k1,
                                   std::uint64_t k2) {
    std::uint64_t s = splitmix64(k0);
    s = splitmix64(s ^ k1);
    s = splitmix64(s ^ k2);
    return s;
  }

  std::mt19937_64 engine_;
};

}  // namespace longfuse
