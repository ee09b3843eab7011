#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace speclab {

/// Deterministic RNG stream. Wraps mt19937_64 with an explicit uniform
/// mapping so the same seed reproduces the same token sequences everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Gamma(alpha, 1) variate, alpha > 0.
  double gamma(double alpha) {
    std::gamma_distribution<double> dist(alpha, 1.0);
    return dist(engine_);
  }

  /// Standard normal variate.
  double normal() {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to decorrelate derived stream seeds.
inline std::uint64_t mix_u64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for worker/episode stream `index` derived from `base_seed`.
/// Streams are independent: base ⊕ mixed index.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
  return base_seed ^ mix_u64(index + 1);
}

/// Symmetric Dirichlet(alpha) sample of the given dimension.
std::vector<double> dirichlet(Rng& rng, int dim, double alpha);

}  // namespace speclab
