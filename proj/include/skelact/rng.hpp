#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace skelact {

// Deterministic random source. mt19937_64 is fully specified by the
// standard, and all distributions below are hand-rolled so that a given
// seed produces the same stream on every platform. std::*_distribution
// and std::shuffle are implementation-defined and must not be used
// anywhere reproducibility matters.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive bounds, rejection sampling to avoid modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  // Box-Muller; second value of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Knuth inversion; adequate for the small rates the generator uses.
  int poisson(double rate) {
    const double threshold = std::exp(-rate);
    double product = 1.0;
    int count = -1;
    do {
      ++count;
      product *= uniform01();
    } while (product > threshold);
    return count;
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based seed derivation: the stream for item i of a collection
// keyed by `master` is splitmix64(master + (i + 1) * phi). Used for
// per-session seeds so that generation order never matters.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
  return splitmix64(master + (counter + 1) * 0x9E3779B97F4A7C15ULL);
}

}  // namespace skelact
