#pragma once

#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cstdint>
#include <random>
#include <span>

namespace betagam {

/// SplitMix64 finaliser applied to (base, index); used for every per-start,
/// per-replicate and per-cell seed so results do not depend on scheduling.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base ^ (0x9E3779B97F4A7C15ULL * (index + 1));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// mt19937_64 with Boost distributions, whose output is specified exactly
/// (unlike the std:: distributions), so seeded runs are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return boost::random::uniform_01<double>()(engine_); }
  double normal(double mean = 0.0, double sd = 1.0) {
    return boost::random::normal_distribution<double>(mean, sd)(engine_);
  }
  double beta(double a, double b) { return boost::random::beta_distribution<double>(a, b)(engine_); }

  /// Index drawn with the given (not necessarily normalised) weights.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      acc += weights[k];
      if (u < acc) return static_cast<int>(k);
    }
    for (std::size_t k = weights.size(); k-- > 0;) {
      if (weights[k] > 0.0) return static_cast<int>(k);
    }
    return 0;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace betagam
