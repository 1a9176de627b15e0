#pragma once

// Portable seeded randomness. Bits come from xoshiro256** whose state is
// expanded from a 64-bit seed with SplitMix64; independent streams are derived
// by mixing a stream id into the seed. Continuous variates use fixed textbook
// transforms (Box-Muller, Marsaglia-Tsang) rather than <random> distributions,
// whose output is implementation-defined.

#include <cstdint>
#include <limits>
#include <utility>

#include "mml/linalg.hpp"

namespace mml {

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  /// Independent generator for (seed, stream_id).
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  /// Child generator keyed by stream_id. Does not advance this generator.
  Rng split(std::uint64_t stream_id) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next(); }

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Circularly-symmetric complex Gaussian with E|z|^2 = 1.
  cplx complex_gaussian();
  /// Gamma(shape, scale), shape > 0.
  double gamma(double shape, double scale);

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_;
};

}  // namespace mml
