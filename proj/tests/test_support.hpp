#pragma once

#include <cmath>

#include "mml/channels.hpp"
#include "mml/linalg.hpp"
#include "mml/rng.hpp"

namespace mml::testing {

inline CMat random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  CMat m(rows, cols);
  for (auto& x : m.data()) x = rng.complex_gaussian();
  return m;
}

/// Random Hermitian PSD matrix G G^H.
inline CMat random_psd(Rng& rng, std::size_t n, std::size_t rank) {
  const CMat g = random_matrix(rng, n, rank);
  CMat a = g * g.adjoint();
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = a(i, i).real();
    for (std::size_t j = 0; j < i; ++j) a(j, i) = std::conj(a(i, j));
  }
  return a;
}

inline ChannelRealization rayleigh_channel(Rng& rng, std::size_t antennas, std::size_t users) {
  return sample_realization(rng, ChannelModelSpec::rayleigh(), antennas, users);
}

inline double max_abs_diff(const CMat& a, const CMat& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

}  // namespace mml::testing
