#include <cmath>

#include "doctest.h"
#include "mml/errors.hpp"
#include "mml/objective.hpp"
#include "mml/wmmse.hpp"
#include "test_support.hpp"

using namespace mml;
using mml::testing::max_abs_diff;

namespace {

SystemConfig scalar_cfg(double power) {
  SystemConfig cfg;
  cfg.antennas = 1;
  cfg.users = 1;
  cfg.sigma2 = 1.0;
  cfg.power = power;
  cfg.alpha = {1.0};
  return cfg;
}

// Smallest distance between a and b over a global phase rotation of b.
double phase_aligned_distance(const CMat& a, const CMat& b) {
  cplx overlap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) overlap += std::conj(b.data()[i]) * a.data()[i];
  const cplx rot = std::abs(overlap) > 0 ? overlap / std::abs(overlap) : cplx(1.0);
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::norm(a.data()[i] - rot * b.data()[i]);
  return std::sqrt(d);
}

}  // namespace

TEST_CASE("compute_w examples and identity with sinr") {
  const ChannelRealization h{{{1.0}}};
  CHECK(compute_w(h, CMat(1, 1, {1.0}), scalar_cfg(1.0))[0] == 2.0);
  CHECK(compute_w(h, CMat::zeros(1, 1), scalar_cfg(1.0))[0] == 1.0);

  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t k = 1 + rng.below(4);
    const SystemConfig cfg = SystemConfig::with_snr(n, k, 10.0);
    const auto hh = testing::rayleigh_channel(rng, n, k);
    const CMat v = testing::random_matrix(rng, n, k);
    const auto w = compute_w(hh, v, cfg);
    for (std::size_t u = 0; u < k; ++u) {
      CHECK(w[u] >= 1.0);
      CHECK(w[u] == doctest::Approx(1.0 + sinr(hh, v, cfg, u)).epsilon(1e-12));
    }
  }
}

TEST_CASE("compute_u examples and Cauchy-Schwarz bound") {
  const ChannelRealization h{{{1.0}}};
  CHECK(compute_u(h, CMat(1, 1, {1.0}), scalar_cfg(1.0))[0] == cplx(0.5));
  CHECK(compute_u(h, CMat::zeros(1, 1), scalar_cfg(1.0))[0] == cplx(0.0));

  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const SystemConfig cfg = SystemConfig::with_snr(3, 3, 5.0);
    const auto hh = testing::rayleigh_channel(rng, 3, 3);
    const CMat v = testing::random_matrix(rng, 3, 3);
    const auto u = compute_u(hh, v, cfg);
    for (std::size_t k = 0; k < 3; ++k) {
      const double bound = std::sqrt(norm2_squared(v.column(k)) * norm2_squared(hh.users[k])) / cfg.sigma2;
      CHECK(std::abs(u[k]) <= bound * (1 + 1e-12));
    }
  }
}

TEST_CASE("reconstruct_v examples") {
  const ComponentTriple comps{{0.5}, {2.0}, 0.5};
  const CMat v = reconstruct_v(ChannelRealization{{{1.0}}}, comps, scalar_cfg(1.0));
  CHECK(std::abs(v(0, 0) - cplx(1.0)) < 1e-15);

  SystemConfig cfg2 = scalar_cfg(1.0);
  cfg2.antennas = 2;
  const CMat v2 = reconstruct_v(ChannelRealization{{{1.0, 0.0}}}, comps, cfg2);
  CHECK(std::abs(v2(0, 0) - cplx(1.0)) < 1e-15);
  CHECK(std::abs(v2(1, 0)) < 1e-15);
}

TEST_CASE("solve_mu examples") {
  const ChannelRealization h{{{1.0}}};
  CHECK(solve_mu(h, {0.5}, {2.0}, scalar_cfg(1.0)) == doctest::Approx(0.5).epsilon(1e-7));

  Rng rng(10);
  const auto hh = testing::rayleigh_channel(rng, 3, 3);
  SystemConfig big = SystemConfig::with_snr(3, 3, 120.0);
  CHECK(solve_mu(hh, {0.3, 0.2, 0.1}, {1.5, 2.0, 1.2}, big) == 0.0);
  CHECK_THROWS_AS(solve_mu(hh, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, big), DegenerateInputError);

  // Rank-deficient S (K < N) needs mu > 0; active constraint met to 1e-8 relative.
  for (int trial = 0; trial < 50; ++trial) {
    const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
    const auto h3 = testing::rayleigh_channel(rng, 3, 3);
    const CVec u{rng.complex_gaussian(), rng.complex_gaussian(), rng.complex_gaussian()};
    const std::vector<double> w{1.0 + rng.uniform(), 1.0 + rng.uniform(), 1.0 + rng.uniform()};
    const double mu = solve_mu(h3, u, w, cfg);
    const double p = total_power(reconstruct_v(h3, {u, w, mu}, cfg));
    if (mu > 0) CHECK(std::abs(p - cfg.power) <= 1e-8 * cfg.power);
    CHECK(p <= cfg.power * (1 + 1e-9));
  }
}

TEST_CASE("wmmse single user converges to MRT") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const SystemConfig cfg = SystemConfig::with_snr(3, 1, 10.0);
    const auto h = testing::rayleigh_channel(rng, 3, 1);
    const auto res = wmmse_solve(h, cfg, rng);
    CMat mrt(3, 1);
    const double scale = std::sqrt(cfg.power / norm2_squared(h.users[0]));
    for (std::size_t n = 0; n < 3; ++n) mrt(n, 0) = scale * h.users[0][n];
    CHECK(phase_aligned_distance(res.v, mrt) < 1e-6);
    const double closed = std::log2(1.0 + cfg.power * norm2_squared(h.users[0]) / cfg.sigma2);
    CHECK(std::abs(wsr(h, res.v, cfg) - closed) < 1e-6);
  }
}

TEST_CASE("wmmse power feasibility, monotone trace and fixed point") {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
    const auto h = testing::rayleigh_channel(rng, 3, 3);
    const auto res = wmmse_solve(h, cfg, rng);
    CHECK(total_power(res.v) <= cfg.power * (1 + 1e-9));
    for (std::size_t i = 1; i < res.wsr_trace.size(); ++i)
      CHECK(res.wsr_trace[i] >= res.wsr_trace[i - 1] - 1e-8);
    CHECK(frobenius_norm(reconstruct_v(h, res.components, cfg) - res.v) < 1e-6);
  }
}

TEST_CASE("wmmse fixed point after convergence is stable under one more update") {
  Rng rng(16);
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  const auto h = testing::rayleigh_channel(rng, 3, 3);
  const auto res = wmmse_solve(h, cfg, rng, {2000, 1e-10});
  const auto u = compute_u(h, res.v, cfg);
  const auto w = compute_w(h, res.v, cfg);
  const double mu = solve_mu(h, u, w, cfg);
  CHECK(frobenius_norm(reconstruct_v(h, {u, w, mu}, cfg) - res.v) < 1e-6);
}

TEST_CASE("structure_beamformer examples") {
  Rng rng(20);
  const SystemConfig one = SystemConfig::with_snr(3, 1, 10.0);
  const auto h1 = testing::rayleigh_channel(rng, 3, 1);
  const CMat v1 = structure_beamformer(h1, {{one.power}, {one.power}}, one);
  CMat mrt(3, 1);
  for (std::size_t n = 0; n < 3; ++n)
    mrt(n, 0) = std::sqrt(one.power / norm2_squared(h1.users[0])) * h1.users[0][n];
  CHECK(max_abs_diff(v1, mrt) < 1e-12);

  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  const auto h = testing::rayleigh_channel(rng, 3, 3);
  const StructureParams zero_lambda{{0.0, 0.0, 0.0}, {2.0, 3.0, cfg.power - 5.0}};
  const CMat v = structure_beamformer(h, zero_lambda, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    const double s = std::sqrt(zero_lambda.p[k] / norm2_squared(h.users[k]));
    for (std::size_t n = 0; n < 3; ++n) CHECK(std::abs(v(n, k) - s * h.users[k][n]) < 1e-12);
  }
  const CMat vr = structure_beamformer(h, {{1.0, 4.0, cfg.power - 5.0}, {2.0, 3.0, cfg.power - 5.0}}, cfg);
  CHECK(std::abs(total_power(vr) - cfg.power) <= 1e-12 * cfg.power);
}

TEST_CASE("grid_oracle") {
  Rng rng(21);
  const SystemConfig one = SystemConfig::with_snr(2, 1, 10.0);
  const auto h1 = testing::rayleigh_channel(rng, 2, 1);
  const auto r1 = grid_oracle(h1, one, 5);
  CHECK(r1.wsr == doctest::Approx(std::log2(1.0 + one.power * norm2_squared(h1.users[0]))).epsilon(1e-12));

  const SystemConfig cfg = SystemConfig::with_snr(2, 2, 10.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto h = testing::rayleigh_channel(rng, 2, 2);
    const auto coarse = grid_oracle(h, cfg, 5);
    const auto fine = grid_oracle(h, cfg, 21);
    CHECK(fine.wsr >= coarse.wsr);
    CHECK(fine.wsr == doctest::Approx(wsr(h, fine.v, cfg)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(grid_oracle(testing::rayleigh_channel(rng, 4, 4), SystemConfig::with_snr(4, 4, 0.0), 5),
                  CapabilityError);
  CHECK_THROWS_AS(grid_oracle(h1, one, 4), ArgumentError);
}

TEST_CASE("wmmse reaches the grid oracle on small instances") {
  Rng rng(22);
  const SystemConfig cfg = SystemConfig::with_snr(2, 2, 10.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto h = testing::rayleigh_channel(rng, 2, 2);
    const double oracle = grid_oracle(h, cfg, 41).wsr;
    CHECK(wsr(h, wmmse_solve(h, cfg, rng).v, cfg) >= 0.99 * oracle);
  }
}
