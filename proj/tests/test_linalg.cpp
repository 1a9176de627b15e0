#include <cmath>

#include "doctest.h"
#include "mml/errors.hpp"
#include "mml/linalg.hpp"
#include "test_support.hpp"

using namespace mml;
using mml::testing::max_abs_diff;

TEST_CASE("hermitian_rank1_sum examples") {
  const std::vector<CVec> e1{{1.0, 0.0}};
  const std::vector<double> one{1.0};
  const CMat s = hermitian_rank1_sum(one, e1, 2);
  CHECK(s == CMat(2, 2, {1.0, 0.0, 0.0, 0.0}));

  CHECK(hermitian_rank1_sum({}, {}, 2) == CMat::zeros(2, 2));

  const std::vector<CVec> basis{{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<double> half{0.5, 0.5};
  CMat expected = CMat::identity(2);
  expected *= 0.5;
  CHECK(hermitian_rank1_sum(half, basis, 2) == expected);

  CHECK_THROWS_AS(hermitian_rank1_sum(one, basis, 2), ArgumentError);
  CHECK_THROWS_AS(hermitian_rank1_sum(one, e1, 3), ArgumentError);
}

TEST_CASE("hermitian_rank1_sum is exactly Hermitian") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CVec> vs;
    std::vector<double> cs;
    for (int k = 0; k < 4; ++k) {
      vs.push_back(testing::random_matrix(rng, 5, 1).column(0));
      cs.push_back(rng.uniform());
    }
    const CMat s = hermitian_rank1_sum(cs, vs, 5);
    CHECK(s == s.adjoint());
  }
}

TEST_CASE("hpd_solve examples") {
  const CMat zero = CMat::zeros(2, 2);
  const CVec b{1.0, 0.0};
  const CVec x = hpd_solve(zero, 1.0, b);
  CHECK(x == b);

  CMat diag = CMat::zeros(2, 2);
  diag(0, 0) = 0.5;
  const CVec y = hpd_solve(diag, 0.5, b);
  CHECK(std::abs(y[0] - cplx(1.0)) < 1e-15);
  CHECK(std::abs(y[1]) < 1e-15);
}

TEST_CASE("hpd_solve residual on random PD systems up to 8x8") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const CMat a = testing::random_psd(rng, n, 1 + rng.below(n));
    const double mu = 0.1;
    const CMat b = testing::random_matrix(rng, n, 1 + rng.below(3));
    const CMat x = hpd_solve(a, mu, b);
    CMat shifted = a;
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) += mu;
    const CMat r = shifted * x - b;
    CHECK(frobenius_norm(r) <= 1e-10 * frobenius_norm(b));
  }
}

TEST_CASE("hpd_solve rejects singular systems") {
  CMat a = CMat::zeros(2, 2);
  a(0, 0) = 1.0;
  CHECK_THROWS_AS(hpd_solve(a, 0.0, CVec{1.0, 1.0}), SingularityError);
  CHECK_THROWS_AS(hpd_solve(CMat::zeros(3, 3), 0.0, CVec{1.0, 1.0, 1.0}), SingularityError);
}

TEST_CASE("total_power") {
  CHECK(total_power(CMat::zeros(2, 3)) == 0.0);
  CHECK(total_power(CMat::identity(2)) == 2.0);
  CHECK(total_power(CMat(1, 1, {cplx(1.0, 1.0)})) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("normalize_to_power examples and properties") {
  CHECK(normalize_to_power(CMat(1, 1, {2.0}), 1.0) == CMat(1, 1, {1.0}));
  CMat expected = CMat::identity(2);
  expected *= std::sqrt(2.0);
  CHECK(max_abs_diff(normalize_to_power(CMat::identity(2), 4.0), expected) < 1e-15);
  CHECK_THROWS_AS(normalize_to_power(CMat::zeros(2, 2), 1.0), DegenerateInputError);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const CMat v = testing::random_matrix(rng, 1 + rng.below(6), 1 + rng.below(6));
    const CMat once = normalize_to_power(v, 3.0);
    CHECK(std::abs(total_power(once) - 3.0) <= 1e-12 * 3.0);
    CHECK(max_abs_diff(normalize_to_power(once, 3.0), once) <= 1e-12);
  }
}
