#include "mml/linalg.hpp"

#include <cmath>
#include <string>

#include "mml/errors.hpp"

namespace mml {

CMat::CMat(std::size_t rows, std::size_t cols, std::vector<cplx> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ArgumentError("CMat: expected " + std::to_string(rows_ * cols_) + " entries, got " +
                        std::to_string(data_.size()));
  }
}

CMat CMat::identity(std::size_t n) {
  CMat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CVec CMat::column(std::size_t c) const {
  CVec out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void CMat::set_column(std::size_t c, std::span<const cplx> v) {
  if (v.size() != rows_) throw ArgumentError("CMat::set_column: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
}

CMat CMat::adjoint() const {
  CMat out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
  return out;
}

CMat& CMat::operator*=(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

CMat operator*(const CMat& a, const CMat& b) {
  if (a.cols() != b.rows()) throw ArgumentError("CMat product: inner dimension mismatch");
  CMat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

CMat operator+(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("CMat sum: shape mismatch");
  CMat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

CMat operator-(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("CMat difference: shape mismatch");
  CMat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

cplx inner(std::span<const cplx> x, std::span<const cplx> y) {
  if (x.size() != y.size()) throw ArgumentError("inner: length mismatch");
  cplx acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::conj(x[i]) * y[i];
  return acc;
}

double norm2_squared(std::span<const cplx> x) {
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc;
}

double frobenius_norm(const CMat& m) { return std::sqrt(norm2_squared(m.data())); }

CVec operator*(const CMat& a, std::span<const cplx> x) {
  if (a.cols() != x.size()) throw ArgumentError("matrix-vector product: length mismatch");
  CVec out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

CMat hermitian_rank1_sum(std::span<const double> coeffs, std::span<const CVec> vectors, std::size_t n) {
  if (coeffs.size() != vectors.size()) throw ArgumentError("hermitian_rank1_sum: coefficient/vector count mismatch");
  CMat s(n, n);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const CVec& h = vectors[k];
    if (h.size() != n) throw ArgumentError("hermitian_rank1_sum: vector length mismatch");
    const double c = coeffs[k];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) s(i, j) += c * h[i] * std::conj(h[j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = s(i, i).real();
    for (std::size_t j = 0; j < i; ++j) s(j, i) = std::conj(s(i, j));
  }
  return s;
}

HpdFactor::HpdFactor(const CMat& a, double mu) : lower_(a.rows(), a.cols()) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ArgumentError("hpd factor: matrix is not square");
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += a(i, i).real() + mu;
  const double threshold = 1e-12 * std::abs(trace);

  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j).real() + mu;
    for (std::size_t k = 0; k < j; ++k) d -= std::norm(lower_(j, k));
    if (!(d > threshold)) {
      throw SingularityError("hpd factor: pivot " + std::to_string(d) + " at column " + std::to_string(j) +
                             " is below threshold " + std::to_string(threshold));
    }
    const double ljj = std::sqrt(d);
    lower_(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      cplx acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= lower_(i, k) * std::conj(lower_(j, k));
      lower_(i, j) = acc / ljj;
    }
  }
}

CVec HpdFactor::solve(std::span<const cplx> b) const {
  const std::size_t n = dim();
  if (b.size() != n) throw ArgumentError("hpd solve: right-hand side length mismatch");
  CVec y(b.begin(), b.end());
  // L y = b
  for (std::size_t i = 0; i < n; ++i) {
    cplx acc = y[i];
    for (std::size_t k = 0; k < i; ++k) acc -= lower_(i, k) * y[k];
    y[i] = acc / lower_(i, i).real();
  }
  // L^H x = y
  for (std::size_t ii = n; ii-- > 0;) {
    cplx acc = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) acc -= std::conj(lower_(k, ii)) * y[k];
    y[ii] = acc / lower_(ii, ii).real();
  }
  return y;
}

CMat HpdFactor::solve(const CMat& b) const {
  CMat out(b.rows(), b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) out.set_column(c, solve(b.column(c)));
  return out;
}

CMat hpd_solve(const CMat& a, double mu, const CMat& b) { return HpdFactor(a, mu).solve(b); }

CVec hpd_solve(const CMat& a, double mu, std::span<const cplx> b) { return HpdFactor(a, mu).solve(b); }

double total_power(const CMat& v) { return norm2_squared(v.data()); }

CMat normalize_to_power(const CMat& v, double power) {
  const double norm = frobenius_norm(v);
  if (!(norm > 0.0)) throw DegenerateInputError("normalize_to_power: beamformer is all-zero");
  CMat out = v;
  out *= std::sqrt(power) / norm;
  return out;
}

bool all_finite(std::span<const cplx> x) {
  for (const auto& v : x)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

}  // namespace mml
