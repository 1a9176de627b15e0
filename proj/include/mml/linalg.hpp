#pragma once

// Dense complex vectors and matrices for the small (N, K <= ~8) systems that
// appear in downlink beamforming. Storage is row-major std::complex<double>,
// i.e. interleaved (re, im) pairs of 64-bit floats.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace mml {

using cplx = std::complex<double>;

using CVec = std::vector<cplx>;

class CMat {
 public:
  CMat() = default;
  CMat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  CMat(std::size_t rows, std::size_t cols, std::vector<cplx> data);

  static CMat identity(std::size_t n);
  static CMat zeros(std::size_t rows, std::size_t cols) { return CMat(rows, cols); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }

  CVec column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const cplx> v);

  CMat adjoint() const;

  CMat& operator*=(double s);
  friend CMat operator*(const CMat& a, const CMat& b);
  friend CMat operator+(const CMat& a, const CMat& b);
  friend CMat operator-(const CMat& a, const CMat& b);
  friend bool operator==(const CMat&, const CMat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

/// x^H y
cplx inner(std::span<const cplx> x, std::span<const cplx> y);
double norm2_squared(std::span<const cplx> x);
double frobenius_norm(const CMat& m);

CVec operator*(const CMat& a, std::span<const cplx> x);

/// Sum_k coeffs[k] * v_k v_k^H over length-n vectors. With no vectors the
/// result is the n x n zero matrix. The upper triangle is mirrored from the
/// lower one so the result is exactly Hermitian.
CMat hermitian_rank1_sum(std::span<const double> coeffs, std::span<const CVec> vectors, std::size_t n);

/// Cholesky factor of a Hermitian positive definite matrix shifted by mu*I.
/// Pivots at or below 1e-12 * trace(A + mu I) raise SingularityError.
class HpdFactor {
 public:
  HpdFactor(const CMat& a, double mu);

  std::size_t dim() const noexcept { return lower_.rows(); }
  CVec solve(std::span<const cplx> b) const;
  CMat solve(const CMat& b) const;

 private:
  CMat lower_;
};

/// Solves (A + mu I) X = B for Hermitian PSD A.
CMat hpd_solve(const CMat& a, double mu, const CMat& b);
CVec hpd_solve(const CMat& a, double mu, std::span<const cplx> b);

/// Tr(V V^H) = sum |V_nk|^2.
double total_power(const CMat& v);

/// Rescales V so that total_power(V) == power. Throws DegenerateInputError
/// on the zero matrix.
CMat normalize_to_power(const CMat& v, double power);

bool all_finite(std::span<const cplx> x);

}  // namespace mml
