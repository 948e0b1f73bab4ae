#ifndef GEOSTAB_LINALG_HPP
#define GEOSTAB_LINALG_HPP

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "geostab/dual.hpp"
#include "geostab/errors.hpp"

namespace geostab::num {

using Vec = std::vector<double>;

// Small dense row-major matrix. Everything in this library lives at
// dimension <= a few dozen, so no blocking or allocation tricks.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[i * cols_ + j]; }
  double operator()(int i, int j) const { return a_[i * cols_ + j]; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double inf_norm() const {  // max absolute row sum
    double m = 0.0;
    for (int i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
      m = std::max(m, s);
    }
    return m;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : a_) m = std::max(m, std::abs(x));
    return m;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows_, b.cols_);
    for (int i = 0; i < a.rows_; ++i)
      for (int k = 0; k < a.cols_; ++k) {
        double aik = a(i, k);
        for (int j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }
  friend Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.a_.size(); ++i) c.a_[i] += b.a_[i];
    return c;
  }
  friend Matrix operator-(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.a_.size(); ++i) c.a_[i] -= b.a_[i];
    return c;
  }
  friend Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& x : c.a_) x *= s;
    return c;
  }

  Vec apply(std::span<const double> x) const {
    Vec y(rows_, 0.0);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) y[i] += (*this)(i, j) * x[j];
    return y;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// Eigenvalues with algebraic multiplicity; complex values in conjugate pairs.
struct ComplexEigenSet {
  std::vector<std::complex<double>> values;
};

// Solve A x = b by LU with partial pivoting. Suitable for well-conditioned
// small systems; throws SingularMatrix when a pivot drops below
// 1e-12 * ||A||_inf. One step of iterative refinement backs the residual
// contract.
Vec solve_linear(const Matrix& A, std::span<const double> b);

// Full eigenvalue set of a general real square matrix: balanced Hessenberg
// reduction + shifted QR, with a Jacobi fast-path for symmetric input.
ComplexEigenSet eigenvalues(const Matrix& A);

// Metric-orthonormalize a frame with modified Gram-Schmidt under the inner
// product of an SPD matrix; returns the log of each diagonal stretching
// factor (the quantities a Lyapunov spectrum accumulates).
struct GramSchmidtResult {
  std::vector<Vec> frame;
  Vec log_norms;
};
GramSchmidtResult weighted_gram_schmidt(const std::vector<Vec>& frame, const Matrix& metric);

double dot(std::span<const double> a, std::span<const double> b);
double metric_dot(const Matrix& g, std::span<const double> a, std::span<const double> b);

// ---- scalar-generic kernels (used with nested duals inside AD paths) ----

// In-place LU solve of the n x n system held row-major in A. Pivoting
// compares the primal parts only; the dual layers ride along.
template <class T>
void solve_linear_inplace(std::vector<T>& A, std::vector<T>& b, int n) {
  double scale = 0.0;
  for (int i = 0; i < n * n; ++i) scale = std::max(scale, std::abs(scalar_value(A[i])));
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(scalar_value(A[k * n + k]));
    for (int i = k + 1; i < n; ++i) {
      double m = std::abs(scalar_value(A[i * n + k]));
      if (m > best) { best = m; piv = i; }
    }
    if (best < 1e-12 * (scale > 0.0 ? scale : 1.0))
      throw SingularMatrix("pivot " + std::to_string(k) + " below threshold");
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(A[k * n + j], A[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      T f = A[i * n + k] / A[k * n + k];
      for (int j = k + 1; j < n; ++j) A[i * n + j] = A[i * n + j] - f * A[k * n + j];
      b[i] = b[i] - f * b[k];
    }
  }
  for (int i = n - 1; i >= 0; --i) {
    T s = b[i];
    for (int j = i + 1; j < n; ++j) s = s - A[i * n + j] * b[j];
    b[i] = s / A[i * n + i];
  }
}

// Degeneracy test used for metrics and Lagrangian Hessians: the determinant
// scaled by the n-th power of the max absolute row sum must exceed 1e-12.
// Returns the scaled determinant.
double scaled_determinant(std::span<const double> A, int n);

template <class T>
void check_nondegenerate(const std::vector<T>& A, int n, const char* context) {
  std::vector<double> P(n * n);
  for (int i = 0; i < n * n; ++i) P[i] = scalar_value(A[i]);
  if (std::abs(scaled_determinant(P, n)) < 1e-12)
    throw DegenerateMetric(std::string(context) + ": scaled determinant below 1e-12");
}

// Inverse of the n x n matrix in A (row-major), Gauss-Jordan with partial
// pivoting on primal parts. Throws DegenerateMetric when the determinant,
// scaled by the max row norm, falls below 1e-12.
template <class T>
std::vector<T> invert_scaled(const std::vector<T>& A_in, int n, const char* context) {
  check_nondegenerate(A_in, n, context);
  std::vector<T> A = A_in;
  std::vector<T> I(n * n, T(0.0));
  for (int i = 0; i < n; ++i) I[i * n + i] = T(1.0);
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(scalar_value(A[k * n + k]));
    for (int i = k + 1; i < n; ++i) {
      double m = std::abs(scalar_value(A[i * n + k]));
      if (m > best) { best = m; piv = i; }
    }
    if (piv != k) {
      for (int j = 0; j < n; ++j) {
        std::swap(A[k * n + j], A[piv * n + j]);
        std::swap(I[k * n + j], I[piv * n + j]);
      }
    }
    T inv_p = 1.0 / A[k * n + k];
    for (int j = 0; j < n; ++j) {
      A[k * n + j] = A[k * n + j] * inv_p;
      I[k * n + j] = I[k * n + j] * inv_p;
    }
    for (int i = 0; i < n; ++i) {
      if (i == k) continue;
      T f = A[i * n + k];
      for (int j = 0; j < n; ++j) {
        A[i * n + j] = A[i * n + j] - f * A[k * n + j];
        I[i * n + j] = I[i * n + j] - f * I[k * n + j];
      }
    }
  }
  return I;
}

}  // namespace geostab::num

#endif
