#pragma once

// Dense linear algebra in double precision: one-sided Jacobi SVD, cyclic
// Jacobi symmetric eigendecomposition, PSD square root, and projection onto
// the orthogonal complement of a set of orthonormal vectors.

#include <cstddef>
#include <vector>

#include "paramshift/tensor.hpp"

namespace paramshift {

using Vec = std::vector<double>;

/// Row-major rows x cols matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix diag(const Vec& d);
  template <typename T>
  static Matrix from_tensor(const Tensor<T>& t);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Vec row(std::size_t i) const;
  Vec col(std::size_t j) const;
  Matrix transpose() const;
  double frobenius() const;
  double max_abs() const;

  template <typename T>
  Tensor<T> to_tensor(Shape shape) const;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
Vec normalized(const Vec& a);

/// A = U * diag(S) * V with U (m x r), V (r x n), r = min(m, n).
struct SvdFactors {
  Matrix U;
  Vec S;
  Matrix V;
};

/// One-sided (Hestenes) Jacobi. Sweeps until the off-diagonal Frobenius norm
/// of the column Gram matrix is at most 1e-12 * ||A||_F^2; throws
/// ConvergenceError after 100 sweeps.
SvdFactors svd_jacobi(const Matrix& a);

struct SymEig {
  Vec values;  // descending
  Matrix vectors;  // column j pairs with values[j]
};

/// Cyclic Jacobi rotations. Rejects input with
/// max|M - M^T| > 1e-8 * max|M| (ValueError).
SymEig sym_eig(const Matrix& m);

/// Symmetric square root of a PSD matrix. Eigenvalues in [-1e-6, 0) are
/// treated as zero; anything more negative throws NumericError.
Matrix matrix_sqrt_psd(const Matrix& m);

/// v - sum_i <v, b_i> b_i, applied twice for numerical orthogonality.
/// Throws DegenerateDirection when nothing of v survives.
Vec project_orthogonal(const Vec& v, const std::vector<Vec>& basis);

/// max |<b_i, b_j> - delta_ij|.
double orthonormality_error(const std::vector<Vec>& basis);

}  // namespace paramshift
