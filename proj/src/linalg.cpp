#include "paramshift/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace paramshift {

namespace {

constexpr int kMaxSweeps = 100;

void require_finite(const Matrix& a, const char* what) {
  for (double x : a.data)
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite input");
}

// Columns of `a` (m x n, m >= n) are rotated in place until mutually
// orthogonal; `v` accumulates the rotations. Returns sweeps used.
int hestenes(Matrix& a, Matrix& v) {
  const std::size_t m = a.rows, n = a.cols;
  const double fro2 = a.frobenius() * a.frobenius();
  const double tol = 1e-12 * fro2;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off2 = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        off2 += gamma * gamma;
        if (gamma == 0.0 || std::abs(gamma) <= 1e-17 * std::sqrt(alpha * beta)) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < v.rows; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (std::sqrt(2.0 * off2) <= tol) return sweep + 1;
  }
  throw ConvergenceError("svd_jacobi: no convergence after " + std::to_string(kMaxSweeps) + " sweeps");
}

// Fills columns flagged in `missing` with unit vectors orthogonal to all
// other columns of u.
void complete_columns(Matrix& u, const std::vector<bool>& missing) {
  const std::size_t m = u.rows;
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < u.cols; ++j) {
    if (!missing[j]) continue;
    for (;; ++candidate) {
      if (candidate >= m) throw ConvergenceError("svd_jacobi: could not complete the left basis");
      Vec e(m, 0.0);
      e[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.cols; ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          double d = 0;
          for (std::size_t i = 0; i < m; ++i) d += e[i] * u(i, k);
          for (std::size_t i = 0; i < m; ++i) e[i] -= d * u(i, k);
        }
      }
      const double nrm = norm(e);
      if (nrm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = e[i] / nrm;
        ++candidate;
        break;
      }
    }
  }
}

SvdFactors svd_tall(const Matrix& a) {
  const std::size_t m = a.rows, n = a.cols;
  Matrix w = a;
  Matrix v = Matrix::identity(n);
  hestenes(w, v);

  Vec sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdFactors f{Matrix(m, n), Vec(n), Matrix(n, n)};
  const double smax = n ? sigma[order[0]] : 0.0;
  const double cutoff = smax * 1e-13 * static_cast<double>(std::max(m, n));
  std::vector<bool> missing(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    f.S[j] = sigma[src];
    for (std::size_t i = 0; i < n; ++i) f.V(j, i) = v(i, src);
    if (sigma[src] <= cutoff || sigma[src] == 0.0) {
      missing[j] = true;
    } else {
      for (std::size_t i = 0; i < m; ++i) f.U(i, j) = w(i, src) / sigma[src];
    }
  }
  complete_columns(f.U, missing);
  return f;
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) throw ShapeError("matrix: expected " + std::to_string(r * c) + " values");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(const Vec& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

template <typename T>
Matrix Matrix::from_tensor(const Tensor<T>& t) {
  if (t.rank() != 2) throw ShapeError("matrix from tensor: rank 2 required, got " + shape_str(t.shape()));
  return Matrix(t.dim(0), t.dim(1), std::vector<double>(t.data().begin(), t.data().end()));
}

template <typename T>
Tensor<T> Matrix::to_tensor(Shape shape) const {
  return Tensor<T>(std::move(shape), std::vector<T>(data.begin(), data.end()));
}

template Matrix Matrix::from_tensor(const Tensor<float>&);
template Matrix Matrix::from_tensor(const Tensor<double>&);
template Tensor<float> Matrix::to_tensor(Shape) const;
template Tensor<double> Matrix::to_tensor(Shape) const;

Vec Matrix::row(std::size_t i) const { return Vec(data.begin() + i * cols, data.begin() + (i + 1) * cols); }

Vec Matrix::col(std::size_t j) const {
  Vec out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = (*this)(i, j);
  return out;
}

Matrix Matrix::transpose() const {
  Matrix t(cols, rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::frobenius() const {
  double s = 0;
  for (double x : data) s += x * x;
  return std::sqrt(s);
}

double Matrix::max_abs() const {
  double s = 0;
  for (double x : data) s = std::max(s, std::abs(x));
  return s;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner extents differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("matrix difference: shapes differ");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("matrix sum: shapes differ");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& x : c.data) x *= s;
  return c;
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("dot: lengths differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

Vec normalized(const Vec& a) {
  const double n = norm(a);
  if (n == 0.0) throw DegenerateDirection("cannot normalize a zero vector");
  Vec out(a);
  for (double& x : out) x /= n;
  return out;
}

SvdFactors svd_jacobi(const Matrix& a) {
  if (a.rows == 0 || a.cols == 0) throw ShapeError("svd_jacobi: empty matrix");
  require_finite(a, "svd_jacobi");
  if (a.rows >= a.cols) return svd_tall(a);
  // A^T = U' S V'  =>  A = V'^T S U'^T
  SvdFactors t = svd_tall(a.transpose());
  return SvdFactors{t.V.transpose(), std::move(t.S), t.U.transpose()};
}

SymEig sym_eig(const Matrix& m) {
  if (m.rows != m.cols || m.rows == 0) throw ShapeError("sym_eig: square non-empty matrix required");
  require_finite(m, "sym_eig");
  const std::size_t n = m.rows;
  const double scale = m.max_abs();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-8 * scale) throw ValueError("sym_eig: matrix is not symmetric");

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
  Matrix q = Matrix::identity(n);
  const double tol = 1e-15 * a.frobenius();

  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double off2 = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off2 += a(i, j) * a(i, j);
    if (std::sqrt(2.0 * off2) <= tol) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apq = a(p, r);
        if (apq == 0.0) continue;
        const double theta = (a(r, r) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akr = a(k, r);
          a(k, p) = c * akp - s * akr;
          a(k, r) = s * akp + c * akr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), ark = a(r, k);
          a(p, k) = c * apk - s * ark;
          a(r, k) = s * apk + c * ark;
        }
        a(p, r) = a(r, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double qkp = q(k, p), qkr = q(k, r);
          q(k, p) = c * qkp - s * qkr;
          q(k, r) = s * qkp + c * qkr;
        }
      }
    }
  }
  if (!converged) {
    double off2 = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off2 += a(i, j) * a(i, j);
    if (std::sqrt(2.0 * off2) > tol) throw ConvergenceError("sym_eig: no convergence after 100 sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymEig out{Vec(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = q(i, order[j]);
  }
  return out;
}

Matrix matrix_sqrt_psd(const Matrix& m) {
  const SymEig e = sym_eig(m);
  const std::size_t n = m.rows;
  Vec root(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (e.values[j] < -1e-6) {
      throw NumericError("matrix_sqrt_psd: eigenvalue " + std::to_string(e.values[j]) + " is materially negative");
    }
    root[j] = e.values[j] > 0 ? std::sqrt(e.values[j]) : 0.0;
  }
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += e.vectors(i, k) * root[k] * e.vectors(j, k);
      s(i, j) = s(j, i) = acc;
    }
  return s;
}

double orthonormality_error(const std::vector<Vec>& basis) {
  double err = 0;
  for (std::size_t i = 0; i < basis.size(); ++i)
    for (std::size_t j = i; j < basis.size(); ++j)
      err = std::max(err, std::abs(dot(basis[i], basis[j]) - (i == j ? 1.0 : 0.0)));
  return err;
}

Vec project_orthogonal(const Vec& v, const std::vector<Vec>& basis) {
  if (v.empty()) throw ValueError("project_orthogonal: empty vector");
  for (const auto& b : basis)
    if (b.size() != v.size()) throw ShapeError("project_orthogonal: basis vector length differs from v");
  if (orthonormality_error(basis) > 1e-6) throw ValueError("project_orthogonal: basis is not orthonormal");
  Vec out(v);
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) {
      const double c = dot(out, b);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * b[i];
    }
  }
  const double before = norm(v);
  const double after = norm(out);
  if (after == 0.0 || after <= 1e-10 * before) {
    throw DegenerateDirection("projection onto the orthogonal complement vanished");
  }
  return out;
}

}  // namespace paramshift
