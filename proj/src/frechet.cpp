#include "paramshift/frechet.hpp"

#include <algorithm>

#include "paramshift/error.hpp"

namespace paramshift {

FrechetStats fit_feature_stats(const Tensor<float>& features) {
  if (features.rank() != 2) throw ShapeError("feature stats expect (N, F) features, got " + shape_str(features.shape()));
  const std::size_t n = features.dim(0), f = features.dim(1);
  if (n < kMinStatsSamples) {
    throw ValueError("too few samples for feature stats: " + std::to_string(n) + " < " +
                     std::to_string(kMinStatsSamples));
  }
  FrechetStats s;
  s.count = n;
  s.mu.assign(f, 0.0);
  const float* x = features.ptr();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) s.mu[j] += x[i * f + j];
  for (auto& m : s.mu) m /= static_cast<double>(n);
  s.sigma = Matrix(f, f);
  Vec d(f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) d[j] = x[i * f + j] - s.mu[j];
    for (std::size_t a = 0; a < f; ++a)
      for (std::size_t b = a; b < f; ++b) s.sigma(a, b) += d[a] * d[b];
  }
  for (std::size_t a = 0; a < f; ++a) {
    for (std::size_t b = a; b < f; ++b) {
      s.sigma(a, b) /= static_cast<double>(n - 1);
      s.sigma(b, a) = s.sigma(a, b);
    }
  }
  return s;
}

FrechetStats fit_feature_stats(const PerceptualMetric& metric, const Tensor<float>& images) {
  return fit_feature_stats(metric.features(images));
}

FrechetStats pool_stats(const FrechetStats& a, const FrechetStats& b) {
  if (a.dim() != b.dim()) throw ShapeError("pool_stats: feature dimensions differ");
  const double na = static_cast<double>(a.count), nb = static_cast<double>(b.count), n = na + nb;
  const std::size_t f = a.dim();
  FrechetStats s;
  s.count = a.count + b.count;
  s.mu.resize(f);
  for (std::size_t j = 0; j < f; ++j) s.mu[j] = (na * a.mu[j] + nb * b.mu[j]) / n;
  s.sigma = Matrix(f, f);
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const double da = (a.mu[i] - s.mu[i]) * (a.mu[j] - s.mu[j]);
      const double db = (b.mu[i] - s.mu[i]) * (b.mu[j] - s.mu[j]);
      s.sigma(i, j) = ((na - 1) * a.sigma(i, j) + (nb - 1) * b.sigma(i, j) + na * da + nb * db) / (n - 1);
    }
  }
  return s;
}

double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
  if (a.dim() != b.dim()) throw ShapeError("frechet_distance: feature dimensions differ");
  double mean_term = 0.0;
  for (std::size_t j = 0; j < a.dim(); ++j) mean_term += (a.mu[j] - b.mu[j]) * (a.mu[j] - b.mu[j]);
  const Matrix ra = matrix_sqrt_psd(a.sigma);
  Matrix inner = matmul(matmul(ra, b.sigma), ra);
  for (std::size_t i = 0; i < inner.rows; ++i) {
    for (std::size_t j = i + 1; j < inner.cols; ++j) {
      const double m = 0.5 * (inner(i, j) + inner(j, i));
      inner(i, j) = inner(j, i) = m;
    }
  }
  const Matrix root = matrix_sqrt_psd(inner);
  double trace = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) trace += a.sigma(i, i) + b.sigma(i, i) - 2.0 * root(i, i);
  return std::max(0.0, mean_term + trace);
}

}  // namespace paramshift
