#pragma once

#include <cstddef>

#include "paramshift/linalg.hpp"
#include "paramshift/metrics.hpp"

namespace paramshift {

/// Gaussian fit of a feature population.
struct FrechetStats {
  Vec mu;
  Matrix sigma;  // unbiased covariance
  std::size_t count = 0;

  std::size_t dim() const { return mu.size(); }
};

inline constexpr std::size_t kMinStatsSamples = 64;

/// Mean and unbiased covariance of the rows of `features` (N, F), N >= 64.
FrechetStats fit_feature_stats(const Tensor<float>& features);
/// Same, on random-feature embeddings of images (N, 1, H, W).
FrechetStats fit_feature_stats(const PerceptualMetric& metric, const Tensor<float>& images);

/// Stats of the union of the two populations the arguments were fitted on.
FrechetStats pool_stats(const FrechetStats& a, const FrechetStats& b);

/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), clamped at 0.
double frechet_distance(const FrechetStats& a, const FrechetStats& b);

}  // namespace paramshift
