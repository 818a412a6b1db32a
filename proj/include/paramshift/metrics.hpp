#pragma once

#include <cstdint>
#include <string>

#include "paramshift/autodiff.hpp"
#include "paramshift/checkpoint.hpp"
#include "paramshift/linalg.hpp"
#include "paramshift/shiftable.hpp"

namespace paramshift {

enum class MetricKind { pixel_mse, pixel_sse, random_features };

const char* metric_name(MetricKind kind);
MetricKind parse_metric(const std::string& s);

/// Squared perceptual distance d^2 between image batches.
///
/// pixel_mse: mean over pixels of the squared difference.
/// pixel_sse: sum over pixels (used for vector-valued test generators).
/// random_features: mean over 32 features of the squared difference of a
///   frozen extractor conv3x3(1->16), leaky-relu, conv3x3(16->32),
///   leaky-relu, global average pool. Weights are seeded He-normal.
class PerceptualMetric {
 public:
  static constexpr std::size_t kFeatures = 32;

  static PerceptualMetric pixel_mse();
  static PerceptualMetric pixel_sse();
  static PerceptualMetric random_features(std::uint64_t seed);
  /// Builds a metric by name; `seed` only matters for random_features.
  static PerceptualMetric make(MetricKind kind, std::uint64_t seed = 0);

  MetricKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }

  /// Per-sample d^2 for batches of equal shape -> (N).
  template <typename T>
  Var<T> distance_sq(Var<T> a, Var<T> b) const;
  /// Feature vectors (N, 32) of images (N, 1, H, W); random_features only.
  template <typename T>
  Var<T> features(Var<T> images) const;

  /// d^2 of two single images or the per-sample values of two batches.
  std::vector<double> distance_sq(const Tensor<float>& a, const Tensor<float>& b) const;
  Tensor<float> features(const Tensor<float>& images, std::size_t batch = 256) const;

  const Tensor<float>& w1() const { return w1_; }
  const Tensor<float>& w2() const { return w2_; }

 private:
  MetricKind kind_ = MetricKind::pixel_mse;
  std::uint64_t seed_ = 0;
  Tensor<float> w1_;
  Tensor<float> w2_;

  friend PerceptualMetric metric_from_checkpoint(const Checkpoint& c);
};

Checkpoint to_checkpoint(const PerceptualMetric& m);
PerceptualMetric metric_from_checkpoint(const Checkpoint& c);

/// Expected perceptual change E_z d^2(G(z), G_{+alpha}(z)) over a fixed
/// latent batch, with the unshifted reference images cached. `gen` must
/// outlive the probe; the metric is copied.
template <typename T>
class DisplacementProbe {
 public:
  DisplacementProbe(const ShiftableGenerator& gen, const PerceptualMetric& metric, const Tensor<float>& z);

  std::size_t dim() const { return gen_->shift_dim(); }
  double value(const Vec& alpha) const;
  /// Gradient with respect to alpha, evaluated at alpha.
  Vec gradient(const Vec& alpha) const;
  std::pair<double, Vec> value_and_gradient(const Vec& alpha) const;

  /// Per-sample shifted images for a shared shift.
  Tensor<T> shifted_images(const Vec& alpha) const;
  const Tensor<T>& reference() const { return reference_; }

 private:
  const ShiftableGenerator* gen_;
  PerceptualMetric metric_;
  Tensor<T> prefix_;
  Tensor<T> reference_;
};

extern template class DisplacementProbe<float>;
extern template class DisplacementProbe<double>;

/// One-shot convenience over a fresh probe.
double expected_displacement(const ShiftableGenerator& gen, const PerceptualMetric& metric, const Vec& alpha,
                             const Tensor<float>& z);
Vec grad_displacement(const ShiftableGenerator& gen, const PerceptualMetric& metric, const Vec& alpha,
                      const Tensor<float>& z);

}  // namespace paramshift
