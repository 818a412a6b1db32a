#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "paramshift/adam.hpp"
#include "paramshift/directions.hpp"
#include "paramshift/metrics.hpp"
#include "paramshift/reconstructor.hpp"
#include "paramshift/rng.hpp"
#include "paramshift/shiftable.hpp"

namespace paramshift {

struct DiscoveryConfig {
  std::size_t K = 8;
  double T = 1.0;
  double lambda = 2.5e-3;
  double lr = 1e-4;
  std::size_t iterations = 10000;
  std::size_t batch = 32;
  /// Held-out pairs used for per-direction accuracy.
  std::size_t heldout = 512;

  double epsilon = 0.1;
  std::size_t power_iterations = 10;
  std::size_t hessian_batch = 512;
  /// Number of eigenvectors spanning the hybrid search space.
  std::size_t eigen_count = 8;
  /// Reuse one latent batch for every power step instead of resampling.
  bool fixed_hessian_batch = false;

  std::uint64_t seed = 0;

  /// Throws ValueError unless every field is positive and K <= `dim`.
  void validate(std::size_t dim) const;
  nlohmann::json to_json() const;
};

// ---- SVD baseline ----------------------------------------------------------

/// One direction per singular value of the flattened kernel.
DirectionSet svd_baseline(const GeneratorModel& model, int layer);

// ---- spectrum --------------------------------------------------------------

using GradFn = std::function<Vec(const Vec&)>;

/// (g(eps v) - g(-eps v)) / (2 eps ||v||): a Hessian-vector product estimate.
Vec power_iteration_step(const Vec& v, double eps, const GradFn& grad_fn);

struct Spectrum {
  std::vector<Vec> vectors;  // orthonormal, raw parameter space
  Vec eigenvalues;           // ||H v||, descending
};

/// Top `count` Hessian eigendirections of the expected displacement at 0 by
/// power iteration with deflation after every step. Each vector takes
/// cfg.power_iterations steps; each step draws cfg.hessian_batch latents
/// (shared by the two gradient calls) unless cfg.fixed_hessian_batch.
Spectrum top_k_eigendirections(const ShiftableGenerator& gen, const PerceptualMetric& metric,
                               const DiscoveryConfig& cfg, std::size_t count);

/// The spectrum as a raw_kernel DirectionSet (method "spectrum").
DirectionSet spectrum_directions(const Spectrum& s, int layer, double T);

// ---- optimization ----------------------------------------------------------

struct LossPoint {
  std::size_t iteration = 0;
  double total = 0.0;
  double ce = 0.0;
  double mae = 0.0;
};

/// Everything one optimization training run mutates.
struct OptState {
  DirectionSet dirs;
  Reconstructor reconstructor;
  Adam<float> dir_optimizer;
  Adam<float> rec_optimizer;
  Rng rng;
  /// When false, directions stay frozen and only the reconstructor learns.
  bool learn_directions = true;

  OptState(DirectionSet d, const DiscoveryConfig& cfg, std::size_t image_channels = 1);
};

/// One Adam step on directions and reconstructor for
/// mean[CE(k, k_hat) + lambda |t - t_hat|], with k ~ U{0..K-1}, t ~ U[-T, T]
/// and fresh latents, followed by re-normalization of every direction.
LossPoint train_step_opt(const ShiftableGenerator& gen, OptState& state, const DiscoveryConfig& cfg);

struct HeldoutAccuracy {
  double overall = 0.0;
  Vec per_direction;
};

/// Direction classification accuracy on freshly sampled pairs.
HeldoutAccuracy heldout_accuracy(const ShiftableGenerator& gen, const DirectionSet& dirs, const Reconstructor& r,
                                 const DiscoveryConfig& cfg, std::uint64_t seed);

struct DiscoveryResult {
  DirectionSet dirs;
  std::vector<LossPoint> curve;
  Reconstructor reconstructor;
  HeldoutAccuracy accuracy;
};

/// Called after every training step with the step index and the state.
using StepObserver = std::function<void(std::size_t, const OptState&)>;

/// Runs cfg.iterations training steps from `init`, scores directions by
/// held-out accuracy and sorts them. The loss curve keeps every step.
DiscoveryResult train_directions(const ShiftableGenerator& gen, DirectionSet init, const DiscoveryConfig& cfg,
                                 const std::string& method, bool learn_directions = true,
                                 const StepObserver& observe = {});

/// Random unit rows (K, n), seeded.
Tensor<float> random_unit_rows(std::size_t k, std::size_t n, std::uint64_t seed);

/// Optimization method over the singular values of the layer's flattened kernel.
DiscoveryResult discover_opt(const GeneratorModel& model, int layer, const DiscoveryConfig& cfg);

/// Optimization method restricted to the span of the top cfg.eigen_count eigenvectors,
/// started from identity coefficients.
DiscoveryResult discover_hybrid(const ShiftableGenerator& gen, int layer, const PerceptualMetric& metric,
                                const DiscoveryConfig& cfg);
/// Same, with precomputed eigenvectors.
DiscoveryResult discover_hybrid(const ShiftableGenerator& gen, const Spectrum& spectrum, int layer,
                                const DiscoveryConfig& cfg, const StepObserver& observe = {});

/// Largest distance of any expanded direction from the span of `basis` rows.
double span_residual(const DirectionSet& dirs);

// ---- calibration -----------------------------------------------------------

struct CalibrationBand {
  double lo = 0.01;
  double hi = 0.1;
};

/// Bisection in log t over [1e-4, 1e6] for the T at which the median over
/// directions of expected_displacement(T xi_k) hits the geometric centre of
/// the band. Throws ValueError when the band is unreachable.
double calibrate_shift_range(const ShiftableGenerator& gen, const DirectionSet& dirs, const PerceptualMetric& metric,
                             const Tensor<float>& z, CalibrationBand band = {});

/// Latents (n, dim) from a seeded standard normal.
Tensor<float> sample_normal(std::size_t n, std::size_t dim, std::uint64_t seed);

}  // namespace paramshift
