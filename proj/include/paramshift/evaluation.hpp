#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paramshift/adam.hpp"
#include "paramshift/directions.hpp"
#include "paramshift/frechet.hpp"
#include "paramshift/png.hpp"
#include "paramshift/scene.hpp"
#include "paramshift/shiftable.hpp"

namespace paramshift {

/// Latent vector (1, dim) for an integer seed.
Tensor<float> latent_for_seed(std::uint64_t seed, std::size_t dim);

/// `steps` evenly spaced values from lo to hi; a value within 1e-12 of the
/// span from zero is snapped to exactly 0.
std::vector<double> linspace(double lo, double hi, std::size_t steps);

// ---- strips ----------------------------------------------------------------

struct StripSpec {
  std::size_t k = 0;
  double t_min = -1.0;
  double t_max = 1.0;
  std::size_t steps = 7;
  std::vector<std::uint64_t> seeds = {0};
};

struct Strip {
  std::vector<double> t;           // column values, strictly increasing
  std::vector<std::uint64_t> seeds;  // row seeds
  Tensor<float> images;            // (rows, cols, H, W)
  GrayImage grid;
};

/// Rows are latent seeds, columns are shift magnitudes. The grid must
/// contain t = 0; that column is rendered without any shift.
Strip render_strip(const ShiftableGenerator& gen, const DirectionSet& dirs, const StripSpec& spec);

// ---- realism ---------------------------------------------------------------

struct FfdPoint {
  double t = 0.0;
  double ffd = 0.0;
};

/// Frechet feature distance between `reference` and `samples` generations at
/// each t. Latents are drawn from `seed` once and reused for every t, so the
/// t = 0 entry equals ffd_baseline() with the same seed exactly.
std::vector<FfdPoint> ffd_curve(const ShiftableGenerator& gen, const DirectionSet& dirs, std::size_t k,
                                const std::vector<double>& t_grid, const PerceptualMetric& metric,
                                const FrechetStats& reference, std::size_t samples, std::uint64_t seed);
double ffd_baseline(const ShiftableGenerator& gen, const PerceptualMetric& metric, const FrechetStats& reference,
                    std::size_t samples, std::uint64_t seed);

struct FfdAsymmetry {
  double asymmetry = 0.0;  // max_t |FFD(t) - FFD(-t)| of the mean curve
  double noise = 0.0;      // max over t of the across-seed standard deviation
  std::vector<std::vector<FfdPoint>> curves;
};

/// Curves for several sampling seeds over a grid symmetric about 0.
FfdAsymmetry ffd_asymmetry(const ShiftableGenerator& gen, const DirectionSet& dirs, std::size_t k,
                           const std::vector<double>& t_grid, const PerceptualMetric& metric,
                           const FrechetStats& reference, std::size_t samples,
                           const std::vector<std::uint64_t>& seeds);

// ---- locality --------------------------------------------------------------

/// Per-pixel mean of (G_{t xi}(z) - G(z))^2, rendered in double, over `z_count` latents and the
/// magnitudes in `t_grid`, which must be uniform and symmetric about 0.
/// Returns (H, W) for single-channel images, (C, H, W) otherwise.
Tensor<double> pixel_diff_heatmap(const ShiftableGenerator& gen, const DirectionSet& dirs, std::size_t k,
                                  const std::vector<double>& t_grid, std::size_t z_count, std::uint64_t seed);

/// Share of heatmap mass in rows [0, H/2).
double top_half_mass(const Tensor<double>& heatmap);

// ---- latent reproduction ---------------------------------------------------

enum class ReproductionSpace { z, activation };
const char* space_name(ReproductionSpace s);
ReproductionSpace parse_space(const std::string& s);

struct ReproductionConfig {
  double lr = 1e-2;
  std::size_t steps = 2000;
  std::size_t batch = 256;  // fixed optimization batch
  std::size_t eval_batch = 512;
  std::size_t trace_every = 50;
  std::uint64_t seed = 0;
};

struct ReproductionReport {
  std::size_t direction = 0;
  double t = 0.0;
  ReproductionSpace space = ReproductionSpace::z;
  double baseline_residual = 0.0;
  double final_residual = 0.0;
  std::vector<std::pair<std::size_t, double>> trace;  // (step, optimization-batch residual)
  Tensor<float> h;
  ReproductionConfig config;

  nlohmann::json to_json() const;
};

/// min_h E_z ||G(z + h) - G_{t xi_k}(z)||^2 (z space), or the same with a
/// single additive offset on the activation entering the shifted layer.
/// Residuals are per-sample sums of squares averaged over the evaluation
/// batch. If the optimized h does worse than h = 0 there, h = 0 is reported.
ReproductionReport reproduce_latent(const GeneratorModel& model, const DirectionSet& dirs, std::size_t k, double t,
                                    ReproductionSpace space, const ReproductionConfig& cfg);

// ---- constructed directions ------------------------------------------------

/// L0 direction whose shift by T = ||W_z c|| moves the bias column by W_z c,
/// so G_{theta + T xi}(z) = G_theta(z + c).
DirectionSet latent_translation_direction(const GeneratorModel& model, const std::vector<double>& c);

struct RadiusFitConfig {
  double delta = 2.0;  // radius change in pixels
  double lr = 1e-2;
  std::size_t steps = 1000;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

/// Raw direction at `layer` fitted with Adam so that G_{theta + alpha}(z)
/// matches the renderer with radius increased by cfg.delta. Returns
/// xi = alpha / ||alpha|| with T = ||alpha||.
DirectionSet fit_radius_direction(const GeneratorModel& model, int layer, const RadiusFitConfig& cfg);

}  // namespace paramshift
