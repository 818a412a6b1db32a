#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "paramshift/generator.hpp"
#include "paramshift/rng.hpp"
#include "paramshift/scene.hpp"

namespace paramshift {

struct DistillConfig {
  DatasetSpec data;  // image size, radius mode and root seed
  std::size_t steps = 20000;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::size_t heldout = 512;
  /// Training-curve sampling interval (0 disables the curve).
  std::size_t log_every = 500;
};

struct DistillResult {
  GeneratorModel model;
  double initial_heldout_mse = 0.0;
  double final_heldout_mse = 0.0;
  std::vector<std::pair<std::size_t, double>> curve;  // (step, training loss)
};

/// (n, d) standard-normal latents.
Tensor<float> sample_latents(Rng& rng, std::size_t n, std::size_t d = GeneratorModel::kLatentDim);
/// Renderer targets for latents, shape (n, 1, size, size).
Tensor<float> latent_targets(const Tensor<float>& z, RadiusMode mode, std::size_t size = 32);
/// Mean per-pixel squared error against the renderer on `z`.
double heldout_mse(const GeneratorModel& model, const Tensor<float>& z, RadiusMode mode);
/// Held-out latents used by distill_generator for a given root seed.
Tensor<float> heldout_latents(std::uint64_t seed, std::size_t n);

/// Supervised distillation of the renderer into a freshly initialized
/// generator with Adam on per-pixel squared error. Throws NumericError with
/// the failing step index when the loss stops being finite.
DistillResult distill_generator(const DistillConfig& cfg,
                                const std::function<void(std::size_t, double)>& progress = {});

}  // namespace paramshift
