#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "paramshift/rng.hpp"
#include "paramshift/tensor.hpp"

namespace paramshift {

inline constexpr double kBackground = 0.1;
inline constexpr double kFixedRadius = 6.0;
inline constexpr double kMinRadius = 3.0;
inline constexpr double kMaxRadius = 9.0;
inline constexpr double kMinCenter = 0.25;
inline constexpr double kMaxCenter = 0.75;
inline constexpr double kMinForeground = 0.6;
inline constexpr double kMaxForeground = 1.0;
/// Foreground used by the latent parametrization (not a latent factor).
inline constexpr double kLatentForeground = 0.8;

enum class RadiusMode { fixed, free };

RadiusMode parse_radius_mode(const std::string& s);
const char* radius_mode_name(RadiusMode mode);

/// Disc on a dark background. Centers are fractions of the image extent,
/// radius is in pixels.
struct SceneParams {
  double center_x = 0.5;
  double center_y = 0.5;
  double radius = kFixedRadius;
  double foreground = kLatentForeground;
};

struct DatasetSpec {
  std::size_t size = 32;
  std::size_t count = 4096;
  std::uint64_t seed = 0;
  RadiusMode radius_mode = RadiusMode::fixed;
};

/// Throws ValueError when a field is non-finite or outside its range.
void validate_scene(const SceneParams& p);

/// Pixel (x, y) samples at (x + 0.5, y + 0.5). Coverage is a smoothstep of
/// (radius - distance) clamped to [0, 1], a falloff one pixel wide.
/// Returns shape (size, size).
Tensor<float> render_scene(const SceneParams& p, std::size_t size = 32);
/// Same image in double precision, written into `out` (size * size values).
void render_scene_into(const SceneParams& p, std::size_t size, double* out);

SceneParams sample_scene(Rng& rng, const DatasetSpec& spec);

/// Latent coordinates to scene: z0, z1 drive the center through the normal
/// CDF; in free mode z2 drives the radius the same way. Other coordinates
/// are ignored.
SceneParams scene_from_latent(std::span<const double> z, RadiusMode mode);

struct Dataset {
  DatasetSpec spec;
  std::vector<SceneParams> scenes;
  Tensor<float> images;  // (count, 1, size, size)
};

/// Scene i is drawn from Rng::derive(spec.seed, i).
Dataset generate_dataset(const DatasetSpec& spec);
std::uint64_t dataset_hash(const Dataset& d);

}  // namespace paramshift
