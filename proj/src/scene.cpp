#include "paramshift/scene.hpp"

#include <algorithm>
#include <cmath>

namespace paramshift {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace

RadiusMode parse_radius_mode(const std::string& s) {
  if (s == "fixed") return RadiusMode::fixed;
  if (s == "free") return RadiusMode::free;
  throw ValueError("unknown radius mode '" + s + "' (expected fixed or free)");
}

const char* radius_mode_name(RadiusMode mode) { return mode == RadiusMode::fixed ? "fixed" : "free"; }

void validate_scene(const SceneParams& p) {
  if (!std::isfinite(p.center_x) || !std::isfinite(p.center_y) || !std::isfinite(p.radius) ||
      !std::isfinite(p.foreground)) {
    throw ValueError("scene parameters must be finite");
  }
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(p.center_x, kMinCenter, kMaxCenter) || !in(p.center_y, kMinCenter, kMaxCenter)) {
    throw ValueError("scene center outside [0.25, 0.75]");
  }
  if (p.radius < 0) throw ValueError("scene radius must be non-negative");
  if (!in(p.foreground, kMinForeground, kMaxForeground)) throw ValueError("foreground intensity outside [0.6, 1]");
}

void render_scene_into(const SceneParams& p, std::size_t size, double* out) {
  validate_scene(p);
  const double cx = p.center_x * static_cast<double>(size);
  const double cy = p.center_y * static_cast<double>(size);
  const double contrast = p.foreground - kBackground;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      out[y * size + x] = kBackground + contrast * smoothstep(p.radius - d);
    }
  }
}

Tensor<float> render_scene(const SceneParams& p, std::size_t size) {
  std::vector<double> buf(size * size);
  render_scene_into(p, size, buf.data());
  return Tensor<float>({size, size}, std::vector<float>(buf.begin(), buf.end()));
}

SceneParams sample_scene(Rng& rng, const DatasetSpec& spec) {
  SceneParams p;
  p.center_x = rng.uniform(kMinCenter, kMaxCenter);
  p.center_y = rng.uniform(kMinCenter, kMaxCenter);
  p.radius = spec.radius_mode == RadiusMode::fixed ? kFixedRadius : rng.uniform(kMinRadius, kMaxRadius);
  p.foreground = rng.uniform(kMinForeground, kMaxForeground);
  return p;
}

SceneParams scene_from_latent(std::span<const double> z, RadiusMode mode) {
  const std::size_t need = mode == RadiusMode::fixed ? 2 : 3;
  if (z.size() < need) throw ShapeError("scene_from_latent: latent too short");
  SceneParams p;
  p.center_x = kMinCenter + (kMaxCenter - kMinCenter) * normal_cdf(z[0]);
  p.center_y = kMinCenter + (kMaxCenter - kMinCenter) * normal_cdf(z[1]);
  p.radius = mode == RadiusMode::fixed ? kFixedRadius : kMinRadius + (kMaxRadius - kMinRadius) * normal_cdf(z[2]);
  p.foreground = kLatentForeground;
  return p;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.size == 0 || spec.count == 0) throw ValueError("dataset size and count must be positive");
  Dataset d{spec, {}, Tensor<float>({spec.count, 1, spec.size, spec.size})};
  d.scenes.reserve(spec.count);
  const std::size_t px = spec.size * spec.size;
  std::vector<double> buf(px);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(i));
    d.scenes.push_back(sample_scene(rng, spec));
    render_scene_into(d.scenes.back(), spec.size, buf.data());
    std::copy(buf.begin(), buf.end(), d.images.ptr() + i * px);
  }
  return d;
}

std::uint64_t dataset_hash(const Dataset& d) {
  std::uint64_t h = hash_tensor(d.images);
  h ^= splitmix64(d.spec.seed) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= splitmix64(static_cast<std::uint64_t>(d.spec.radius_mode)) + (h << 6) + (h >> 2);
  return h;
}

}  // namespace paramshift
