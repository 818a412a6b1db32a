#include "paramshift/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "paramshift/distill.hpp"
#include "paramshift/rng.hpp"

namespace paramshift {

namespace {

Tensor<float> slice_rows(const Tensor<float>& t, std::size_t start, std::size_t n) {
  const std::size_t per = t.size() / t.dim(0);
  Shape s = t.shape();
  s[0] = n;
  return Tensor<float>(s, std::vector<float>(t.ptr() + start * per, t.ptr() + (start + n) * per));
}

constexpr std::size_t kChunk = 512;

// Generated images for latents z (rows processed in chunks), optionally shifted.
Tensor<float> render_chunked(const ShiftableGenerator& gen, const Tensor<float>& z, const Tensor<float>* shift) {
  const std::size_t n = z.dim(0);
  Shape s{n};
  const Shape img = gen.image_shape();
  s.insert(s.end(), img.begin(), img.end());
  Tensor<float> out(s);
  const std::size_t per = shape_size(img);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    const Tensor<float> part = gen.render(slice_rows(z, start, m), shift);
    std::copy(part.ptr(), part.ptr() + m * per, out.ptr() + start * per);
  }
  return out;
}

void check_symmetric_uniform(const std::vector<double>& g) {
  if (g.empty()) throw ValueError("t grid is empty");
  double scale = 0.0;
  for (double t : g) scale = std::max(scale, std::abs(t));
  const double tol = 1e-9 * std::max(scale, 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(g[i] + g[g.size() - 1 - i]) > tol) throw ValueError("t grid must be symmetric about 0");
    if (i >= 2 && std::abs((g[i] - g[i - 1]) - (g[1] - g[0])) > tol) throw ValueError("t grid must be uniform");
  }
  if (g.size() >= 2 && !(g[1] > g[0])) throw ValueError("t grid must be increasing");
}

}  // namespace

Tensor<float> latent_for_seed(std::uint64_t seed, std::size_t dim) {
  Rng rng = Rng::derive(seed, "latent");
  return sample_latents(rng, 1, dim);
}

std::vector<double> linspace(double lo, double hi, std::size_t steps) {
  if (steps == 0) return {};
  if (steps == 1) return {lo};
  std::vector<double> out(steps);
  const double span = hi - lo;
  for (std::size_t i = 0; i < steps; ++i) {
    double t = lo + span * static_cast<double>(i) / static_cast<double>(steps - 1);
    if (std::abs(t) <= 1e-12 * std::abs(span)) t = 0.0;
    out[i] = t;
  }
  out.back() = hi;
  return out;
}

Strip render_strip(const ShiftableGenerator& gen, const DirectionSet& dirs, const StripSpec& spec) {
  if (spec.steps < 2) throw ValueError("strip needs at least 2 steps");
  if (!(spec.t_min < spec.t_max)) throw ValueError("strip needs t_min < t_max");
  if (spec.seeds.empty()) throw ValueError("strip needs at least one seed");
  if (spec.k >= dirs.count()) throw ValueError("direction index " + std::to_string(spec.k) + " out of range");
  Strip s;
  s.t = linspace(spec.t_min, spec.t_max, spec.steps);
  if (std::find(s.t.begin(), s.t.end(), 0.0) == s.t.end()) throw ValueError("grid must include 0");
  s.seeds = spec.seeds;
  const Shape img = gen.image_shape();
  const std::size_t rows = spec.seeds.size(), cols = spec.steps, per = shape_size(img);
  const std::size_t h = img[img.size() - 2], w = img[img.size() - 1];
  if (per != h * w) throw ShapeError("strips need single-channel images");
  s.images = Tensor<float>({rows, cols, h, w});
  Tensor<float> z({rows, gen.latent_dim()});
  for (std::size_t r = 0; r < rows; ++r) {
    const Tensor<float> zr = latent_for_seed(spec.seeds[r], gen.latent_dim());
    std::copy(zr.ptr(), zr.ptr() + gen.latent_dim(), z.ptr() + r * gen.latent_dim());
  }
  const Tensor<float> prefix = gen.prefix(z);
  for (std::size_t c = 0; c < cols; ++c) {
    Tensor<float> out;
    if (s.t[c] == 0.0) {
      out = gen.render_from_prefix(prefix);
    } else {
      const Tensor<float> shift = dirs.raw_shift(spec.k, s.t[c]);
      out = gen.render_from_prefix(prefix, &shift);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(out.ptr() + r * per, out.ptr() + (r + 1) * per, s.images.ptr() + (r * cols + c) * per);
    }
  }
  std::vector<GrayImage> tiles;
  for (std::size_t i = 0; i < rows * cols; ++i) tiles.push_back(to_gray(slice_rows(s.images.reshaped({rows * cols, h, w}), i, 1)));
  s.grid = tile(tiles, cols, 1, 0);
  return s;
}

double ffd_baseline(const ShiftableGenerator& gen, const PerceptualMetric& metric, const FrechetStats& reference,
                    std::size_t samples, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "ffd.latents");
  const Tensor<float> z = sample_latents(rng, samples, gen.latent_dim());
  return frechet_distance(reference, fit_feature_stats(metric, render_chunked(gen, z, nullptr)));
}

std::vector<FfdPoint> ffd_curve(const ShiftableGenerator& gen, const DirectionSet& dirs, std::size_t k,
                                const std::vector<double>& t_grid, const PerceptualMetric& metric,
                                const FrechetStats& reference, std::size_t samples, std::uint64_t seed) {
  if (k >= dirs.count()) throw ValueError("direction index " + std::to_string(k) + " out of range");
  Rng rng = Rng::derive(seed, "ffd.latents");
  const Tensor<float> z = sample_latents(rng, samples, gen.latent_dim());
  std::vector<FfdPoint> out;
  for (double t : t_grid) {
    Tensor<float> images;
    if (t == 0.0) {
      images = render_chunked(gen, z, nullptr);
    } else {
      const Tensor<float> shift = dirs.raw_shift(k, t);
      images = render_chunked(gen, z, &shift);
    }
    out.push_back({t, frechet_distance(reference, fit_feature_stats(metric, images))});
  }
  return out;
}

FfdAsymmetry ffd_asymmetry(const ShiftableGenerator& gen, const DirectionSet& dirs, std::size_t k,
                           const std::vector<double>& t_grid, const PerceptualMetric& metric,
                           const FrechetStats& reference, std::size_t samples,
                           const std::vector<std::uint64_t>& seeds) {
  check_symmetric_uniform(t_grid);
  if (seeds.size() < 2) throw ValueError("noise estimation needs at least two seeds");
  FfdAsymmetry res;
  for (auto s : seeds) res.curves.push_back(ffd_curve(gen, dirs, k, t_grid, metric, reference, samples, s));
  const std::size_t n = t_grid.size();
  const double m = static_cast<double>(seeds.size());
  Vec mean(n, 0.0);
  for (const auto& c : res.curves)
    for (std::size_t i = 0; i < n; ++i) mean[i] += c[i].ffd / m;
  for (std::size_t i = 0; i < n; ++i) {
    double var = 0.0;
    for (const auto& c : res.curves) var += (c[i].ffd - mean[i]) * (c[i].ffd - mean[i]);
    res.noise = std::max(res.noise, std::sqrt(var / (m - 1)));
    res.asymmetry = std::max(res.asymmetry, std::abs(mean[i] - mean[n - 1 - i]));
  }
  return res;
}

Tensor<double> pixel_diff_heatmap(const ShiftableGenerator& gen, const DirectionSet& dirs, std::size_t k,
                                  const std::vector<double>& t_grid, std::size_t z_count, std::uint64_t seed) {
  check_symmetric_uniform(t_grid);
  if (k >= dirs.count()) throw ValueError("direction index " + std::to_string(k) + " out of range");
  if (z_count == 0) throw ValueError("heatmap needs at least one latent");
  Rng rng = Rng::derive(seed, "heatmap.latents");
  const Tensor<float> z = sample_latents(rng, z_count, gen.latent_dim());
  const Shape img = gen.image_shape();
  const std::size_t per = shape_size(img);
  std::vector<double> acc(per, 0.0);
  for (std::size_t start = 0; start < z_count; start += kChunk) {
    const std::size_t m = std::min(kChunk, z_count - start);
    const Tensor<double> prefix = gen.prefix(slice_rows(z, start, m)).cast<double>();
    Tensor<double> base;
    {
      Graph<double> g;
      base = gen.tail(g, g.constant(prefix), std::nullopt).value();
    }
    for (double t : t_grid) {
      if (t == 0.0) continue;
      const Vec xi = dirs.raw_direction(k);
      Tensor<double> shift({xi.size()});
      for (std::size_t i = 0; i < xi.size(); ++i) shift[i] = t * xi[i];
      Graph<double> g;
      const Tensor<double> moved = gen.tail(g, g.constant(prefix), g.constant(shift)).value();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t q = 0; q < per; ++q) {
          const double d = moved[i * per + q] - base[i * per + q];
          acc[q] += d * d;
        }
      }
    }
  }
  const double denom = static_cast<double>(z_count) * static_cast<double>(t_grid.size());
  for (auto& a : acc) a /= denom;
  Shape out_shape = img;
  if (out_shape.size() == 3 && out_shape[0] == 1) out_shape.erase(out_shape.begin());
  return Tensor<double>(out_shape, std::move(acc));
}

double top_half_mass(const Tensor<double>& heatmap) {
  const auto& s = heatmap.shape();
  if (s.size() < 2) throw ShapeError("heatmap needs (H, W) trailing axes");
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1], planes = heatmap.size() / (h * w);
  double top = 0.0, total = 0.0;
  for (std::size_t c = 0; c < planes; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double v = heatmap[(c * h + y) * w + x];
        total += v;
        if (y < h / 2) top += v;
      }
    }
  }
  if (total <= 0) throw ValueError("heatmap has no mass");
  return top / total;
}

const char* space_name(ReproductionSpace s) { return s == ReproductionSpace::z ? "z" : "activation"; }

ReproductionSpace parse_space(const std::string& s) {
  if (s == "z") return ReproductionSpace::z;
  if (s == "activation") return ReproductionSpace::activation;
  throw ValueError("unknown space '" + s + "' (expected z or activation)");
}

nlohmann::json ReproductionReport::to_json() const {
  nlohmann::json tr = nlohmann::json::array();
  for (const auto& [step, r] : trace) tr.push_back({{"step", step}, {"residual", r}});
  return {{"direction", direction},
          {"t", t},
          {"space", space_name(space)},
          {"baseline_residual", baseline_residual},
          {"final_residual", final_residual},
          {"ratio", baseline_residual > 0 ? final_residual / baseline_residual : 0.0},
          {"optimizer", {{"name", "adam"}, {"lr", config.lr}, {"steps", config.steps}, {"batch", config.batch},
                         {"eval_batch", config.eval_batch}, {"seed", config.seed}}},
          {"trace", tr}};
}

ReproductionReport reproduce_latent(const GeneratorModel& model, const DirectionSet& dirs, std::size_t k, double t,
                                    ReproductionSpace space, const ReproductionConfig& cfg) {
  if (k >= dirs.count()) throw ValueError("direction index " + std::to_string(k) + " out of range");
  if (cfg.batch == 0 || cfg.eval_batch == 0) throw ValueError("reproduction batches must be non-empty");
  const LayerView shifted(model, dirs.layer);
  const LayerView base(model, space == ReproductionSpace::z ? 0 : dirs.layer);
  const Tensor<float> shift = dirs.raw_shift(k, t);

  Rng rng = Rng::derive(cfg.seed, "reproduce.batches");
  const Tensor<float> z_opt = sample_latents(rng, cfg.batch, GeneratorModel::kLatentDim);
  const Tensor<float> z_eval = sample_latents(rng, cfg.eval_batch, GeneratorModel::kLatentDim);
  const Tensor<float> act_opt = base.prefix(z_opt), act_eval = base.prefix(z_eval);
  const Tensor<float> target_opt = shifted.render(z_opt, &shift), target_eval = shifted.render(z_eval, &shift);

  Shape h_shape(act_opt.shape().begin() + 1, act_opt.shape().end());
  ReproductionReport rep;
  rep.direction = k;
  rep.t = t;
  rep.space = space;
  rep.config = cfg;

  auto residual = [&](const Tensor<float>& h, const Tensor<float>& act, const Tensor<float>& target) {
    Graph<float> g;
    auto out = base.tail(g, add(g.constant(act), g.constant(h)), std::nullopt);
    return static_cast<double>(mean(sq_diff(out, g.constant(target), Reduction::sum)).value().item());
  };

  Tensor<float> h(h_shape, 0.0f);
  const Tensor<float> zero = h;
  Adam<float> opt(AdamConfig{cfg.lr});
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Graph<float> g;
    Var<float> hv = g.param(h);
    auto out = base.tail(g, add(g.constant(act_opt), hv), std::nullopt);
    Var<float> loss = mean(sq_diff(out, g.constant(target_opt), Reduction::sum));
    g.backward(loss);
    if (cfg.trace_every && step % cfg.trace_every == 0) rep.trace.emplace_back(step, loss.value().item());
    opt.step(h, hv.grad());
  }
  rep.baseline_residual = residual(zero, act_eval, target_eval);
  rep.final_residual = residual(h, act_eval, target_eval);
  if (rep.final_residual > rep.baseline_residual) {
    h = zero;
    rep.final_residual = rep.baseline_residual;
  }
  rep.h = h;
  return rep;
}

DirectionSet latent_translation_direction(const GeneratorModel& model, const std::vector<double>& c) {
  if (c.size() != GeneratorModel::kLatentDim) throw ShapeError("latent translation needs 8 values");
  const Tensor<float>& w = model.weight(0);
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  Vec delta(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += static_cast<double>(w[r * cols + j]) * c[j];
    delta[r * cols + cols - 1] = s;
  }
  const double len = norm(delta);
  if (!(len > 0)) throw DegenerateDirection("latent translation produces no parameter change");
  DirectionSet d;
  d.layer = 0;
  d.kind = Parametrization::raw_kernel;
  d.T = len;
  d.coeffs = Tensor<float>({1, delta.size()});
  for (std::size_t i = 0; i < delta.size(); ++i) d.coeffs[i] = static_cast<float>(delta[i] / len);
  d.info.push_back({"latent translation", "constructed", 0.0, 0.0});
  d.meta["translation"] = c;
  return d;
}

DirectionSet fit_radius_direction(const GeneratorModel& model, int layer, const RadiusFitConfig& cfg) {
  const LayerView view(model, layer);
  Rng rng = Rng::derive(cfg.seed, "radius.batches");
  Tensor<float> alpha({view.shift_dim()}, 0.0f);
  Adam<float> opt(AdamConfig{cfg.lr});
  std::vector<double> lat(GeneratorModel::kLatentDim), buf(GeneratorModel::kImageSize * GeneratorModel::kImageSize);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const Tensor<float> z = sample_latents(rng, cfg.batch, GeneratorModel::kLatentDim);
    Tensor<float> target({cfg.batch, 1, GeneratorModel::kImageSize, GeneratorModel::kImageSize});
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      for (std::size_t j = 0; j < lat.size(); ++j) lat[j] = z[i * lat.size() + j];
      SceneParams p = scene_from_latent(lat, RadiusMode::fixed);
      p.radius += cfg.delta;
      render_scene_into(p, GeneratorModel::kImageSize, buf.data());
      std::copy(buf.begin(), buf.end(), target.ptr() + i * buf.size());
    }
    Graph<float> g;
    Var<float> a = g.param(alpha);
    auto out = view.tail(g, g.constant(view.prefix(z)), a);
    Var<float> loss = mean(sq_diff(out, g.constant(target), Reduction::mean));
    g.backward(loss);
    opt.step(alpha, a.grad());
  }
  Vec v(alpha.data().begin(), alpha.data().end());
  const double len = norm(v);
  if (!(len > 0)) throw DegenerateDirection("radius fit produced no shift");
  DirectionSet d;
  d.layer = layer;
  d.kind = Parametrization::raw_kernel;
  d.T = len;
  d.coeffs = Tensor<float>({1, v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) d.coeffs[i] = static_cast<float>(v[i] / len);
  d.renormalize();
  d.info.push_back({"radius", "constructed", 0.0, 0.0});
  d.meta["radius_delta"] = cfg.delta;
  return d;
}

}  // namespace paramshift
