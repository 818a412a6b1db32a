#include "paramshift/discovery.hpp"

#include <algorithm>
#include <cmath>

#include "paramshift/distill.hpp"

namespace paramshift {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValueError("invalid discovery config: " + what);
}

// Sign convention: the entry of largest magnitude is positive.
void fix_sign(Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (!v.empty() && v[best] < 0)
    for (auto& x : v) x = -x;
}

Vec random_unit(Rng& rng, std::size_t n) { return normalized(rng.normal_vector(n)); }

}  // namespace

void DiscoveryConfig::validate(std::size_t dim) const {
  require(K > 0, "K must be positive");
  require(K <= dim, "K = " + std::to_string(K) + " exceeds the parametrization dimension " + std::to_string(dim));
  require(T > 0 && std::isfinite(T), "T must be positive");
  require(lambda >= 0 && std::isfinite(lambda), "lambda must be non-negative");
  require(lr > 0 && std::isfinite(lr), "lr must be positive");
  require(batch > 0, "batch must be positive");
  require(heldout > 0, "heldout must be positive");
  require(epsilon > 0 && std::isfinite(epsilon), "epsilon must be positive");
  require(power_iterations > 0, "power_iterations must be positive");
  require(hessian_batch > 0, "hessian_batch must be positive");
  require(eigen_count > 0, "eigen_count must be positive");
}

nlohmann::json DiscoveryConfig::to_json() const {
  return {{"K", K},
          {"T", T},
          {"lambda", lambda},
          {"lr", lr},
          {"iterations", iterations},
          {"batch", batch},
          {"heldout", heldout},
          {"epsilon", epsilon},
          {"power_iterations", power_iterations},
          {"hessian_batch", hessian_batch},
          {"eigen_count", eigen_count},
          {"fixed_hessian_batch", fixed_hessian_batch},
          {"seed", seed}};
}

Tensor<float> sample_normal(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  return sample_latents(rng, n, dim);
}

DirectionSet svd_baseline(const GeneratorModel& model, int layer) {
  if (!GeneratorModel::is_conv(layer)) throw ValueError("svd baseline needs a conv layer, got " + layer_name(layer));
  SingularBasis sb = singular_basis(model, layer);
  const std::size_t n = sb.sigma.size();
  DirectionSet d;
  d.layer = layer;
  d.kind = Parametrization::singular_values;
  d.basis = std::move(sb.basis);
  d.sigma = std::move(sb.sigma);
  d.coeffs = Tensor<float>({n, n});
  for (std::size_t k = 0; k < n; ++k) {
    d.coeffs[k * n + k] = 1.0f;
    d.info.push_back({"sigma" + std::to_string(k), "svd", d.sigma[k], 0.0});
  }
  return d;
}

Vec power_iteration_step(const Vec& v, double eps, const GradFn& grad_fn) {
  const double nv = norm(v);
  if (!(nv > 0)) throw DegenerateDirection("power iteration needs a non-zero vector");
  if (!(eps > 0)) throw ValueError("power iteration step size must be positive");
  Vec plus(v.size()), minus(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    plus[i] = eps * v[i];
    minus[i] = -eps * v[i];
  }
  const Vec gp = grad_fn(plus);
  const Vec gm = grad_fn(minus);
  if (gp.size() != v.size() || gm.size() != v.size()) throw ShapeError("gradient has the wrong dimension");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = (gp[i] - gm[i]) / (2.0 * eps * nv);
    if (!std::isfinite(out[i])) throw NumericError("non-finite Hessian-vector estimate");
  }
  return out;
}

Spectrum top_k_eigendirections(const ShiftableGenerator& gen, const PerceptualMetric& metric,
                               const DiscoveryConfig& cfg, std::size_t count) {
  const std::size_t dim = gen.shift_dim();
  if (count == 0 || count > dim) {
    throw ValueError("eigenvector count " + std::to_string(count) + " must lie in [1, " + std::to_string(dim) + "]");
  }
  require(cfg.epsilon > 0, "epsilon must be positive");
  require(cfg.power_iterations > 0, "power_iterations must be positive");
  require(cfg.hessian_batch > 0, "hessian_batch must be positive");

  Rng init_rng = Rng::derive(cfg.seed, "spectrum.init");
  Rng batch_rng = Rng::derive(cfg.seed, "spectrum.batches");
  std::optional<DisplacementProbe<float>> fixed;
  if (cfg.fixed_hessian_batch) fixed.emplace(gen, metric, sample_latents(batch_rng, cfg.hessian_batch, gen.latent_dim()));

  Spectrum out;
  for (std::size_t j = 0; j < count; ++j) {
    Vec v, hv;
    bool done = false;
    for (int attempt = 0; attempt < 2 && !done; ++attempt) {
      try {
        v = project_orthogonal(random_unit(init_rng, dim), out.vectors);
        v = normalized(v);
        for (std::size_t it = 0; it < cfg.power_iterations; ++it) {
          std::optional<DisplacementProbe<float>> local;
          if (!fixed) local.emplace(gen, metric, sample_latents(batch_rng, cfg.hessian_batch, gen.latent_dim()));
          const DisplacementProbe<float>& probe = fixed ? *fixed : *local;
          hv = power_iteration_step(v, cfg.epsilon, [&](const Vec& a) { return probe.gradient(a); });
          v = normalized(project_orthogonal(hv, out.vectors));
        }
        done = true;
      } catch (const DegenerateDirection&) {
        if (attempt == 1) {
          throw DegenerateDirection("power iteration for eigenvector " + std::to_string(j) +
                                    " collapsed twice; the displacement is flat on the remaining subspace");
        }
      }
    }
    fix_sign(v);
    out.vectors.push_back(std::move(v));
    out.eigenvalues.push_back(norm(hv));
  }

  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.eigenvalues[a] > out.eigenvalues[b]; });
  Spectrum sorted;
  for (auto i : order) {
    sorted.vectors.push_back(out.vectors[i]);
    sorted.eigenvalues.push_back(out.eigenvalues[i]);
  }
  return sorted;
}

DirectionSet spectrum_directions(const Spectrum& s, int layer, double T) {
  if (s.vectors.empty()) throw ValueError("empty spectrum");
  const std::size_t k = s.vectors.size(), d = s.vectors[0].size();
  DirectionSet out;
  out.layer = layer;
  out.kind = Parametrization::raw_kernel;
  out.T = T;
  out.coeffs = Tensor<float>({k, d});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.coeffs[i * d + j] = static_cast<float>(s.vectors[i][j]);
    out.info.push_back({"eig" + std::to_string(i), "spectrum", s.eigenvalues[i], s.eigenvalues[i]});
  }
  out.renormalize();
  return out;
}

OptState::OptState(DirectionSet d, const DiscoveryConfig& cfg, std::size_t image_channels)
    : dirs(std::move(d)),
      reconstructor(dirs.count(), Rng::derive_seed(cfg.seed, "opt.reconstructor"), image_channels),
      dir_optimizer(AdamConfig{cfg.lr}),
      rec_optimizer(AdamConfig{cfg.lr}),
      rng(Rng::derive(cfg.seed, "opt.batches")) {}

namespace {

struct PairBatch {
  Tensor<float> z;
  std::vector<std::size_t> k;
  std::vector<float> t;
};

PairBatch sample_pairs(Rng& rng, std::size_t n, std::size_t latent_dim, std::size_t k, double T) {
  PairBatch b;
  b.z = sample_latents(rng, n, latent_dim);
  for (std::size_t i = 0; i < n; ++i) {
    b.k.push_back(static_cast<std::size_t>(rng.below(k)));
    b.t.push_back(static_cast<float>(rng.uniform(-T, T)));
  }
  return b;
}

// Original and shifted images for a batch, concatenated along channels.
Var<float> pair_images(Graph<float>& g, const ShiftableGenerator& gen, const DirectionSet& dirs, Var<float> coeffs,
                       const PairBatch& b) {
  Var<float> shift = scale_rows(gather_rows(coeffs, b.k), b.t);
  if (dirs.kind != Parametrization::raw_kernel) shift = matmul(shift, g.constant(dirs.basis));
  Var<float> prefix = g.constant(gen.prefix(b.z));
  Var<float> original = gen.tail(g, prefix, std::nullopt);
  Var<float> shifted = gen.tail(g, prefix, shift);
  return concat(original, shifted);
}

}  // namespace

LossPoint train_step_opt(const ShiftableGenerator& gen, OptState& state, const DiscoveryConfig& cfg) {
  DirectionSet& dirs = state.dirs;
  if (dirs.raw_dim() != gen.shift_dim()) throw ShapeError("direction dimension does not match the generator block");
  const PairBatch b = sample_pairs(state.rng, cfg.batch, gen.latent_dim(), dirs.count(), dirs.T);

  Graph<float> g;
  Var<float> coeffs = g.input(dirs.coeffs, state.learn_directions);
  Var<float> pair = pair_images(g, gen, dirs, coeffs, b);
  auto rvars = state.reconstructor.bind(g, true);
  auto out = Reconstructor::forward(rvars, pair);
  Var<float> ce = mean(softmax_cross_entropy(out.logits, b.k));
  Var<float> mae = mean(abs_error(out.t, g.constant(Tensor<float>({cfg.batch}, b.t))));
  Var<float> total = add(ce, scale(mae, static_cast<float>(cfg.lambda)));
  try {
    g.backward(total);
  } catch (const NumericError& e) {
    throw NumericError(std::string("non-finite loss gradient: ") + e.what());
  }

  std::vector<const Tensor<float>*> grads;
  for (const auto& v : rvars) grads.push_back(&v.grad());
  state.rec_optimizer.step(state.reconstructor.params(), grads);
  if (state.learn_directions) {
    state.dir_optimizer.step(dirs.coeffs, coeffs.grad());
    dirs.renormalize();
  }
  LossPoint p;
  p.iteration = state.rec_optimizer.steps();
  p.total = total.value().item();
  p.ce = ce.value().item();
  p.mae = mae.value().item();
  return p;
}

HeldoutAccuracy heldout_accuracy(const ShiftableGenerator& gen, const DirectionSet& dirs, const Reconstructor& r,
                                 const DiscoveryConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "opt.heldout");
  const std::size_t k = dirs.count();
  std::vector<std::size_t> hits(k, 0), seen(k, 0);
  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < cfg.heldout; start += chunk) {
    const std::size_t n = std::min(chunk, cfg.heldout - start);
    const PairBatch b = sample_pairs(rng, n, gen.latent_dim(), k, dirs.T);
    Graph<float> g;
    Var<float> pair = pair_images(g, gen, dirs, g.constant(dirs.coeffs), b);
    auto out = Reconstructor::forward(r.bind(g, false), pair);
    const auto& logits = out.logits.value();
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (logits[i * k + j] > logits[i * k + best]) best = j;
      ++seen[b.k[i]];
      if (best == b.k[i]) ++hits[b.k[i]];
    }
  }
  HeldoutAccuracy acc;
  std::size_t total_hits = 0;
  for (std::size_t j = 0; j < k; ++j) {
    total_hits += hits[j];
    acc.per_direction.push_back(seen[j] ? static_cast<double>(hits[j]) / static_cast<double>(seen[j]) : 0.0);
  }
  acc.overall = static_cast<double>(total_hits) / static_cast<double>(cfg.heldout);
  return acc;
}

DiscoveryResult train_directions(const ShiftableGenerator& gen, DirectionSet init, const DiscoveryConfig& cfg,
                                 const std::string& method, bool learn_directions, const StepObserver& observe) {
  cfg.validate(init.coord_dim());
  if (init.count() != cfg.K) throw ValueError("initial direction count differs from K");
  init.T = cfg.T;
  const Shape img = gen.image_shape();
  if (img.size() != 3) throw ShapeError("reconstructor training needs (C, H, W) images");
  OptState state(std::move(init), cfg, img[0]);
  state.learn_directions = learn_directions;

  DiscoveryResult res;
  for (std::size_t i = 0; i < cfg.iterations; ++i) {
    res.curve.push_back(train_step_opt(gen, state, cfg));
    if (observe) observe(i, state);
  }
  res.accuracy = heldout_accuracy(gen, state.dirs, state.reconstructor, cfg, cfg.seed);
  res.dirs = std::move(state.dirs);
  res.dirs.info.clear();
  for (std::size_t k = 0; k < res.dirs.count(); ++k) {
    res.dirs.info.push_back({method + std::to_string(k), method, res.accuracy.per_direction[k], 0.0});
  }
  res.dirs.meta["method"] = method;
  res.dirs.meta["config"] = cfg.to_json();
  res.dirs.meta["heldout_accuracy"] = res.accuracy.overall;
  sort_by_score(res.dirs);
  res.reconstructor = std::move(state.reconstructor);
  return res;
}

Tensor<float> random_unit_rows(std::size_t k, std::size_t n, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "opt.init");
  Tensor<float> out({k, n});
  for (std::size_t i = 0; i < k; ++i) {
    const Vec v = random_unit(rng, n);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<float>(v[j]);
  }
  return out;
}

DiscoveryResult discover_opt(const GeneratorModel& model, int layer, const DiscoveryConfig& cfg) {
  DirectionSet init = svd_baseline(model, layer);
  cfg.validate(init.coord_dim());
  init.coeffs = random_unit_rows(cfg.K, init.coord_dim(), cfg.seed);
  init.info.clear();
  init.renormalize();
  return train_directions(LayerView(model, layer), std::move(init), cfg, "optimization");
}

DiscoveryResult discover_hybrid(const ShiftableGenerator& gen, const Spectrum& spectrum, int layer,
                                const DiscoveryConfig& cfg, const StepObserver& observe) {
  const std::size_t m = spectrum.vectors.size();
  if (m == 0) throw ValueError("hybrid search needs at least one eigenvector");
  cfg.validate(m);
  const std::size_t d = spectrum.vectors[0].size();
  DirectionSet init;
  init.layer = layer;
  init.kind = Parametrization::eigen_coeffs;
  init.basis = Tensor<float>({m, d});
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < d; ++i) init.basis[j * d + i] = static_cast<float>(spectrum.vectors[j][i]);
  init.coeffs = Tensor<float>({cfg.K, m});
  for (std::size_t k = 0; k < cfg.K; ++k) init.coeffs[k * m + k] = 1.0f;
  auto res = train_directions(gen, std::move(init), cfg, "hybrid", true, observe);
  res.dirs.meta["eigenvalues"] = spectrum.eigenvalues;
  return res;
}

DiscoveryResult discover_hybrid(const ShiftableGenerator& gen, int layer, const PerceptualMetric& metric,
                                const DiscoveryConfig& cfg) {
  return discover_hybrid(gen, top_k_eigendirections(gen, metric, cfg, cfg.eigen_count), layer, cfg);
}

double span_residual(const DirectionSet& dirs) {
  if (dirs.kind == Parametrization::raw_kernel) return 0.0;
  const std::size_t m = dirs.coord_dim(), d = dirs.raw_dim();
  std::vector<Vec> basis;
  for (std::size_t j = 0; j < m; ++j) {
    basis.emplace_back(dirs.basis.ptr() + j * d, dirs.basis.ptr() + (j + 1) * d);
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < dirs.count(); ++k) {
    Vec v = dirs.raw_direction(k);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        const double c = dot(v, b) / dot(b, b);
        for (std::size_t i = 0; i < d; ++i) v[i] -= c * b[i];
      }
    }
    worst = std::max(worst, norm(v));
  }
  return worst;
}

double calibrate_shift_range(const ShiftableGenerator& gen, const DirectionSet& dirs, const PerceptualMetric& metric,
                             const Tensor<float>& z, CalibrationBand band) {
  if (dirs.count() == 0) throw ValueError("calibration needs at least one direction");
  if (!(band.lo > 0 && band.hi > band.lo)) throw ValueError("calibration band must satisfy 0 < lo < hi");
  const DisplacementProbe<float> probe(gen, metric, z);
  std::vector<Vec> xi;
  for (std::size_t k = 0; k < dirs.count(); ++k) xi.push_back(dirs.raw_direction(k));

  auto median_at = [&](double t) {
    Vec vals;
    for (const auto& x : xi) {
      Vec a(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) a[i] = t * x[i];
      double v;
      try {
        v = probe.value(a);
      } catch (const NumericError&) {
        v = std::numeric_limits<double>::infinity();
      }
      vals.push_back(v);
    }
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    return n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  };

  const double target = std::sqrt(band.lo * band.hi);
  double lo = std::log(1e-4), hi = std::log(1e6);
  const double at_lo = median_at(std::exp(lo)), at_hi = median_at(std::exp(hi));
  if (!(at_hi >= band.lo) || !(at_lo <= band.hi)) {
    throw ValueError("band unreachable: median displacement spans [" + std::to_string(at_lo) + ", " +
                     std::to_string(at_hi) + "] over t in [1e-4, 1e6]");
  }
  if (at_lo >= target) return std::exp(lo);
  for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (median_at(std::exp(mid)) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double T = std::exp(hi);
  const double m = median_at(T);
  if (m < band.lo || m > band.hi) {
    throw ValueError("band unreachable: displacement jumps past the band (median " + std::to_string(m) + " at T = " +
                     std::to_string(T) + ")");
  }
  return T;
}

}  // namespace paramshift
