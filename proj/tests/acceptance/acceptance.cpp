#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "paramshift/checkpoint.hpp"
#include "paramshift/cli.hpp"
#include "paramshift/discovery.hpp"
#include "paramshift/distill.hpp"
#include "paramshift/evaluation.hpp"
#include "paramshift/harness.hpp"
#include "paramshift/metrics.hpp"
#include "paramshift/runtime.hpp"

using namespace paramshift;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "!") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.3g", v); }

struct Context {
  fs::path cache;

  fs::path reference_path() const { return cache / "model_fixed.navg"; }

  /// Distilled fixed-radius generator at the default config, cached.
  GeneratorModel reference_model() const {
    if (fs::exists(reference_path())) return load_model(reference_path());
    fs::create_directories(cache);
    DistillConfig cfg;
    cfg.data.radius_mode = RadiusMode::fixed;
    cfg.log_every = 0;
    auto res = distill_generator(cfg);
    save_checkpoint(to_checkpoint(res.model), reference_path());
    return std::move(res.model);
  }
};

Vec scaled(Vec v, double t) {
  for (auto& x : v) x *= t;
  return v;
}

// ---- criteria --------------------------------------------------------------

Outcome autodiff_oracle(const Context&) {
  Outcome o;
  Rng rng(20240);
  double worst_all = 0.0;
  std::string worst_op;
  for (const auto& op : gradcheck::catalog()) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const auto inst = op.make(rng);
      worst = std::max(worst, gradcheck::check(inst, rng));
    }
    if (!(worst <= 1e-3)) o.require(false, op.name + " rel err " + sci(worst));
    if (worst >= worst_all) {
      worst_all = worst;
      worst_op = op.name;
    }
  }
  o.require(worst_all <= 1e-3, std::to_string(gradcheck::catalog().size()) + " ops x 20, worst " + worst_op + " " +
                                   sci(worst_all) + " <= 1e-3");
  return o;
}

Outcome linear_algebra(const Context&) {
  Outcome o;
  Rng r(64256);
  double svd_worst = 0.0, eig_worst = 0.0, sqrt_worst = 0.0;
  const std::vector<std::pair<std::size_t, std::size_t>> shapes = {{1, 1},  {2, 7},   {7, 2},   {16, 16}, {32, 9},
                                                                     {9, 72}, {64, 64}, {64, 256}, {256, 64}, {48, 200}};
  for (auto [m, n] : shapes) {
    Matrix a(m, n);
    for (auto& v : a.data) v = r.normal();
    const auto f = svd_jacobi(a);
    svd_worst = std::max(svd_worst, (matmul(matmul(f.U, Matrix::diag(f.S)), f.V) - a).max_abs() / a.max_abs());
    const Matrix sym = matmul(a.transpose(), a);
    const auto e = sym_eig(sym);
    eig_worst = std::max(eig_worst, (matmul(matmul(e.vectors, Matrix::diag(e.values)), e.vectors.transpose()) - sym)
                                            .max_abs() /
                                        sym.max_abs());
    const Matrix root = matrix_sqrt_psd(sym);
    sqrt_worst = std::max(sqrt_worst, (matmul(root, root) - sym).max_abs() / sym.max_abs());
  }
  o.require(svd_worst <= 1e-8, "svd " + sci(svd_worst) + " <= 1e-8");
  o.require(eig_worst <= 1e-8, "eig " + sci(eig_worst) + " <= 1e-8");
  o.require(sqrt_worst <= 1e-6, "sqrt " + sci(sqrt_worst) + " <= 1e-6");
  return o;
}

Outcome displacement_structure(const Context&) {
  Outcome o;
  const GeneratorModel model = GeneratorModel::initialize(31);
  const auto z = sample_normal(256, GeneratorModel::kLatentDim, 5);
  for (int layer : {2, 3}) {
    const LayerView view(model, layer);
    for (auto metric : {PerceptualMetric::pixel_mse(), PerceptualMetric::random_features(0)}) {
      const std::string tag = layer_name(layer) + "/" + metric_name(metric.kind());
      const DisplacementProbe<double> probe(view, metric, z);
      const Vec zero(view.shift_dim(), 0.0);
      o.require(probe.value(zero) == 0.0, tag + " E(0) == 0");
      DiscoveryConfig cfg;
      cfg.hessian_batch = 256;
      cfg.power_iterations = 30;
      cfg.fixed_hessian_batch = true;
      const auto spec = top_k_eigendirections(view, metric, cfg, 1);
      const Vec& v = spec.vectors[0];
      const double g0 = norm(probe.gradient(zero));
      const double g_scale = norm(probe.gradient(scaled(v, 0.01)));
      o.require(g0 <= 1e-5 * g_scale, tag + " |grad(0)| " + sci(g0) + " <= 1e-5 * " + sci(g_scale));
      Vec ratio;
      for (double eps : {0.01, 0.02, 0.04}) ratio.push_back(probe.value(scaled(v, eps)) / (eps * eps));
      const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
      const double spread = (*hi - *lo) / *lo;
      o.require(spread <= 0.05, tag + " E/eps^2 spread " + sci(spread) + " <= 0.05");
    }
  }
  return o;
}

Outcome spectrum_oracle(const Context&) {
  Outcome o;
  const LayerView view(GeneratorModel::initialize(47), 3);
  const auto metric = PerceptualMetric::pixel_mse();
  DiscoveryConfig cfg;
  cfg.hessian_batch = 256;
  cfg.fixed_hessian_batch = true;
  cfg.power_iterations = 150;
  cfg.epsilon = 1e-2;
  cfg.seed = 3;
  const std::size_t count = 8;
  const auto s = top_k_eigendirections(view, metric, cfg, count);

  Rng batch_rng = Rng::derive(cfg.seed, "spectrum.batches");
  const DisplacementProbe<double> probe(view, metric, sample_latents(batch_rng, cfg.hessian_batch, view.latent_dim()));
  const auto H = oracle::fd_hessian([&](const std::vector<double>& a) { return probe.gradient(a); }, view.shift_dim(),
                                    1e-4);
  const auto [values, vectors] = oracle::jacobi_eigen(H);

  double worst_cos = 1.0;
  for (std::size_t j = 0; j < count; ++j) worst_cos = std::min(worst_cos, std::abs(oracle::dot(s.vectors[j], vectors[j])));
  o.require(worst_cos >= 0.99, "min |cos| over top 8 " + fmt("%.5f", worst_cos) + " >= 0.99");
  o.require(orthonormality_error(s.vectors) <= 1e-6, "gram error " + sci(orthonormality_error(s.vectors)) + " <= 1e-6");
  o.require(std::is_sorted(s.eigenvalues.rbegin(), s.eigenvalues.rend()), "eigenvalues sorted");
  double eig_rel = 0.0;
  for (std::size_t j = 0; j < count; ++j) eig_rel = std::max(eig_rel, std::abs(s.eigenvalues[j] - values[j]) / values[0]);
  o.notes.push_back("eigenvalue gap to oracle " + sci(eig_rel) + " of lambda_1");
  return o;
}

Outcome analytic_spectrum(const Context&) {
  Outcome o;
  const LinearGenerator gen;
  DiscoveryConfig cfg;
  cfg.hessian_batch = 262144;
  cfg.power_iterations = 10;
  const auto s = top_k_eigendirections(gen, PerceptualMetric::pixel_sse(), cfg, 1);
  const double rel = std::abs(s.eigenvalues[0] - 8.0) / 8.0;
  o.require(rel <= 0.02, "top eigenvalue " + fmt("%.5f", s.eigenvalues[0]) + " within 2% of 8");
  const Vec& v = s.vectors[0];
  const double off = v[2] * v[2] + v[3] * v[3];
  o.require(off <= 1e-3, "off-row mass " + sci(off) + " <= 1e-3");
  return o;
}

DiscoveryConfig harness_config(std::uint64_t seed) {
  DiscoveryConfig cfg;
  cfg.K = 2;
  cfg.lr = 1e-3;
  cfg.iterations = 2000;
  cfg.heldout = 4096;
  cfg.eigen_count = BlobHarness::kBlobs;
  cfg.seed = seed;
  return cfg;
}

double calibrated_T(const ShiftableGenerator& gen, const DirectionSet& d, std::uint64_t seed) {
  return calibrate_shift_range(gen, d, PerceptualMetric::pixel_mse(),
                               sample_normal(256, gen.latent_dim(), Rng::derive_seed(seed, "calibrate")));
}

Outcome optimization_method(const Context&) {
  Outcome o;
  const BlobHarness h;
  auto cfg = harness_config(11);
  DirectionSet init;
  init.layer = -1;
  init.kind = Parametrization::raw_kernel;
  init.coeffs = random_unit_rows(cfg.K, h.shift_dim(), cfg.seed);
  cfg.T = calibrated_T(h, init, cfg.seed);
  double norm_err = 0.0;
  const auto res = train_directions(h, init, cfg, "optimization", true, [&](std::size_t, const OptState& s) {
    for (std::size_t k = 0; k < s.dirs.count(); ++k) norm_err = std::max(norm_err, std::abs(norm(s.dirs.coefficient(k)) - 1.0));
  });
  o.require(res.accuracy.overall >= 0.95, "held-out accuracy " + fmt("%.4f", res.accuracy.overall) + " >= 0.95");
  o.require(norm_err <= 1e-6, "max unit-norm error over all steps " + sci(norm_err) + " <= 1e-6");
  return o;
}

Outcome hybrid(const Context&) {
  Outcome o;
  const BlobHarness h;
  const auto metric = PerceptualMetric::pixel_mse();
  double span_worst = 0.0, acc_h = 0.0, acc_s = 0.0;
  std::string per_seed;
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  for (auto seed : seeds) {
    auto cfg = harness_config(seed);
    const auto sp = top_k_eigendirections(h, metric, cfg, cfg.eigen_count);
    const Spectrum top{{sp.vectors.begin(), sp.vectors.begin() + cfg.K},
                       {sp.eigenvalues.begin(), sp.eigenvalues.begin() + cfg.K}};
    cfg.T = calibrated_T(h, spectrum_directions(top, -1, 1.0), seed);
    const auto rs = train_directions(h, spectrum_directions(top, -1, cfg.T), cfg, "spectrum", false);
    const auto rh = discover_hybrid(h, sp, -1, cfg,
                                    [&](std::size_t, const OptState& s) { span_worst = std::max(span_worst, span_residual(s.dirs)); });
    acc_s += rs.accuracy.overall / seeds.size();
    acc_h += rh.accuracy.overall / seeds.size();
    per_seed += " " + fmt("%.4f", rh.accuracy.overall) + "/" + fmt("%.4f", rs.accuracy.overall);
  }
  o.require(span_worst <= 1e-6, "max span residual over training " + sci(span_worst) + " <= 1e-6");
  o.require(acc_h >= acc_s, "mean accuracy hybrid " + fmt("%.4f", acc_h) + " >= spectrum " + fmt("%.4f", acc_s) +
                                " (hybrid/spectrum per seed:" + per_seed + ")");
  return o;
}

DirectionSet reference_radius_direction(const GeneratorModel& model) {
  RadiusFitConfig rc;
  return fit_radius_direction(model, 2, rc);
}

Outcome non_reachability(const Context& ctx) {
  Outcome o;
  const auto model = ctx.reference_model();
  const double mse = heldout_mse(model, heldout_latents(0, 512), RadiusMode::fixed);
  o.require(mse <= 0.01, "reference held-out mse " + sci(mse) + " <= 0.01");

  ReproductionConfig cfg;
  const auto reachable = latent_translation_direction(model, {0.5, -0.4, 0, 0, 0, 0, 0, 0});
  const auto rr = reproduce_latent(model, reachable, 0, reachable.T, ReproductionSpace::z, cfg);
  o.require(rr.final_residual <= 0.05 * rr.baseline_residual,
            "reachable final " + sci(rr.final_residual) + " <= 5% of baseline " + sci(rr.baseline_residual));

  const auto radius = reference_radius_direction(model);
  const auto rad = reproduce_latent(model, radius, 0, radius.T, ReproductionSpace::z, cfg);
  o.require(rad.final_residual >= 10 * rr.final_residual, "radius final " + sci(rad.final_residual) +
                                                              " >= 10x reachable final (baseline " +
                                                              sci(rad.baseline_residual) + ")");
  return o;
}

Outcome locality(const Context&) {
  Outcome o;
  const BlobHarness h;
  DiscoveryConfig cfg;
  cfg.hessian_batch = 64;
  cfg.power_iterations = 30;
  const auto sp = top_k_eigendirections(h, PerceptualMetric::pixel_mse(), cfg, 1);
  auto d = spectrum_directions(sp, -1, 1.0);
  d.T = calibrated_T(h, d, 4);
  const auto grid = linspace(-d.T, d.T, 9);
  const std::size_t z_count = 32;
  const auto heat = pixel_diff_heatmap(h, d, 0, grid, z_count, 6);
  const double top = top_half_mass(heat);
  o.require(top >= 0.99, "top-half mass " + fmt("%.6f", top) + " >= 0.99");

  double mass = 0.0;
  for (double v : heat.vec()) mass += v;
  const DisplacementProbe<double> probe(h, PerceptualMetric::pixel_sse(), sample_normal(z_count, h.latent_dim(), 6));
  double ref = 0.0;
  for (double t : grid) ref += probe.value(scaled(d.raw_direction(0), t));
  ref /= static_cast<double>(grid.size() * heat.size());
  const double rel = std::abs(mass / heat.size() - ref) / ref;
  o.require(rel <= 1e-6, "mean heatmap vs expected displacement rel " + sci(rel) + " <= 1e-6");
  return o;
}

Outcome realism_curve(const Context& ctx) {
  Outcome o;
  const auto model = ctx.reference_model();
  const auto metric = PerceptualMetric::random_features(0);
  DatasetSpec spec;
  spec.radius_mode = RadiusMode::fixed;
  spec.count = 2048;
  const auto data = generate_dataset(spec);
  const auto ref = fit_feature_stats(metric, data.images);

  const LayerView view(model, 2);
  const auto radius = reference_radius_direction(model);
  const auto grid = linspace(-radius.T, radius.T, 5);
  const std::size_t samples = 1024;
  const auto curve = ffd_curve(view, radius, 0, grid, metric, ref, samples, 9);
  const double base = ffd_baseline(view, metric, ref, samples, 9);
  o.require(curve[2].t == 0.0 && curve[2].ffd == base, "ffd(0) " + sci(curve[2].ffd) + " == baseline " + sci(base));

  const auto asym = ffd_asymmetry(view, radius, 0, grid, metric, ref, samples, {1, 2, 3, 4});
  o.require(asym.asymmetry > 5 * asym.noise,
            "asymmetry " + sci(asym.asymmetry) + " > 5x seed noise " + sci(asym.noise));
  const auto& c0 = asym.curves[0];
  o.notes.push_back("ffd(-T) " + sci(c0.front().ffd) + ", ffd(0) " + sci(c0[2].ffd) + ", ffd(+T) " + sci(c0.back().ffd));
  return o;
}

int cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::cerr << "cli failed: " << err.str() << "\n";
  return code;
}

Outcome determinism(const Context& ctx) {
  Outcome o;
  const fs::path root = ctx.cache / "determinism";
  fs::remove_all(root);
  const std::vector<std::string> files = {"data.navg",       "model.navg",     "svd.navg",       "spec.navg",
                                          "spec.eigenvalues.csv", "opt.navg",  "opt.loss.csv",   "hyb.navg",
                                          "cal.navg",        "strip.png",      "heat.png",       "heat.png.csv",
                                          "ffd.csv",         "rep.json",       "model.curve.csv"};
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / std::to_string(run);
    fs::create_directories(dir);
    auto p = [&](const std::string& n) { return (dir / n).string(); };
    const std::vector<std::vector<std::string>> stages = {
        {"dataset-gen", "--count", "256", "--seed", "3", "--out", p("data.navg")},
        {"train-gen", "--steps", "60", "--log-every", "20", "--seed", "3", "--out", p("model.navg")},
        {"discover", "--model", p("model.navg"), "--method", "svd", "--layer", "L2", "--T", "1", "--out", p("svd.navg")},
        {"discover", "--model", p("model.navg"), "--method", "spectrum", "--layer", "L3", "--k", "3", "--hessian-batch",
         "32", "--power-iterations", "4", "--T", "1", "--out", p("spec.navg")},
        {"discover", "--model", p("model.navg"), "--method", "optimization", "--layer", "L2", "--k", "3",
         "--iterations", "10", "--batch", "8", "--heldout", "32", "--T", "1", "--out", p("opt.navg")},
        {"discover", "--model", p("model.navg"), "--method", "hybrid", "--layer", "L3", "--k", "2", "--eigen-count",
         "3", "--hessian-batch", "16", "--power-iterations", "3", "--iterations", "5", "--batch", "8", "--heldout", "16",
         "--T", "0", "--out", p("hyb.navg")},
        {"calibrate", "--model", p("model.navg"), "--directions", p("svd.navg"), "--z-count", "32", "--out",
         p("cal.navg")},
        {"strip", "--model", p("model.navg"), "--directions", p("spec.navg"), "--steps", "5", "--seeds", "1,2", "--out",
         p("strip.png")},
        {"heatmap", "--model", p("model.navg"), "--directions", p("spec.navg"), "--magnitudes", "5", "--z-count", "8",
         "--out", p("heat.png")},
        {"ffd-curve", "--model", p("model.navg"), "--directions", p("spec.navg"), "--dataset", p("data.navg"),
         "--steps", "3", "--samples", "64", "--out", p("ffd.csv")},
        {"reproduce-latent", "--model", p("model.navg"), "--directions", p("svd.navg"), "--steps", "10", "--batch", "8",
         "--eval-batch", "16", "--out", p("rep.json")},
    };
    for (const auto& s : stages) {
      if (cli_run(s) != 0) {
        o.require(false, "stage " + s[0] + " failed");
        return o;
      }
    }
  }
  std::size_t same = 0;
  for (const auto& f : files) {
    const bool eq = read_file(root / "0" / f) == read_file(root / "1" / f);
    if (!eq) o.require(false, f + " differs between runs");
    same += eq;
  }
  o.require(same == files.size(), std::to_string(same) + "/" + std::to_string(files.size()) + " outputs byte-identical");

  const auto model = load_model(root / "0" / "model.navg");
  const auto m2 = model_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(model))));
  bool exact = m2.hash() == model.hash() && m2.meta == model.meta;
  const auto dirs = load_directions(root / "0" / "hyb.navg");
  exact = exact && encode_checkpoint(to_checkpoint(directions_from_checkpoint(decode_checkpoint(
                       encode_checkpoint(to_checkpoint(dirs)))))) == encode_checkpoint(to_checkpoint(dirs));
  exact = exact && encode_checkpoint(to_checkpoint(load_dataset(root / "0" / "data.navg"))) ==
                       read_file(root / "0" / "data.navg");
  const auto metric = PerceptualMetric::random_features(4);
  exact = exact && metric_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(metric)))).w2() == metric.w2();
  const Reconstructor rec(3, 9);
  exact = exact && reconstructor_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(rec)))).hash() ==
                       rec.hash();
  o.require(exact, "checkpoint round-trips bit-exact (model, directions, dataset, metric, reconstructor)");
  fs::remove_all(root);
  return o;
}

struct Criterion {
  std::string name;
  std::function<Outcome(const Context&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"autodiff_oracle", autodiff_oracle},
      {"linear_algebra", linear_algebra},
      {"displacement_structure", displacement_structure},
      {"spectrum_oracle", spectrum_oracle},
      {"analytic_spectrum", analytic_spectrum},
      {"optimization_method", optimization_method},
      {"hybrid", hybrid},
      {"non_reachability", non_reachability},
      {"locality", locality},
      {"realism_curve", realism_curve},
      {"determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  Context ctx{fs::temp_directory_path() / "paramshift_acceptance"};
  bool prepare = false;
  std::vector<std::string> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cache" && i + 1 < argc) {
      ctx.cache = argv[++i];
    } else if (a == "--prepare") {
      prepare = true;
    } else if (a == "--list") {
      for (const auto& c : criteria()) std::cout << c.name << "\n";
      return 0;
    } else {
      selected.push_back(a);
    }
  }
  fs::create_directories(ctx.cache);

  if (prepare) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = ctx.reference_model();
    const double mse = heldout_mse(model, heldout_latents(0, 512), RadiusMode::fixed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "reference model " << ctx.reference_path().string() << " held-out mse " << sci(mse) << " ("
              << fmt("%.1f", secs) << " s)\n";
    if (selected.empty()) return 0;
  }

  int failed = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " [" << fmt("%.1f", secs) << " s] " << detail << std::endl;
    failed += !o.pass;
  }
  for (const auto& s : selected) {
    if (std::none_of(criteria().begin(), criteria().end(), [&](const Criterion& c) { return c.name == s; })) {
      std::cout << "FAIL " << s << " unknown criterion\n";
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}
