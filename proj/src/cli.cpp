#include "paramshift/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "paramshift/checkpoint.hpp"
#include "paramshift/discovery.hpp"
#include "paramshift/distill.hpp"
#include "paramshift/evaluation.hpp"
#include "paramshift/png.hpp"
#include "paramshift/service.hpp"

namespace paramshift {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValueError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty()) throw ValueError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

namespace {

const char* kUsage =
    "usage: paramshift <command> [options]\n"
    "\n"
    "commands:\n"
    "  dataset-gen       render a procedural disc dataset\n"
    "  train-gen         distill the toy generator from the renderer\n"
    "  discover          find directions (--method svd|optimization|spectrum|hybrid)\n"
    "  calibrate         pick the shift range T of a direction set\n"
    "  strip             render interpolation strips\n"
    "  heatmap           per-pixel difference heatmap of one direction\n"
    "  ffd-curve         Frechet feature distance against shift magnitude\n"
    "  reproduce-latent  search a latent or activation shift mimicking a direction\n"
    "  depth-sweep       run discovery on every conv layer and write strips\n"
    "  serve             start the inspection HTTP service\n"
    "\n"
    "Every command accepts --config FILE with key=value lines (flags win) and\n"
    "writes <output>.config.json with the resolved options.\n"
    "Run 'paramshift <command> --help' for the options of a command.\n";

// Options of one subcommand plus their JSON dump for the resolved config.
struct Options {
  CLI::App* app = nullptr;
  std::vector<std::function<void(json&)>> dump;

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    dump.push_back([name, &var](json& j) { j[name] = var; });
    return app->add_option("--" + name, var, desc)->capture_default_str();
  }
  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    dump.push_back([name, &var](json& j) { j[name] = var; });
    return app->add_flag("--" + name, var, desc);
  }
  json resolved(const std::string& command) const {
    json j = json::object();
    for (const auto& d : dump) d(j);
    j["command"] = command;
    return j;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

void write_config(const fs::path& output, const json& resolved) {
  write_text(output.string() + ".config.json", resolved.dump(2) + "\n");
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ValueError("seed list must be comma-separated non-negative integers, got '" + s + "'");
    }
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw ValueError("seed list is empty");
  return out;
}

std::vector<int> parse_layers(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_layer(item));
  if (out.empty()) throw ValueError("layer list is empty");
  return out;
}

std::size_t coord_dim(const std::string& method, int layer) {
  if (method == "svd" || method == "optimization") {
    if (!GeneratorModel::is_conv(layer)) throw ValueError(method + " needs a conv layer (L1, L2 or L3)");
    const Shape w = GeneratorModel::weight_shape(layer);
    return std::min(w[0], w[1] * w[2] * w[3]);
  }
  return GeneratorModel::weight_size(layer);
}

struct DiscoverArgs {
  std::string model;
  std::string method = "spectrum";
  std::string layer = "L2";
  std::size_t k = 0;
  double T = 0.0;
  double lambda = 2.5e-3;
  double lr = 1e-4;
  std::size_t iterations = 10000;
  std::size_t batch = 32;
  std::size_t heldout = 512;
  double epsilon = 0.1;
  std::size_t power_iterations = 10;
  std::size_t hessian_batch = 512;
  std::size_t eigen_count = 0;
  bool fixed_hessian_batch = false;
  std::string metric = "pixel_mse";
  std::uint64_t metric_seed = 0;
  std::size_t calibration_z = 256;
  std::uint64_t seed = 0;

  void register_on(Options& o, bool with_layer) {
    o.add("model", model, "generator checkpoint")->required();
    o.add("method", method, "svd | optimization | spectrum | hybrid");
    if (with_layer) o.add("layer", layer, "target layer L0..L3");
    o.add("k", k, "direction count (0: min(64, parametrization dimension))");
    o.add("T", T, "shift range (0: calibrate)");
    o.add("lambda", lambda, "weight of the shift regression loss");
    o.add("lr", lr, "Adam learning rate for directions and reconstructor");
    o.add("iterations", iterations, "training steps");
    o.add("batch", batch, "training batch size");
    o.add("heldout", heldout, "held-out pairs for direction scores");
    o.add("epsilon", epsilon, "power-iteration probe step");
    o.add("power-iterations", power_iterations, "power steps per eigenvector");
    o.add("hessian-batch", hessian_batch, "latents per power step");
    o.add("eigen-count", eigen_count, "eigenvectors spanning the hybrid space (0: min(64, D))");
    o.flag("fixed-hessian-batch", fixed_hessian_batch, "reuse one latent batch for all power steps");
    o.add("metric", metric, "pixel_mse | pixel_sse | random_features");
    o.add("metric-seed", metric_seed, "seed of the random-feature extractor");
    o.add("calibration-z", calibration_z, "latents used for calibration");
    o.add("seed", seed, "root seed");
  }
};

struct Discovered {
  DirectionSet dirs;
  std::vector<LossPoint> curve;
  Vec eigenvalues;
};

Discovered discover(const GeneratorModel& model, int layer, const DiscoverArgs& a, std::ostream& out) {
  const LayerView gen(model, layer);
  const PerceptualMetric metric = PerceptualMetric::make(parse_metric(a.metric), a.metric_seed);
  const Tensor<float> zc = sample_normal(a.calibration_z, gen.latent_dim(), Rng::derive_seed(a.seed, "calibrate"));
  const std::size_t dim = coord_dim(a.method, layer);

  DiscoveryConfig cfg;
  cfg.K = a.k ? a.k : std::min<std::size_t>(64, dim);
  cfg.T = a.T > 0 ? a.T : 1.0;
  cfg.lambda = a.lambda;
  cfg.lr = a.lr;
  cfg.iterations = a.iterations;
  cfg.batch = a.batch;
  cfg.heldout = a.heldout;
  cfg.epsilon = a.epsilon;
  cfg.power_iterations = a.power_iterations;
  cfg.hessian_batch = a.hessian_batch;
  cfg.eigen_count = a.eigen_count ? a.eigen_count : std::min<std::size_t>(64, dim);
  cfg.fixed_hessian_batch = a.fixed_hessian_batch;
  cfg.seed = a.seed;

  auto calibrate = [&](const DirectionSet& d) {
    const double T = calibrate_shift_range(gen, d, metric, zc);
    out << "calibrated T = " << T << "\n";
    return T;
  };

  Discovered res;
  if (a.method == "svd") {
    res.dirs = svd_baseline(model, layer);
    if (cfg.K > res.dirs.count()) throw ValueError("svd baseline has only " + std::to_string(res.dirs.count()) + " directions");
    res.dirs.T = a.T > 0 ? a.T : calibrate(res.dirs);
  } else if (a.method == "spectrum") {
    cfg.validate(dim);
    const Spectrum s = top_k_eigendirections(gen, metric, cfg, cfg.K);
    res.dirs = spectrum_directions(s, layer, 1.0);
    res.dirs.T = a.T > 0 ? a.T : calibrate(res.dirs);
    res.eigenvalues = s.eigenvalues;
  } else if (a.method == "optimization") {
    cfg.validate(dim);
    if (a.T <= 0) {
      DirectionSet base = svd_baseline(model, layer);
      cfg.T = calibrate(base);
    }
    DiscoveryResult r = discover_opt(model, layer, cfg);
    res.dirs = std::move(r.dirs);
    res.curve = std::move(r.curve);
  } else if (a.method == "hybrid") {
    if (cfg.eigen_count > dim) throw ValueError("eigen-count exceeds the layer dimension");
    cfg.validate(cfg.eigen_count);
    const Spectrum s = top_k_eigendirections(gen, metric, cfg, cfg.eigen_count);
    if (a.T <= 0) cfg.T = calibrate(spectrum_directions(s, layer, 1.0));
    DiscoveryResult r = discover_hybrid(gen, s, layer, cfg);
    res.dirs = std::move(r.dirs);
    res.curve = std::move(r.curve);
    res.eigenvalues = s.eigenvalues;
  } else {
    throw ValueError("unknown method '" + a.method + "' (expected svd, optimization, spectrum or hybrid)");
  }
  if (a.method == "svd" && a.k && a.k < res.dirs.count()) {
    DirectionSet d = res.dirs;
    const std::size_t n = d.coord_dim();
    d.coeffs = Tensor<float>({a.k, n}, std::vector<float>(res.dirs.coeffs.ptr(), res.dirs.coeffs.ptr() + a.k * n));
    d.info.resize(a.k);
    res.dirs = std::move(d);
  }
  res.dirs.layer = layer;
  res.dirs.meta["method"] = a.method;
  res.dirs.meta["metric"] = a.metric;
  res.dirs.meta["model_hash"] = model.hash();
  res.dirs.validate();
  return res;
}

void write_discovery_outputs(const fs::path& out, const Discovered& d) {
  save_checkpoint(to_checkpoint(d.dirs), out);
  const fs::path stem = out.parent_path() / out.stem();
  if (!d.curve.empty()) {
    std::ostringstream csv;
    csv << "iteration,total,ce,mae\n";
    for (const auto& p : d.curve) csv << p.iteration << ',' << fmt(p.total) << ',' << fmt(p.ce) << ',' << fmt(p.mae) << '\n';
    write_text(stem.string() + ".loss.csv", csv.str());
  }
  if (!d.eigenvalues.empty()) {
    std::ostringstream csv;
    csv << "index,eigenvalue\n";
    for (std::size_t i = 0; i < d.eigenvalues.size(); ++i) csv << i << ',' << fmt(d.eigenvalues[i]) << '\n';
    write_text(stem.string() + ".eigenvalues.csv", csv.str());
  }
}

std::vector<std::string> with_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  for (const auto& [key, value] : parse_config_file(read_file(path))) {
    if (key == "config") continue;
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (!given) args.push_back(flag + "=" + value);
  }
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  if (raw_args.empty()) {
    err << kUsage;
    return 2;
  }
  CLI::App app{"Parameter-space direction discovery for a toy image generator", "paramshift"};
  app.require_subcommand(1);
  std::map<std::string, Options> opts;
  std::string config_path;
  auto sub = [&](const std::string& name, const std::string& desc) -> Options& {
    Options& o = opts[name];
    o.app = app.add_subcommand(name, desc);
    o.app->add_option("--config", config_path, "key=value file with option defaults");
    return o;
  };

  // dataset-gen
  std::size_t ds_count = 4096, ds_size = 32;
  std::string radius_mode = "fixed", out_path;
  std::uint64_t seed = 0;
  {
    Options& o = sub("dataset-gen", "render a procedural disc dataset");
    o.add("count", ds_count, "number of images");
    o.add("size", ds_size, "image side in pixels");
    o.add("radius-mode", radius_mode, "fixed | free");
    o.add("seed", seed, "root seed");
    o.add("out", out_path, "dataset checkpoint")->required();
  }
  // train-gen
  DistillConfig dc;
  {
    Options& o = sub("train-gen", "distill the toy generator from the renderer");
    o.add("radius-mode", radius_mode, "fixed | free");
    o.add("steps", dc.steps, "Adam steps");
    o.add("batch", dc.batch, "batch size");
    o.add("lr", dc.lr, "learning rate");
    o.add("heldout", dc.heldout, "held-out latents for the reported error");
    o.add("log-every", dc.log_every, "training-curve interval");
    o.add("seed", seed, "root seed");
    o.add("out", out_path, "model checkpoint")->required();
  }
  DiscoverArgs da;
  {
    Options& o = sub("discover", "find parameter-space directions");
    da.register_on(o, true);
    o.add("out", out_path, "direction-set checkpoint")->required();
  }
  // shared evaluation options
  std::string model_path, dirs_path, dataset_path, metric_name_arg = "pixel_mse", space = "z", seeds = "0,1,2,3";
  std::string annotations = "annotations.jsonl", host = "127.0.0.1", web_dir = default_web_dir().string();
  std::size_t k = 0, steps = 7, rep_steps = 2000, z_count = 256, magnitudes = 20, samples = 4096, batch = 256, eval_batch = 512;
  double t_min = std::numeric_limits<double>::quiet_NaN(), t_max = std::numeric_limits<double>::quiet_NaN();
  double t = std::numeric_limits<double>::quiet_NaN(), band_lo = 0.01, band_hi = 0.1, lr = 1e-2;
  std::uint64_t metric_seed = 0;
  int port = 7860;
  {
    Options& o = sub("calibrate", "pick the shift range T of a direction set");
    o.add("model", model_path, "generator checkpoint")->required();
    o.add("directions", dirs_path, "direction-set checkpoint")->required();
    o.add("metric", metric_name_arg, "pixel_mse | pixel_sse | random_features");
    o.add("metric-seed", metric_seed, "seed of the random-feature extractor");
    o.add("band-lo", band_lo, "lower end of the displacement band");
    o.add("band-hi", band_hi, "upper end of the displacement band");
    o.add("z-count", z_count, "latents used for the displacement");
    o.add("seed", seed, "root seed");
    o.add("out", out_path, "output direction set (default: overwrite --directions)");
  }
  {
    Options& o = sub("strip", "render interpolation strips (rows: seeds, columns: t)");
    o.add("model", model_path, "generator checkpoint")->required();
    o.add("directions", dirs_path, "direction-set checkpoint")->required();
    o.add("k", k, "direction index");
    o.add("tmin", t_min, "first column (default -T)");
    o.add("tmax", t_max, "last column (default T)");
    o.add("steps", steps, "columns; the grid must contain 0");
    o.add("seeds", seeds, "comma-separated latent seeds");
    o.add("out", out_path, "PNG path; a .json with the grid is written next to it")->required();
  }
  {
    Options& o = sub("heatmap", "per-pixel mean squared difference of one direction");
    o.add("model", model_path, "generator checkpoint")->required();
    o.add("directions", dirs_path, "direction-set checkpoint")->required();
    o.add("k", k, "direction index");
    o.add("magnitudes", magnitudes, "shift magnitudes, evenly spaced over [-tmax, tmax]");
    o.add("tmax", t_max, "largest magnitude (default T)");
    o.add("z-count", z_count, "latent samples");
    o.add("seed", seed, "root seed");
    o.add("out", out_path, "PNG path; .csv (rows of pixel values) and .json summary written next to it")->required();
  }
  {
    Options& o = sub("ffd-curve", "Frechet feature distance against shift magnitude");
    o.add("model", model_path, "generator checkpoint")->required();
    o.add("directions", dirs_path, "direction-set checkpoint")->required();
    o.add("dataset", dataset_path, "dataset checkpoint providing reference statistics")->required();
    o.add("k", k, "direction index");
    o.add("steps", steps, "grid points over [-tmax, tmax]");
    o.add("tmax", t_max, "largest magnitude (default T)");
    o.add("samples", samples, "generated images per grid point");
    o.add("metric-seed", metric_seed, "seed of the random-feature extractor");
    o.add("seed", seed, "sampling seed");
    o.add("out", out_path, "CSV with columns t,ffd")->required();
  }
  {
    Options& o = sub("reproduce-latent", "search a latent or activation shift that mimics a direction");
    o.add("model", model_path, "generator checkpoint")->required();
    o.add("directions", dirs_path, "direction-set checkpoint")->required();
    o.add("k", k, "direction index");
    o.add("t", t, "shift magnitude (default T)");
    o.add("space", space, "z | activation");
    o.add("lr", lr, "Adam learning rate");
    o.add("steps", rep_steps, "Adam steps");
    o.add("batch", batch, "optimization latents");
    o.add("eval-batch", eval_batch, "evaluation latents");
    o.add("seed", seed, "root seed");
    o.add("out", out_path, "JSON report")->required();
  }
  DiscoverArgs sweep;
  std::string layers = "L1,L2,L3";
  {
    Options& o = sub("depth-sweep", "run discovery on several layers and write strips");
    sweep.register_on(o, false);
    o.add("layers", layers, "comma-separated layers");
    o.add("strip-directions", k, "strips per layer (0: 4)");
    o.add("out", out_path, "output directory")->required();
  }
  {
    Options& o = sub("serve", "start the inspection HTTP service");
    o.add("model", model_path, "generator checkpoint")->required();
    o.add("directions", dirs_path, "direction-set checkpoint")->required();
    o.add("annotations", annotations, "append-only JSON-lines annotation store");
    o.add("host", host, "bind address");
    o.add("port", port, "TCP port");
    o.add("web-dir", web_dir, "static files served at /");
  }

  std::vector<std::string> args;
  try {
    args = with_config(raw_args);
  } catch (const Error& e) {
    err << json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const json resolved = opts.at(command).resolved(command);
  const auto t_or = [](double v, double fallback) { return std::isnan(v) ? fallback : v; };

  try {
    if (command == "dataset-gen") {
      DatasetSpec spec{ds_size, ds_count, seed, parse_radius_mode(radius_mode)};
      const Dataset d = generate_dataset(spec);
      save_checkpoint(to_checkpoint(d), out_path);
      write_config(out_path, resolved);
      out << "dataset " << out_path << " hash " << dataset_hash(d) << "\n";
    } else if (command == "train-gen") {
      dc.data.seed = seed;
      dc.data.radius_mode = parse_radius_mode(radius_mode);
      const DistillResult r = distill_generator(dc, [&](std::size_t step, double loss) {
        out << "step " << step << " loss " << loss << "\n";
      });
      save_checkpoint(to_checkpoint(r.model), out_path);
      std::ostringstream csv;
      csv << "step,loss\n";
      for (const auto& [s, l] : r.curve) csv << s << ',' << fmt(l) << '\n';
      const fs::path p(out_path);
      write_text((p.parent_path() / p.stem()).string() + ".curve.csv", csv.str());
      write_config(out_path, resolved);
      out << "held-out mse " << r.final_heldout_mse << " (initial " << r.initial_heldout_mse << ")\n";
    } else if (command == "discover") {
      const GeneratorModel model = load_model(da.model);
      const Discovered d = discover(model, parse_layer(da.layer), da, out);
      write_discovery_outputs(out_path, d);
      write_config(out_path, resolved);
      out << "wrote " << d.dirs.count() << " directions to " << out_path << "\n";
    } else if (command == "calibrate") {
      const GeneratorModel model = load_model(model_path);
      DirectionSet dirs = load_directions(dirs_path);
      const LayerView gen(model, dirs.layer);
      const PerceptualMetric metric = PerceptualMetric::make(parse_metric(metric_name_arg), metric_seed);
      const Tensor<float> z = sample_normal(z_count, gen.latent_dim(), Rng::derive_seed(seed, "calibrate"));
      dirs.T = calibrate_shift_range(gen, dirs, metric, z, {band_lo, band_hi});
      dirs.meta["calibration"] = {{"metric", metric_name_arg}, {"band", {band_lo, band_hi}}, {"z_count", z_count},
                                  {"seed", seed}};
      if (out_path.empty()) out_path = dirs_path;
      save_checkpoint(to_checkpoint(dirs), out_path);
      write_config(out_path, resolved);
      out << "T = " << fmt(dirs.T) << "\n";
    } else if (command == "strip") {
      const GeneratorModel model = load_model(model_path);
      const DirectionSet dirs = load_directions(dirs_path);
      StripSpec spec{k, t_or(t_min, -dirs.T), t_or(t_max, dirs.T), steps, parse_seeds(seeds)};
      const Strip s = render_strip(LayerView(model, dirs.layer), dirs, spec);
      write_text(out_path, encode_png(s.grid));
      write_text(out_path + ".json", json{{"t", s.t}, {"seeds", s.seeds}, {"direction", k}}.dump(2) + "\n");
      write_config(out_path, resolved);
    } else if (command == "heatmap") {
      const GeneratorModel model = load_model(model_path);
      const DirectionSet dirs = load_directions(dirs_path);
      const double tm = t_or(t_max, dirs.T);
      const Tensor<double> h =
          pixel_diff_heatmap(LayerView(model, dirs.layer), dirs, k, linspace(-tm, tm, magnitudes), z_count, seed);
      std::ostringstream csv;
      const std::size_t w = h.dim(h.rank() - 1);
      double total = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        csv << fmt(h[i]) << ((i + 1) % w == 0 ? '\n' : ',');
        total += h[i];
      }
      write_text(out_path, encode_png(to_gray_normalized(h.cast<float>())));
      write_text(out_path + ".csv", csv.str());
      write_text(out_path + ".json",
                 json{{"direction", k}, {"total_mass", total}, {"top_half_mass", total > 0 ? top_half_mass(h) : 0.0},
                      {"magnitudes", magnitudes}, {"tmax", tm}, {"z_count", z_count}}
                         .dump(2) + "\n");
      write_config(out_path, resolved);
    } else if (command == "ffd-curve") {
      const GeneratorModel model = load_model(model_path);
      const DirectionSet dirs = load_directions(dirs_path);
      const Dataset data = load_dataset(dataset_path);
      const PerceptualMetric metric = PerceptualMetric::random_features(metric_seed);
      const FrechetStats ref = fit_feature_stats(metric, data.images);
      const double tm = t_or(t_max, dirs.T);
      const auto curve = ffd_curve(LayerView(model, dirs.layer), dirs, k, linspace(-tm, tm, steps), metric, ref,
                                   samples, seed);
      std::ostringstream csv;
      csv << "t,ffd\n";
      for (const auto& p : curve) csv << fmt(p.t) << ',' << fmt(p.ffd) << '\n';
      write_text(out_path, csv.str());
      write_config(out_path, resolved);
    } else if (command == "reproduce-latent") {
      const GeneratorModel model = load_model(model_path);
      const DirectionSet dirs = load_directions(dirs_path);
      ReproductionConfig rc;
      rc.lr = lr;
      rc.steps = rep_steps;
      rc.batch = batch;
      rc.eval_batch = eval_batch;
      rc.seed = seed;
      const ReproductionReport r = reproduce_latent(model, dirs, k, t_or(t, dirs.T), parse_space(space), rc);
      write_text(out_path, r.to_json().dump(2) + "\n");
      write_config(out_path, resolved);
      out << "baseline " << r.baseline_residual << " final " << r.final_residual << "\n";
    } else if (command == "depth-sweep") {
      const GeneratorModel model = load_model(sweep.model);
      const fs::path dir(out_path);
      fs::create_directories(dir);
      for (int layer : parse_layers(layers)) {
        const std::string name = layer_name(layer);
        out << "layer " << name << "\n";
        const Discovered d = discover(model, layer, sweep, out);
        write_discovery_outputs(dir / ("directions_" + name + ".navg"), d);
        const std::size_t shown = std::min<std::size_t>(k ? k : 4, d.dirs.count());
        for (std::size_t j = 0; j < shown; ++j) {
          StripSpec spec{j, -d.dirs.T, d.dirs.T, 7, {0, 1, 2, 3}};
          const Strip s = render_strip(LayerView(model, layer), d.dirs, spec);
          write_text(dir / ("strip_" + name + "_k" + std::to_string(j) + ".png"), encode_png(s.grid));
        }
      }
      write_text(dir / "config.json", resolved.dump(2) + "\n");
    } else if (command == "serve") {
      GeneratorModel model = load_model(model_path);
      DirectionSet dirs = load_directions(dirs_path);
      InspectionService service(std::move(model), std::move(dirs), annotations,
                                json{{"model", model_path}, {"directions", dirs_path}});
      HttpServer server(service, web_dir);
      const int bound = server.bind(host, port);
      if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
      out << "serving on http://" << host << ":" << bound << "/" << std::endl;
      server.run();
    }
  } catch (const Error& e) {
    err << json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace paramshift
