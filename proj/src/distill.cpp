#include "paramshift/distill.hpp"

#include <cmath>

#include "paramshift/adam.hpp"

namespace paramshift {

Tensor<float> sample_latents(Rng& rng, std::size_t n, std::size_t d) {
  Tensor<float> z({n, d});
  for (auto& v : z.data()) v = static_cast<float>(rng.normal());
  return z;
}

Tensor<float> latent_targets(const Tensor<float>& z, RadiusMode mode, std::size_t size) {
  const std::size_t n = z.dim(0), d = z.dim(1), px = size * size;
  Tensor<float> out({n, 1, size, size});
  std::vector<double> lat(d), buf(px);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) lat[j] = z[i * d + j];
    render_scene_into(scene_from_latent(lat, mode), size, buf.data());
    for (std::size_t p = 0; p < px; ++p) out[i * px + p] = static_cast<float>(buf[p]);
  }
  return out;
}

double heldout_mse(const GeneratorModel& model, const Tensor<float>& z, RadiusMode mode) {
  const Tensor<float> images = model.generate(z);
  const Tensor<float> target = latent_targets(z, mode);
  double acc = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double d = static_cast<double>(images[i]) - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(images.size());
}

Tensor<float> heldout_latents(std::uint64_t seed, std::size_t n) {
  Rng rng = Rng::derive(seed, "distill.heldout");
  return sample_latents(rng, n);
}

DistillResult distill_generator(const DistillConfig& cfg, const std::function<void(std::size_t, double)>& progress) {
  if (cfg.batch == 0) throw ValueError("distillation batch size must be positive");
  if (!(cfg.lr > 0)) throw ValueError("distillation learning rate must be positive");
  if (cfg.data.size != GeneratorModel::kImageSize) throw ValueError("the generator renders 32x32 images");

  DistillResult res{GeneratorModel::initialize(Rng::derive_seed(cfg.data.seed, "distill.init")), 0.0, 0.0, {}};
  const Tensor<float> held = heldout_latents(cfg.data.seed, cfg.heldout);
  res.initial_heldout_mse = heldout_mse(res.model, held, cfg.data.radius_mode);

  Rng rng = Rng::derive(cfg.data.seed, "distill.batches");
  Adam<float> opt(AdamConfig{cfg.lr});
  const auto& names = GeneratorModel::param_names();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const Tensor<float> z = sample_latents(rng, cfg.batch);
    const Tensor<float> target = latent_targets(z, cfg.data.radius_mode);
    Graph<float> g;
    auto vars = bind_params(g, res.model, true);
    Var<float> loss;
    try {
      auto out = forward_layers(vars, 0, g.constant(z));
      loss = mean(sq_diff(out, g.constant(target)));
      g.backward(loss);
    } catch (const NumericError& e) {
      throw NumericError("distillation diverged at step " + std::to_string(step) + ": " + e.what());
    }
    std::vector<Tensor<float>*> params;
    std::vector<const Tensor<float>*> grads;
    for (const auto& name : names) {
      params.push_back(&res.model.param(name));
      grads.push_back(&vars.at(name).grad());
    }
    opt.step(params, grads);
    const double l = loss.value().item();
    if (cfg.log_every && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      res.curve.emplace_back(step, l);
      if (progress) progress(step, l);
    }
  }
  if (!res.model.all_finite()) throw NumericError("distillation produced non-finite parameters");
  res.final_heldout_mse = heldout_mse(res.model, held, cfg.data.radius_mode);
  res.model.meta["distill"] = {{"steps", cfg.steps},
                               {"batch", cfg.batch},
                               {"lr", cfg.lr},
                               {"seed", cfg.data.seed},
                               {"radius_mode", radius_mode_name(cfg.data.radius_mode)},
                               {"initial_heldout_mse", res.initial_heldout_mse},
                               {"heldout_mse", res.final_heldout_mse}};
  return res;
}

}  // namespace paramshift
