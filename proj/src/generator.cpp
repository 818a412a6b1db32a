#include "paramshift/generator.hpp"

#include <cmath>

#include "paramshift/rng.hpp"

namespace paramshift {

namespace {

constexpr std::size_t kChannels[] = {32, 16, 8, 1};
constexpr std::size_t kDenseOut = 32 * 4 * 4;

void check_layer(int layer) {
  if (layer < 0 || layer >= GeneratorModel::kNumLayers) {
    throw ValueError("layer index " + std::to_string(layer) + " out of range (L0..L3)");
  }
}

std::string bias_name(int layer) { return "L" + std::to_string(layer) + ".bias"; }

template <typename T>
Var<T> ones_column(Graph<T>& g, std::size_t n) {
  return g.constant(Tensor<T>({n, 1}, T{1}));
}

}  // namespace

int parse_layer(const std::string& name) {
  if (name.size() == 2 && (name[0] == 'L' || name[0] == 'l') && name[1] >= '0' && name[1] <= '3') return name[1] - '0';
  throw ValueError("unknown layer '" + name + "' (expected L0, L1, L2 or L3)");
}

std::string layer_name(int layer) {
  check_layer(layer);
  return "L" + std::to_string(layer);
}

GeneratorModel::GeneratorModel() {
  for (const auto& name : param_names()) params_.emplace(name, Tensor<float>(param_shape(name)));
}

GeneratorModel GeneratorModel::initialize(std::uint64_t seed) {
  GeneratorModel m;
  Rng rng = Rng::derive(seed, "generator.init");
  for (int l = 0; l < kNumLayers; ++l) {
    auto& w = m.weight(l);
    if (l == 0) {
      const double std = std::sqrt(2.0 / static_cast<double>(kLatentDim));
      for (std::size_t o = 0; o < kDenseOut; ++o)
        for (std::size_t i = 0; i < kLatentDim; ++i) w[o * (kLatentDim + 1) + i] = static_cast<float>(std * rng.normal());
    } else {
      const double fan_in = static_cast<double>(w.dim(1) * 9);
      const double std = std::sqrt(2.0 / fan_in);
      for (auto& v : w.data()) v = static_cast<float>(std * rng.normal());
    }
  }
  m.meta["init_seed"] = seed;
  return m;
}

const std::vector<std::string>& GeneratorModel::param_names() {
  static const std::vector<std::string> names = {"L0.weight", "L1.bias", "L1.weight", "L2.bias",
                                                 "L2.weight", "L3.bias", "L3.weight"};
  return names;
}

Shape GeneratorModel::param_shape(const std::string& name) {
  if (name == "L0.weight") return {kDenseOut, kLatentDim + 1};
  for (int l = 1; l < kNumLayers; ++l) {
    if (name == weight_name(l)) return {kChannels[l], kChannels[l - 1], 3, 3};
    if (name == bias_name(l)) return {kChannels[l]};
  }
  throw ValueError("unknown generator parameter '" + name + "'");
}

std::string GeneratorModel::weight_name(int layer) {
  check_layer(layer);
  return "L" + std::to_string(layer) + ".weight";
}

Shape GeneratorModel::weight_shape(int layer) { return param_shape(weight_name(layer)); }
std::size_t GeneratorModel::weight_size(int layer) { return shape_size(weight_shape(layer)); }
bool GeneratorModel::is_conv(int layer) {
  check_layer(layer);
  return layer > 0;
}

const Tensor<float>& GeneratorModel::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValueError("unknown generator parameter '" + name + "'");
  return it->second;
}

Tensor<float>& GeneratorModel::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValueError("unknown generator parameter '" + name + "'");
  return it->second;
}

template <typename T>
GeneratorVars<T> bind_params(Graph<T>& g, const GeneratorModel& model, bool requires_grad) {
  GeneratorVars<T> vars;
  for (const auto& [name, value] : model.params()) {
    if constexpr (std::is_same_v<T, float>) {
      vars.emplace(name, g.input(value, requires_grad));
    } else {
      vars.emplace(name, g.input(value.template cast<T>(), requires_grad));
    }
  }
  return vars;
}

template <typename T>
Var<T> forward_layers(const GeneratorVars<T>& vars, int first, Var<T> act, int target, std::optional<Var<T>> weight) {
  check_layer(first);
  auto& g = act.graph();
  const std::size_t n = act.value().dim(0);
  Var<T> h = act;
  for (int l = first; l < GeneratorModel::kNumLayers; ++l) {
    Var<T> w = (l == target && weight) ? *weight : vars.at(GeneratorModel::weight_name(l));
    if (l == 0) {
      if (h.value().rank() != 2 || h.value().dim(1) != GeneratorModel::kLatentDim) {
        throw ShapeError("generator: latent batch must have shape (B, 8), got " + shape_str(h.value().shape()));
      }
      h = linear(concat(h, ones_column(g, n)), w);
      h = reshape(h, Shape{n, kChannels[0], 4, 4});
    } else {
      h = conv2d(upsample_nearest2x(h), w, std::optional<Var<T>>(vars.at(bias_name(l))));
    }
    h = l + 1 < GeneratorModel::kNumLayers ? leaky_relu(h, T(0.2)) : sigmoid(h);
  }
  return h;
}

Tensor<float> GeneratorModel::generate(const Tensor<float>& z) const {
  if (z.rank() != 2 || z.dim(1) != kLatentDim) {
    throw ShapeError("generate: latent batch must have shape (B, 8), got " + shape_str(z.shape()));
  }
  Graph<float> g;
  auto vars = bind_params(g, *this, false);
  auto out = forward_layers(vars, 0, g.constant(z));
  return out.value().reshaped({z.dim(0), kImageSize, kImageSize, 1});
}

Tensor<float> GeneratorModel::activation_before(const Tensor<float>& z, int layer) const {
  check_layer(layer);
  if (z.rank() != 2 || z.dim(1) != kLatentDim) {
    throw ShapeError("latent batch must have shape (B, 8), got " + shape_str(z.shape()));
  }
  if (layer == 0) return z;
  Graph<float> g;
  auto vars = bind_params(g, *this, false);
  const std::size_t n = z.dim(0);
  Var<float> h = linear(concat(g.constant(z), ones_column(g, n)), vars.at("L0.weight"));
  h = leaky_relu(reshape(h, Shape{n, kChannels[0], 4, 4}), 0.2f);
  for (int l = 1; l < layer; ++l) {
    h = conv2d(upsample_nearest2x(h), vars.at(weight_name(l)), std::optional<Var<float>>(vars.at(bias_name(l))));
    h = leaky_relu(h, 0.2f);
  }
  return h.value();
}

std::uint64_t GeneratorModel::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, value] : params_) {
    h ^= fnv1a64(name);
    h = splitmix64(h ^ hash_tensor(value));
  }
  return h;
}

bool GeneratorModel::all_finite() const {
  for (const auto& [name, value] : params_)
    if (!value.all_finite()) return false;
  return true;
}

Tensor<float> flatten_kernel(const GeneratorModel& model, int layer) {
  if (!GeneratorModel::is_conv(layer)) throw ValueError("flatten_kernel: " + layer_name(layer) + " is not a conv layer");
  const auto& w = model.weight(layer);
  return w.reshaped({w.dim(0), w.dim(1) * w.dim(2) * w.dim(3)});
}

Tensor<float> unflatten_kernel(const Tensor<float>& matrix, int layer) {
  if (!GeneratorModel::is_conv(layer)) throw ValueError("unflatten_kernel: " + layer_name(layer) + " is not a conv layer");
  const Shape shape = GeneratorModel::weight_shape(layer);
  if (matrix.rank() != 2 || matrix.dim(0) != shape[0] || matrix.dim(1) != shape[1] * shape[2] * shape[3]) {
    throw ShapeError("unflatten_kernel: matrix " + shape_str(matrix.shape()) + " does not match " + shape_str(shape));
  }
  return matrix.reshaped(shape);
}

template GeneratorVars<float> bind_params(Graph<float>&, const GeneratorModel&, bool);
template GeneratorVars<double> bind_params(Graph<double>&, const GeneratorModel&, bool);
template Var<float> forward_layers(const GeneratorVars<float>&, int, Var<float>, int, std::optional<Var<float>>);
template Var<double> forward_layers(const GeneratorVars<double>&, int, Var<double>, int, std::optional<Var<double>>);

}  // namespace paramshift
