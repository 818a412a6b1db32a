#include "paramshift/reconstructor.hpp"

#include <cmath>

#include "paramshift/rng.hpp"

namespace paramshift {

namespace {

const std::vector<std::string> kNames = {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
                                         "conv3.weight", "conv3.bias", "cls.weight",   "cls.bias",
                                         "reg.weight",   "reg.bias"};

std::size_t index_of(const std::string& name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return i;
  throw ValueError("unknown reconstructor parameter '" + name + "'");
}

std::vector<Shape> shapes(std::size_t k, std::size_t c) {
  const auto& w = Reconstructor::kWidths;
  return {{w[0], 2 * c, 3, 3}, {w[0]}, {w[1], w[0], 3, 3}, {w[1]}, {w[2], w[1], 3, 3}, {w[2]},
          {k, w[2]},           {k},    {1, w[2]},          {1}};
}

}  // namespace

Reconstructor::Reconstructor(std::size_t k, std::uint64_t seed, std::size_t image_channels)
    : k_(k), channels_(image_channels) {
  if (k == 0) throw ValueError("reconstructor needs at least one direction");
  if (image_channels == 0) throw ValueError("reconstructor needs at least one image channel");
  Rng rng = Rng::derive(seed, "reconstructor.init");
  for (const auto& s : shapes(k, image_channels)) {
    Tensor<float> t(s, 0.0f);
    if (s.size() > 1) {
      const std::size_t fan_in = t.size() / s[0];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : t.data()) v = static_cast<float>(stddev * rng.normal());
    }
    params_.push_back(std::move(t));
  }
}

const std::vector<std::string>& Reconstructor::param_names() { return kNames; }

std::vector<Tensor<float>*> Reconstructor::params() {
  std::vector<Tensor<float>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

const Tensor<float>& Reconstructor::param(const std::string& name) const { return params_.at(index_of(name)); }
Tensor<float>& Reconstructor::param(const std::string& name) { return params_.at(index_of(name)); }

template <typename T>
std::vector<Var<T>> Reconstructor::bind(Graph<T>& g, bool requires_grad) const {
  if (params_.empty()) throw ValueError("reconstructor is not initialized");
  std::vector<Var<T>> vars;
  for (const auto& p : params_) {
    if constexpr (std::is_same_v<T, float>) {
      vars.push_back(g.input(p, requires_grad));
    } else {
      vars.push_back(g.input(p.template cast<T>(), requires_grad));
    }
  }
  return vars;
}

template <typename T>
Reconstructor::Output<T> Reconstructor::forward(const std::vector<Var<T>>& v, Var<T> pair) {
  const Shape s = pair.value().shape();
  if (v.size() != kNames.size()) throw ValueError("reconstructor forward needs bound parameters");
  const std::size_t in = v[0].value().dim(1);
  if (s.size() != 4 || s[1] != in || s[2] % 8 != 0 || s[3] % 8 != 0) {
    throw ShapeError("reconstructor expects (N, " + std::to_string(in) + ", H, W) pairs with H, W divisible by 8, got " +
                     shape_str(s));
  }
  Var<T> h = pair;
  for (int b = 0; b < 3; ++b) h = avg_pool2x(leaky_relu(conv2d<T>(h, v[2 * b], v[2 * b + 1]), T(0.2)));
  h = global_avg_pool(h);
  Output<T> out;
  out.logits = linear<T>(h, v[6], v[7]);
  out.t = reshape(linear<T>(h, v[8], v[9]), {s[0]});
  return out;
}

std::pair<Tensor<float>, Tensor<float>> Reconstructor::predict(const Tensor<float>& pair) const {
  Graph<float> g;
  auto out = forward(bind(g, false), g.constant(pair));
  return {out.logits.value(), out.t.value()};
}

std::uint64_t Reconstructor::hash() const {
  std::uint64_t h = fnv1a64("reconstructor");
  for (const auto& p : params_) h = splitmix64(h ^ hash_tensor(p));
  return h;
}

Checkpoint to_checkpoint(const Reconstructor& r) {
  Checkpoint c;
  c.kind = "model";
  c.meta["model"] = "reconstructor";
  c.meta["directions"] = r.num_directions();
  c.meta["image_channels"] = r.image_channels();
  for (const auto& name : Reconstructor::param_names()) c.arrays.emplace_back(name, r.param(name));
  return c;
}

Reconstructor reconstructor_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "model" || c.meta.value("model", "") != "reconstructor") {
    throw FormatError("checkpoint does not hold a reconstructor");
  }
  Reconstructor r(c.meta.value("directions", std::size_t{1}), 0, c.meta.value("image_channels", std::size_t{1}));
  for (const auto& name : Reconstructor::param_names()) {
    const auto& a = c.array(name);
    if (a.shape() != r.param(name).shape()) throw FormatError("shape mismatch for " + name);
    r.param(name) = a;
  }
  return r;
}

template std::vector<Var<float>> Reconstructor::bind(Graph<float>&, bool) const;
template std::vector<Var<double>> Reconstructor::bind(Graph<double>&, bool) const;
template Reconstructor::Output<float> Reconstructor::forward(const std::vector<Var<float>>&, Var<float>);
template Reconstructor::Output<double> Reconstructor::forward(const std::vector<Var<double>>&, Var<double>);

}  // namespace paramshift
