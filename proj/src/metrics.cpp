#include "paramshift/metrics.hpp"

#include <cmath>

#include "paramshift/rng.hpp"

namespace paramshift {

namespace {

template <typename T>
Tensor<T> as(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<T>();
  }
}

template <typename T>
Tensor<T> from_vec(const Vec& v) {
  return Tensor<T>({v.size()}, std::vector<T>(v.begin(), v.end()));
}

}  // namespace

const char* metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::pixel_mse: return "pixel_mse";
    case MetricKind::pixel_sse: return "pixel_sse";
    case MetricKind::random_features: return "random_features";
  }
  return "?";
}

MetricKind parse_metric(const std::string& s) {
  if (s == "pixel_mse") return MetricKind::pixel_mse;
  if (s == "pixel_sse") return MetricKind::pixel_sse;
  if (s == "random_features") return MetricKind::random_features;
  throw ValueError("unknown metric '" + s + "' (expected pixel_mse, pixel_sse or random_features)");
}

PerceptualMetric PerceptualMetric::pixel_mse() { return make(MetricKind::pixel_mse); }
PerceptualMetric PerceptualMetric::pixel_sse() { return make(MetricKind::pixel_sse); }

PerceptualMetric PerceptualMetric::random_features(std::uint64_t seed) {
  PerceptualMetric m;
  m.kind_ = MetricKind::random_features;
  m.seed_ = seed;
  Rng rng = Rng::derive(seed, "metric.random_features");
  m.w1_ = Tensor<float>({16, 1, 3, 3});
  m.w2_ = Tensor<float>({kFeatures, 16, 3, 3});
  const double s1 = std::sqrt(2.0 / 9.0), s2 = std::sqrt(2.0 / 144.0);
  for (auto& v : m.w1_.data()) v = static_cast<float>(s1 * rng.normal());
  for (auto& v : m.w2_.data()) v = static_cast<float>(s2 * rng.normal());
  return m;
}

PerceptualMetric PerceptualMetric::make(MetricKind kind, std::uint64_t seed) {
  if (kind == MetricKind::random_features) return random_features(seed);
  PerceptualMetric m;
  m.kind_ = kind;
  return m;
}

template <typename T>
Var<T> PerceptualMetric::features(Var<T> images) const {
  if (kind_ != MetricKind::random_features) throw ValueError("features() needs the random_features metric");
  const auto& s = images.value().shape();
  if (s.size() != 4 || s[1] != 1) throw ShapeError("feature extractor expects (N, 1, H, W) images, got " + shape_str(s));
  auto& g = images.graph();
  Var<T> h = leaky_relu(conv2d(images, g.constant(as<T>(w1_))), T(0.2));
  h = leaky_relu(conv2d(h, g.constant(as<T>(w2_))), T(0.2));
  return global_avg_pool(h);
}

template <typename T>
Var<T> PerceptualMetric::distance_sq(Var<T> a, Var<T> b) const {
  if (a.value().shape() != b.value().shape()) {
    throw ShapeError("distance_sq: image shapes differ: " + shape_str(a.value().shape()) + " vs " +
                     shape_str(b.value().shape()));
  }
  switch (kind_) {
    case MetricKind::pixel_mse: return sq_diff(a, b, Reduction::mean);
    case MetricKind::pixel_sse: return sq_diff(a, b, Reduction::sum);
    case MetricKind::random_features: return sq_diff(features(a), features(b), Reduction::mean);
  }
  throw ValueError("unknown metric");
}

std::vector<double> PerceptualMetric::distance_sq(const Tensor<float>& a, const Tensor<float>& b) const {
  if (a.shape() != b.shape()) {
    throw ShapeError("distance_sq: image shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto batched = [](const Tensor<float>& t) {
    if (t.rank() == 2) return t.reshaped({1, 1, t.dim(0), t.dim(1)});
    if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
    return t;
  };
  Graph<double> g;
  auto d = distance_sq(g.constant(batched(a).cast<double>()), g.constant(batched(b).cast<double>()));
  return std::vector<double>(d.value().data().begin(), d.value().data().end());
}

Tensor<float> PerceptualMetric::features(const Tensor<float>& images, std::size_t batch) const {
  if (images.rank() != 4) throw ShapeError("features: expected (N, 1, H, W) images");
  const std::size_t n = images.dim(0), per = images.size() / n;
  Tensor<float> out({n, kFeatures});
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t m = std::min(batch, n - start);
    Shape shape = images.shape();
    shape[0] = m;
    Tensor<float> chunk(shape, std::vector<float>(images.ptr() + start * per, images.ptr() + (start + m) * per));
    Graph<float> g;
    auto f = features(g.constant(std::move(chunk)));
    std::copy(f.value().ptr(), f.value().ptr() + m * kFeatures, out.ptr() + start * kFeatures);
  }
  return out;
}

Checkpoint to_checkpoint(const PerceptualMetric& m) {
  Checkpoint c;
  c.kind = "model";
  c.meta["model"] = "metric";
  c.meta["metric"] = metric_name(m.kind());
  c.meta["seed"] = m.seed();
  if (m.kind() == MetricKind::random_features) {
    c.arrays.emplace_back("conv1.weight", m.w1());
    c.arrays.emplace_back("conv2.weight", m.w2());
  }
  return c;
}

PerceptualMetric metric_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "model" || c.meta.value("model", "") != "metric") throw FormatError("checkpoint does not hold a metric");
  PerceptualMetric m;
  try {
    m.kind_ = parse_metric(c.meta.at("metric").get<std::string>());
    m.seed_ = c.meta.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed metric header: ") + e.what());
  }
  if (m.kind_ == MetricKind::random_features) {
    m.w1_ = c.array("conv1.weight");
    m.w2_ = c.array("conv2.weight");
    if (m.w1_.shape() != Shape{16, 1, 3, 3} || m.w2_.shape() != Shape{PerceptualMetric::kFeatures, 16, 3, 3}) {
      throw FormatError("shape mismatch in metric weights");
    }
  }
  return m;
}

template <typename T>
DisplacementProbe<T>::DisplacementProbe(const ShiftableGenerator& gen, const PerceptualMetric& metric,
                                        const Tensor<float>& z)
    : gen_(&gen), metric_(metric), prefix_(as<T>(gen.prefix(z))) {
  Graph<T> g;
  reference_ = gen.tail(g, g.constant(prefix_), std::nullopt).value();
}

template <typename T>
Tensor<T> DisplacementProbe<T>::shifted_images(const Vec& alpha) const {
  if (alpha.size() != dim()) throw ShapeError("shift has " + std::to_string(alpha.size()) + " values, expected " + std::to_string(dim()));
  Graph<T> g;
  return gen_->tail(g, g.constant(prefix_), g.constant(from_vec<T>(alpha))).value();
}

template <typename T>
std::pair<double, Vec> DisplacementProbe<T>::value_and_gradient(const Vec& alpha) const {
  if (alpha.size() != dim()) throw ShapeError("shift has " + std::to_string(alpha.size()) + " values, expected " + std::to_string(dim()));
  Graph<T> g;
  auto shift = g.param(from_vec<T>(alpha));
  auto out = gen_->tail(g, g.constant(prefix_), shift);
  auto loss = mean(metric_.distance_sq(g.constant(reference_), out));
  g.backward(loss);
  const auto& gr = shift.grad();
  return {static_cast<double>(loss.value().item()), Vec(gr.data().begin(), gr.data().end())};
}

template <typename T>
double DisplacementProbe<T>::value(const Vec& alpha) const {
  if (alpha.size() != dim()) throw ShapeError("shift has " + std::to_string(alpha.size()) + " values, expected " + std::to_string(dim()));
  Graph<T> g;
  auto out = gen_->tail(g, g.constant(prefix_), g.constant(from_vec<T>(alpha)));
  return static_cast<double>(mean(metric_.distance_sq(g.constant(reference_), out)).value().item());
}

template <typename T>
Vec DisplacementProbe<T>::gradient(const Vec& alpha) const {
  return value_and_gradient(alpha).second;
}

template class DisplacementProbe<float>;
template class DisplacementProbe<double>;

template Var<float> PerceptualMetric::distance_sq(Var<float>, Var<float>) const;
template Var<double> PerceptualMetric::distance_sq(Var<double>, Var<double>) const;
template Var<float> PerceptualMetric::features(Var<float>) const;
template Var<double> PerceptualMetric::features(Var<double>) const;

double expected_displacement(const ShiftableGenerator& gen, const PerceptualMetric& metric, const Vec& alpha,
                             const Tensor<float>& z) {
  return DisplacementProbe<float>(gen, metric, z).value(alpha);
}

Vec grad_displacement(const ShiftableGenerator& gen, const PerceptualMetric& metric, const Vec& alpha,
                      const Tensor<float>& z) {
  return DisplacementProbe<float>(gen, metric, z).gradient(alpha);
}

}  // namespace paramshift
