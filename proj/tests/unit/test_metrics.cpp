#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "paramshift/frechet.hpp"
#include "paramshift/harness.hpp"
#include "paramshift/metrics.hpp"

using namespace paramshift;

namespace {

Tensor<float> random_images(Rng& r, std::size_t n, std::size_t s = 8) {
  Tensor<float> t({n, 1, s, s});
  for (auto& v : t.vec()) v = static_cast<float>(r.uniform());
  return t;
}

std::vector<double> reference_features(const PerceptualMetric& m, const Tensor<float>& img) {
  auto h = oracle::conv2d(img.cast<double>(), m.w1().cast<double>());
  for (auto& v : h.vec()) v = v > 0 ? v : 0.2 * v;
  h = oracle::conv2d(h, m.w2().cast<double>());
  for (auto& v : h.vec()) v = v > 0 ? v : 0.2 * v;
  const std::size_t n = h.dim(0), c = h.dim(1), hw = h.dim(2) * h.dim(3);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    for (std::size_t p = 0; p < hw; ++p) out[i] += h[i * hw + p];
    out[i] /= static_cast<double>(hw);
  }
  return out;
}

}  // namespace

TEST_CASE("pixel distances") {
  Rng r(1);
  const auto a = random_images(r, 3), b = random_images(r, 3);
  const auto mse = PerceptualMetric::pixel_mse().distance_sq(a, b);
  const auto sse = PerceptualMetric::pixel_sse().distance_sq(a, b);
  for (std::size_t n = 0; n < 3; ++n) {
    double s = 0.0;
    for (std::size_t p = 0; p < 64; ++p) s += std::pow(double(a[n * 64 + p]) - b[n * 64 + p], 2);
    CHECK(sse[n] == doctest::Approx(s).epsilon(1e-6));
    CHECK(mse[n] == doctest::Approx(s / 64).epsilon(1e-6));
  }
  CHECK_THROWS_AS(PerceptualMetric::pixel_mse().distance_sq(a, random_images(r, 2)), ShapeError);
  CHECK(parse_metric(metric_name(MetricKind::random_features)) == MetricKind::random_features);
  CHECK_THROWS_AS(parse_metric("lpips"), ValueError);
}

TEST_CASE("random-feature extractor matches plain convolutions") {
  const auto m = PerceptualMetric::random_features(17);
  CHECK(m.w1().shape() == Shape{16, 1, 3, 3});
  CHECK(m.w2().shape() == Shape{32, 16, 3, 3});
  Rng r(2);
  const auto img = random_images(r, 4);
  const auto f = m.features(img, 3);
  CHECK(f.shape() == Shape{4, 32});
  const auto ref = reference_features(m, img);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(f[i] == doctest::Approx(ref[i]).epsilon(1e-4).scale(1e-3));

  const auto other = random_images(r, 4);
  const auto fo = reference_features(m, other);
  const auto d = m.distance_sq(img, other);
  for (std::size_t n = 0; n < 4; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < 32; ++k) s += std::pow(ref[n * 32 + k] - fo[n * 32 + k], 2);
    CHECK(d[n] == doctest::Approx(s / 32).epsilon(1e-4));
  }
  CHECK(hash_tensor(PerceptualMetric::random_features(17).w1()) == hash_tensor(m.w1()));
  CHECK(hash_tensor(PerceptualMetric::random_features(18).w1()) != hash_tensor(m.w1()));
  CHECK_THROWS(PerceptualMetric::pixel_mse().features(img));
}

TEST_CASE("metric checkpoints round-trip") {
  const auto m = PerceptualMetric::random_features(5);
  const auto c = decode_checkpoint(encode_checkpoint(to_checkpoint(m)));
  const auto back = metric_from_checkpoint(c);
  CHECK(back.kind() == MetricKind::random_features);
  CHECK(back.w2() == m.w2());
}

TEST_CASE("displacement probe: zero at the origin, exact gradients") {
  BlobHarness h;
  const auto z = Tensor<float>({4, 4}, std::vector<float>(16, 0.3f));
  for (auto metric : {PerceptualMetric::pixel_mse(), PerceptualMetric::random_features(1)}) {
    DisplacementProbe<double> probe(h, metric, z);
    const Vec zero(4, 0.0);
    CHECK(probe.value(zero) == 0.0);
    for (double g : probe.gradient(zero)) CHECK(g == 0.0);
    const Vec alpha = {0.3, -0.2, 0.1, 0.4};
    const auto numeric = oracle::numeric_gradient([&](const std::vector<double>& a) { return probe.value(a); }, alpha, 1e-5);
    CHECK(oracle::relative_error(probe.gradient(alpha), numeric) < 1e-6);
    const auto [v, g] = probe.value_and_gradient(alpha);
    CHECK(v == doctest::Approx(probe.value(alpha)));
    CHECK(g[3] == doctest::Approx(probe.gradient(alpha)[3]));
  }
}

TEST_CASE("pixel displacement on the harness is quadratic in alpha") {
  // Shifts do not interact with the latent, so E d^2 = mean_p (sum_j alpha_j b_j(p))^2.
  BlobHarness h;
  const auto z = Tensor<float>({2, 4}, std::vector<float>{1, 2, 3, 4, -1, 0, 1, 0});
  const Vec alpha = {0.5, 0.0, -0.25, 0.0};
  double ref = 0.0;
  for (std::size_t p = 0; p < 1024; ++p) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += alpha[j] * h.blobs()[j * 1024 + p];
    ref += s * s;
  }
  ref /= 1024;
  CHECK(expected_displacement(h, PerceptualMetric::pixel_mse(), alpha, z) == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("frechet distance of diagonal gaussians") {
  // FD = |mu_a - mu_b|^2 + sum_i (s_a,i - s_b,i)^2 for diagonal covariances.
  FrechetStats a, b;
  a.mu = {0.0, 1.0, 2.0};
  b.mu = {1.0, 1.0, 0.0};
  a.sigma = Matrix::diag({4.0, 1.0, 0.25});
  b.sigma = Matrix::diag({1.0, 9.0, 0.25});
  a.count = b.count = 100;
  const double ref = (1.0 + 0.0 + 4.0) + (1.0 + 4.0 + 0.0);
  CHECK(frechet_distance(a, b) == doctest::Approx(ref).epsilon(1e-10));
  CHECK(frechet_distance(a, a) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-9));
}

TEST_CASE("feature statistics and pooling") {
  Rng r(3);
  Tensor<float> f({200, 3});
  for (auto& v : f.vec()) v = static_cast<float>(r.normal());
  for (std::size_t i = 0; i < 200; ++i) f[i * 3 + 2] = f[i * 3] * 2.0f + 1.0f;
  const auto s = fit_feature_stats(f);
  CHECK(s.count == 200);
  double m0 = 0.0;
  for (std::size_t i = 0; i < 200; ++i) m0 += f[i * 3];
  m0 /= 200;
  double c02 = 0.0;
  for (std::size_t i = 0; i < 200; ++i) c02 += (f[i * 3] - m0) * (f[i * 3 + 2] - (2 * m0 + 1));
  CHECK(s.mu[0] == doctest::Approx(m0).epsilon(1e-9));
  CHECK(s.sigma(0, 2) == doctest::Approx(c02 / 199).epsilon(1e-6));

  Tensor<float> lo({120, 3}, std::vector<float>(f.ptr(), f.ptr() + 360));
  Tensor<float> hi({80, 3}, std::vector<float>(f.ptr() + 360, f.ptr() + 600));
  const auto pooled = pool_stats(fit_feature_stats(lo), fit_feature_stats(hi));
  CHECK(pooled.count == 200);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pooled.mu[i] == doctest::Approx(s.mu[i]).epsilon(1e-9));
    for (std::size_t j = 0; j < 3; ++j) CHECK(pooled.sigma(i, j) == doctest::Approx(s.sigma(i, j)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(fit_feature_stats(Tensor<float>({10, 3})), ValueError);
}
