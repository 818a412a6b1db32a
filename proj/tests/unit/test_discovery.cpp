#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "paramshift/checkpoint.hpp"
#include "paramshift/discovery.hpp"
#include "paramshift/harness.hpp"
#include "paramshift/reconstructor.hpp"

using namespace paramshift;

namespace {

double row_norm(const DirectionSet& d, std::size_t k) {
  double s = 0.0;
  for (double v : d.coefficient(k)) s += v * v;
  return std::sqrt(s);
}

DirectionSet blob_directions() {
  DirectionSet d;
  d.layer = -1;
  d.kind = Parametrization::raw_kernel;
  d.coeffs = random_unit_rows(2, 4, 3);
  d.T = 1.5;
  return d;
}

}  // namespace

TEST_CASE("config validation") {
  DiscoveryConfig cfg;
  CHECK_NOTHROW(cfg.validate(8));
  CHECK_THROWS_AS(cfg.validate(4), ValueError);
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(8), ValueError);
  CHECK(DiscoveryConfig{}.to_json().at("K") == 8);
}

TEST_CASE("svd baseline: identity coefficients scored by singular value") {
  const auto m = GeneratorModel::initialize(2);
  const auto d = svd_baseline(m, 2);
  CHECK(d.kind == Parametrization::singular_values);
  CHECK(d.count() == 8);
  CHECK_NOTHROW(d.validate());
  for (std::size_t k = 0; k < d.count(); ++k) {
    CHECK(d.coefficient(k)[k] == 1.0);
    CHECK(d.info[k].score == doctest::Approx(d.sigma[k]));
    if (k) CHECK(d.info[k - 1].score >= d.info[k].score);
  }
  CHECK_THROWS_AS(svd_baseline(m, 0), ValueError);
}

TEST_CASE("power iteration step is a Hessian-vector product for quadratics") {
  const std::vector<std::vector<double>> A = {{3.0, 1.0}, {1.0, 2.0}};
  auto grad = [&](const Vec& x) { return Vec{A[0][0] * x[0] + A[0][1] * x[1], A[1][0] * x[0] + A[1][1] * x[1]}; };
  const Vec v = {2.0, -1.0};
  const Vec hv = power_iteration_step(v, 0.1, grad);
  const double n = std::sqrt(5.0);
  CHECK(hv[0] == doctest::Approx((6.0 - 1.0) / n));
  CHECK(hv[1] == doctest::Approx((2.0 - 2.0) / n));
}

TEST_CASE("spectrum of the blob harness follows blob energy") {
  BlobHarness h;
  DiscoveryConfig cfg;
  cfg.hessian_batch = 8;
  cfg.power_iterations = 30;
  const auto s = top_k_eigendirections(h, PerceptualMetric::pixel_mse(), cfg, 4);
  CHECK(orthonormality_error(s.vectors) < 1e-6);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(s.vectors[i][i]) > 0.99);
    if (i) CHECK(s.eigenvalues[i - 1] >= s.eigenvalues[i]);
  }
  // Oracle: H = 2 B B^T / P for blob rows B, so eigenvalues are 2 |b_j|^2 / 1024.
  for (std::size_t j = 0; j < 4; ++j) {
    double e = 0.0;
    for (std::size_t p = 0; p < 1024; ++p) e += std::pow(h.blobs()[j * 1024 + p], 2);
    CHECK(s.eigenvalues[j] == doctest::Approx(2 * e / 1024).epsilon(1e-3));
  }
  const auto d = spectrum_directions(s, -1, 2.0);
  CHECK(d.info[0].method == "spectrum");
  CHECK(d.info[0].eigenvalue == doctest::Approx(s.eigenvalues[0]));
  CHECK(d.T == 2.0);
}

TEST_CASE("optimization step keeps unit directions and is reproducible") {
  BlobHarness h;
  DiscoveryConfig cfg;
  cfg.K = 2;
  cfg.lr = 1e-2;
  cfg.batch = 8;
  cfg.seed = 4;
  OptState a(blob_directions(), cfg), b(blob_directions(), cfg);
  for (int i = 0; i < 5; ++i) {
    const auto la = train_step_opt(h, a, cfg);
    const auto lb = train_step_opt(h, b, cfg);
    CHECK(la.total == lb.total);
    CHECK(std::isfinite(la.ce));
    CHECK(la.total == doctest::Approx(la.ce + cfg.lambda * la.mae));
  }
  CHECK(a.dirs.coeffs == b.dirs.coeffs);
  CHECK(a.reconstructor.hash() == b.reconstructor.hash());
  CHECK_FALSE(a.dirs.coeffs == blob_directions().coeffs);
  for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(row_norm(a.dirs, k) - 1.0) <= 1e-6);

  OptState frozen(blob_directions(), cfg);
  frozen.learn_directions = false;
  train_step_opt(h, frozen, cfg);
  CHECK(frozen.dirs.coeffs == blob_directions().coeffs);
}

TEST_CASE("training runs record curves and scores") {
  BlobHarness h;
  DiscoveryConfig cfg;
  cfg.K = 2;
  cfg.iterations = 20;
  cfg.batch = 8;
  cfg.heldout = 64;
  const auto r = train_directions(h, blob_directions(), cfg, "optimization");
  CHECK(r.curve.size() == 20);
  CHECK(r.dirs.info.size() == 2);
  CHECK(r.accuracy.per_direction.size() == 2);
  CHECK(r.dirs.meta.at("method") == "optimization");
  CHECK(r.dirs.info[0].score >= r.dirs.info[1].score);
  CHECK(r.accuracy.overall >= 0.0);
  CHECK(r.accuracy.overall <= 1.0);
}

TEST_CASE("hybrid directions stay in the eigen span") {
  BlobHarness h;
  DiscoveryConfig cfg;
  cfg.K = 2;
  cfg.eigen_count = 3;
  cfg.iterations = 30;
  cfg.batch = 8;
  cfg.heldout = 64;
  cfg.lr = 1e-2;
  cfg.hessian_batch = 8;
  const auto r = discover_hybrid(h, -1, PerceptualMetric::pixel_mse(), cfg);
  CHECK(r.dirs.kind == Parametrization::eigen_coeffs);
  CHECK(r.dirs.coord_dim() == 3);
  CHECK(span_residual(r.dirs) <= 1e-6);
  CHECK_NOTHROW(r.dirs.validate());
}

TEST_CASE("calibration lands in the band") {
  BlobHarness h;
  const auto d = blob_directions();
  const auto z = sample_normal(16, 4, 1);
  const double T = calibrate_shift_range(h, d, PerceptualMetric::pixel_mse(), z);
  std::vector<double> disp;
  for (std::size_t k = 0; k < d.count(); ++k) disp.push_back(expected_displacement(h, PerceptualMetric::pixel_mse(), [&] {
    Vec a = d.raw_direction(k);
    for (auto& v : a) v *= T;
    return a;
  }(), z));
  const double median = 0.5 * (disp[0] + disp[1]);
  CHECK(median == doctest::Approx(std::sqrt(0.01 * 0.1)).epsilon(1e-3));

  LayerView saturating(GeneratorModel::initialize(1), 3);
  DirectionSet s;
  s.layer = 3;
  s.coeffs = random_unit_rows(1, 72, 2);
  CHECK_THROWS_AS(calibrate_shift_range(saturating, s, PerceptualMetric::pixel_mse(), sample_normal(8, 8, 1), {2.0, 3.0}),
                  ValueError);
  CHECK_THROWS_AS(calibrate_shift_range(h, d, PerceptualMetric::pixel_mse(), z, {0.1, 0.01}), ValueError);
}

TEST_CASE("reconstructor shapes and persistence") {
  Reconstructor r(5, 3);
  Tensor<float> pair({4, 2, 32, 32}, 0.25f);
  const auto [logits, t] = r.predict(pair);
  CHECK(logits.shape() == Shape{4, 5});
  CHECK(t.shape() == Shape{4});
  CHECK(Reconstructor(5, 3).hash() == r.hash());
  CHECK(Reconstructor(5, 4).hash() != r.hash());
  const auto back = reconstructor_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(r))));
  CHECK(back.hash() == r.hash());
}

TEST_CASE("random unit rows") {
  const auto c = random_unit_rows(3, 5, 9);
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += double(c[k * 5 + i]) * c[k * 5 + i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(random_unit_rows(3, 5, 9) == c);
}
