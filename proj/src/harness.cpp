#include "paramshift/harness.hpp"

#include <cmath>
#include <numbers>

namespace paramshift {

namespace {

template <typename T>
Tensor<T> to(const std::vector<double>& v, Shape shape) {
  return Tensor<T>(std::move(shape), std::vector<T>(v.begin(), v.end()));
}

}  // namespace

LinearGenerator::LinearGenerator(std::vector<double> a, std::vector<double> d) : a_(std::move(a)), d_(std::move(d)) {
  if (a_.size() != 4 || d_.size() != 2) throw ShapeError("linear generator: A must be 2x2 and D diagonal of size 2");
}

Tensor<float> LinearGenerator::base_block() const { return to<float>(a_, {4}); }

template <typename T>
Var<T> LinearGenerator::tail_impl(Graph<T>& g, Var<T> prefix, std::optional<Var<T>> shift) const {
  Var<T> a = g.constant(to<T>(a_, {2, 2}));
  if (shift) a = add(a, shaped_shift(*shift, Shape{2, 2}));
  return mul(linear(prefix, a), g.constant(to<T>(d_, {2})));
}

Var<float> LinearGenerator::tail(Graph<float>& g, Var<float> prefix, std::optional<Var<float>> shift) const {
  return tail_impl(g, prefix, shift);
}
Var<double> LinearGenerator::tail(Graph<double>& g, Var<double> prefix, std::optional<Var<double>> shift) const {
  return tail_impl(g, prefix, shift);
}

BlobHarness::BlobHarness(double texture_scale)
    : texture_scale_(texture_scale), blobs_({kBlobs, 1024}), textures_({4, 1024}) {
  const double amp[kBlobs] = {1.0, 0.8, 0.6, 0.4};
  const double sigma = 3.0;
  for (std::size_t j = 0; j < kBlobs; ++j) {
    const std::size_t qx = j % 2, qy = j / 2;
    const double cx = 16.0 * static_cast<double>(qx) + 8.0;
    const double cy = 16.0 * static_cast<double>(qy) + 8.0;
    for (std::size_t y = 16 * qy; y < 16 * qy + 16; ++y)
      for (std::size_t x = 16 * qx; x < 16 * qx + 16; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        blobs_[j * 1024 + y * 32 + x] = static_cast<float>(amp[j] * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
      }
  }
  const double w = 2.0 * std::numbers::pi / 32.0;
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const double fx = w * (static_cast<double>(x) + 0.5), fy = w * (static_cast<double>(y) + 0.5);
      textures_[0 * 1024 + y * 32 + x] = static_cast<float>(std::cos(fx));
      textures_[1 * 1024 + y * 32 + x] = static_cast<float>(std::cos(fy));
      textures_[2 * 1024 + y * 32 + x] = static_cast<float>(std::sin(fx + fy));
      textures_[3 * 1024 + y * 32 + x] = static_cast<float>(std::sin(fx - fy));
    }
}

Tensor<float> BlobHarness::base_block() const { return Tensor<float>({kBlobs}, 0.5f); }

Tensor<float> BlobHarness::prefix(const Tensor<float>& z) const {
  if (z.rank() != 2 || z.dim(1) != 4) throw ShapeError("blob harness: latents must have shape (N, 4)");
  const std::size_t n = z.dim(0);
  Tensor<float> out({n, 1, 32, 32});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < 4; ++j) {
      const double c = texture_scale_ * z[s * 4 + j];
      for (std::size_t p = 0; p < 1024; ++p) out[s * 1024 + p] += static_cast<float>(c * textures_[j * 1024 + p]);
    }
  return out;
}

template <typename T>
Var<T> BlobHarness::tail_impl(Graph<T>& g, Var<T> prefix, std::optional<Var<T>> shift) const {
  Var<T> coeff = g.constant(Tensor<T>({1, kBlobs}, T(0.5)));
  if (shift) {
    const auto& s = shift->value().shape();
    Var<T> sh = s.size() == 1 ? reshape(*shift, Shape{1, kBlobs}) : *shift;
    if (sh.value().dim(1) != kBlobs) throw ShapeError("blob harness: shift must have 4 values per sample");
    coeff = add(sh, reshape(coeff, Shape{kBlobs}));
  }
  Var<T> basis = g.constant(blobs_.template cast<T>());
  Var<T> img = matmul(coeff, basis);
  const std::size_t rows = img.value().dim(0);
  img = reshape(img, rows == 1 ? Shape{1, 32, 32} : Shape{rows, 1, 32, 32});
  return add(prefix, img);
}

Var<float> BlobHarness::tail(Graph<float>& g, Var<float> prefix, std::optional<Var<float>> shift) const {
  return tail_impl(g, prefix, shift);
}
Var<double> BlobHarness::tail(Graph<double>& g, Var<double> prefix, std::optional<Var<double>> shift) const {
  return tail_impl(g, prefix, shift);
}

}  // namespace paramshift
