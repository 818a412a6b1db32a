#pragma once

// Small generators with known structure, used to check discovery and
// evaluation code against closed-form answers.

#include "paramshift/shiftable.hpp"

namespace paramshift {

/// G(z) = D * A * z with z in R^2, D = diag(d0, d1); the shifted block is A
/// (row-major, 4 values). Images are plain vectors of shape (2).
class LinearGenerator final : public ShiftableGenerator {
 public:
  LinearGenerator(std::vector<double> a = {1.0, 0.0, 0.0, 1.0}, std::vector<double> d = {2.0, 1.0});

  std::size_t latent_dim() const override { return 2; }
  std::size_t shift_dim() const override { return 4; }
  Shape image_shape() const override { return {2}; }
  Tensor<float> base_block() const override;

  Tensor<float> prefix(const Tensor<float>& z) const override { return z; }
  Var<float> tail(Graph<float>& g, Var<float> prefix, std::optional<Var<float>> shift) const override;
  Var<double> tail(Graph<double>& g, Var<double> prefix, std::optional<Var<double>> shift) const override;

  const std::vector<double>& a() const { return a_; }
  const std::vector<double>& d() const { return d_; }

 private:
  template <typename T>
  Var<T> tail_impl(Graph<T>& g, Var<T> prefix, std::optional<Var<T>> shift) const;

  std::vector<double> a_;
  std::vector<double> d_;
};

/// 32x32 image = sum_j P_j * a_j * phi_j + texture(z).
///
/// phi_0..phi_3 are Gaussian bumps confined to the quadrants top-left,
/// top-right, bottom-left, bottom-right, with amplitudes a = (1, 0.8, 0.6,
/// 0.4). The shifted block is P (4 values, base 0.5 each). texture(z) is a
/// low-frequency pattern linear in the 4 latents; it does not interact with
/// P, so the effect of a shift is the same for every z.
class BlobHarness final : public ShiftableGenerator {
 public:
  static constexpr std::size_t kBlobs = 4;

  explicit BlobHarness(double texture_scale = 0.05);

  std::size_t latent_dim() const override { return 4; }
  std::size_t shift_dim() const override { return kBlobs; }
  Shape image_shape() const override { return {1, 32, 32}; }
  Tensor<float> base_block() const override;

  Tensor<float> prefix(const Tensor<float>& z) const override;
  Var<float> tail(Graph<float>& g, Var<float> prefix, std::optional<Var<float>> shift) const override;
  Var<double> tail(Graph<double>& g, Var<double> prefix, std::optional<Var<double>> shift) const override;

  /// (4, 1024): row j is a_j * phi_j.
  const Tensor<float>& blobs() const { return blobs_; }
  /// True when blob j lies in the top half of the image.
  static bool blob_in_top_half(std::size_t j) { return j < 2; }

 private:
  template <typename T>
  Var<T> tail_impl(Graph<T>& g, Var<T> prefix, std::optional<Var<T>> shift) const;

  double texture_scale_;
  Tensor<float> blobs_;
  Tensor<float> textures_;  // (4, 1024)
};

}  // namespace paramshift
