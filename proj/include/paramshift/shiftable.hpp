#pragma once

#include <optional>

#include "paramshift/autodiff.hpp"
#include "paramshift/generator.hpp"
#include "paramshift/tensor.hpp"

namespace paramshift {

/// A generator with one designated parameter block that can be shifted.
///
/// Evaluation is split at the shifted block: prefix(z) is everything that
/// does not depend on the block (cached by callers), tail() runs the rest
/// with the block replaced by base + shift. `shift` is either shared (D) or
/// per sample (N, D). Outputs are image batches (N, ...image_shape()).
class ShiftableGenerator {
 public:
  virtual ~ShiftableGenerator() = default;

  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t shift_dim() const = 0;
  virtual Shape image_shape() const = 0;
  /// Unshifted parameter block, flattened to (D).
  virtual Tensor<float> base_block() const = 0;

  virtual Tensor<float> prefix(const Tensor<float>& z) const = 0;
  virtual Var<float> tail(Graph<float>& g, Var<float> prefix, std::optional<Var<float>> shift) const = 0;
  virtual Var<double> tail(Graph<double>& g, Var<double> prefix, std::optional<Var<double>> shift) const = 0;

  /// Images for latents z, optionally shifted (shift (D) or (N, D)).
  Tensor<float> render(const Tensor<float>& z, const Tensor<float>* shift = nullptr) const;
  Tensor<float> render_from_prefix(const Tensor<float>& prefix, const Tensor<float>* shift = nullptr) const;
};

/// GeneratorModel with the weight of one layer as the shifted block.
class LayerView final : public ShiftableGenerator {
 public:
  LayerView(GeneratorModel model, int layer);

  std::size_t latent_dim() const override { return GeneratorModel::kLatentDim; }
  std::size_t shift_dim() const override { return GeneratorModel::weight_size(layer_); }
  Shape image_shape() const override { return {1, GeneratorModel::kImageSize, GeneratorModel::kImageSize}; }
  Tensor<float> base_block() const override;

  Tensor<float> prefix(const Tensor<float>& z) const override;
  Var<float> tail(Graph<float>& g, Var<float> prefix, std::optional<Var<float>> shift) const override;
  Var<double> tail(Graph<double>& g, Var<double> prefix, std::optional<Var<double>> shift) const override;

  int layer() const { return layer_; }
  const GeneratorModel& model() const { return model_; }

 private:
  template <typename T>
  Var<T> tail_impl(Graph<T>& g, Var<T> prefix, std::optional<Var<T>> shift) const;

  GeneratorModel model_;
  int layer_;
};

/// Reshapes a flat shift (D) or (N, D) to `block_shape` (with batch axis when
/// present).
template <typename T>
Var<T> shaped_shift(Var<T> shift, const Shape& block_shape);

}  // namespace paramshift
