#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "paramshift/autodiff.hpp"
#include "paramshift/checkpoint.hpp"

namespace paramshift {

/// Classifier-regressor on image pairs.
///
/// Input is the (original, shifted) pair concatenated along channels,
/// (N, 2c, H, W). Trunk: three blocks conv3x3 -> leaky-relu -> 2x average
/// pool with 16, 32 and 64 channels, then global average pooling. Heads: a
/// K-way linear classifier for the direction index and a scalar linear
/// regressor for the shift magnitude.
class Reconstructor {
 public:
  static constexpr std::size_t kWidths[3] = {16, 32, 64};

  Reconstructor() = default;
  Reconstructor(std::size_t k, std::uint64_t seed, std::size_t image_channels = 1);

  std::size_t num_directions() const { return k_; }
  std::size_t image_channels() const { return channels_; }

  static const std::vector<std::string>& param_names();
  std::vector<Tensor<float>*> params();
  const Tensor<float>& param(const std::string& name) const;
  Tensor<float>& param(const std::string& name);

  template <typename T>
  struct Output {
    Var<T> logits;  // (N, K)
    Var<T> t;       // (N)
  };

  /// `vars` come from bind(); `pair` is (N, 2c, H, W) with H, W divisible by 8.
  template <typename T>
  static Output<T> forward(const std::vector<Var<T>>& vars, Var<T> pair);

  template <typename T>
  std::vector<Var<T>> bind(Graph<T>& g, bool requires_grad) const;

  /// Plain evaluation: logits (N, K) and t (N).
  std::pair<Tensor<float>, Tensor<float>> predict(const Tensor<float>& pair) const;

  std::uint64_t hash() const;

 private:
  std::size_t k_ = 0;
  std::size_t channels_ = 1;
  std::vector<Tensor<float>> params_;
};

Checkpoint to_checkpoint(const Reconstructor& r);
Reconstructor reconstructor_from_checkpoint(const Checkpoint& c);

}  // namespace paramshift
