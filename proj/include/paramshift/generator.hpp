#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paramshift/autodiff.hpp"
#include "paramshift/tensor.hpp"

namespace paramshift {

/// "L0".."L3" to 0..3.
int parse_layer(const std::string& name);
std::string layer_name(int layer);

/// Toy generator: dense z(8) -> 32x4x4, then three (upsample, conv3x3) stages
/// 32->16->8->1 with leaky-relu(0.2) in between and a sigmoid output.
///
/// The dense layer is stored as one augmented matrix "L0.weight" of shape
/// (512, 9) whose last column is the bias; the input is z with a constant 1
/// appended. Conv layers keep "Lk.weight" (O, C, 3, 3) and "Lk.bias" (O).
class GeneratorModel {
 public:
  static constexpr std::size_t kLatentDim = 8;
  static constexpr std::size_t kImageSize = 32;
  static constexpr int kNumLayers = 4;

  /// All-zero parameters.
  GeneratorModel();
  /// He-normal weights, zero biases.
  static GeneratorModel initialize(std::uint64_t seed);

  static const std::vector<std::string>& param_names();
  static Shape param_shape(const std::string& name);
  static std::string weight_name(int layer);
  static Shape weight_shape(int layer);
  static std::size_t weight_size(int layer);
  static bool is_conv(int layer);

  const Tensor<float>& param(const std::string& name) const;
  Tensor<float>& param(const std::string& name);
  const std::map<std::string, Tensor<float>>& params() const { return params_; }
  const Tensor<float>& weight(int layer) const { return param(weight_name(layer)); }
  Tensor<float>& weight(int layer) { return param(weight_name(layer)); }

  /// z (B, 8) -> images (B, 32, 32, 1) in [0, 1].
  Tensor<float> generate(const Tensor<float>& z) const;
  /// Activation entering `layer` (for layer 0 that is z itself).
  Tensor<float> activation_before(const Tensor<float>& z, int layer) const;

  std::uint64_t hash() const;
  bool all_finite() const;

  /// Free-form provenance (seeds, training config, held-out error).
  nlohmann::json meta = nlohmann::json::object();

 private:
  std::map<std::string, Tensor<float>> params_;
};

/// Parameters bound into a graph.
template <typename T>
using GeneratorVars = std::map<std::string, Var<T>>;

template <typename T>
GeneratorVars<T> bind_params(Graph<T>& g, const GeneratorModel& model, bool requires_grad);

/// Runs layers first..3 on `act`, the activation entering layer `first`
/// ((N, 8) latents for layer 0). When `weight` is given it replaces the
/// weight of `target`; it may be shared or carry a leading batch axis.
/// Returns images (N, 1, 32, 32).
template <typename T>
Var<T> forward_layers(const GeneratorVars<T>& vars, int first, Var<T> act, int target = -1,
                      std::optional<Var<T>> weight = std::nullopt);

/// Conv kernel (out, in, kh, kw) as an (out, in*kh*kw) matrix.
Tensor<float> flatten_kernel(const GeneratorModel& model, int layer);
Tensor<float> unflatten_kernel(const Tensor<float>& matrix, int layer);

}  // namespace paramshift
