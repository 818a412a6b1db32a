#pragma once

#include <cstdint>
#include <vector>

#include "paramshift/tensor.hpp"

namespace paramshift {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are allocated on the first step
/// and later steps must present parameters of identical shapes.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads);
  /// Single-parameter convenience.
  void step(Tensor<T>& param, const Tensor<T>& grad) { step({&param}, {&grad}); }

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<Tensor<double>>& first_moments() const { return m_; }
  const std::vector<Tensor<double>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor<double>> m_;
  std::vector<Tensor<double>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace paramshift
