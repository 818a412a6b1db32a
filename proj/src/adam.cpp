#include "paramshift/adam.hpp"

#include <cmath>
#include <string>

namespace paramshift {

template <typename T>
void Adam<T>::step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape()) {
      throw ShapeError("adam: gradient " + shape_str(grads[i]->shape()) + " does not match parameter " +
                       shape_str(params[i]->shape()));
    }
    if (!grads[i]->all_finite()) throw NumericError("adam: non-finite gradient for parameter " + std::to_string(i));
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  } else {
    if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (m_[i].shape() != params[i]->shape()) throw ShapeError("adam: parameter shape changed between steps");
  }

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] = static_cast<T>(p[j] - config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace paramshift
