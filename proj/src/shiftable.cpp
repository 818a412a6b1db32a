#include "paramshift/shiftable.hpp"

namespace paramshift {

template <typename T>
Var<T> shaped_shift(Var<T> shift, const Shape& block_shape) {
  const auto& s = shift.value().shape();
  const std::size_t d = shape_size(block_shape);
  if (s.size() == 1 && s[0] == d) return reshape(shift, block_shape);
  if (s.size() == 2 && s[1] == d) {
    Shape batched{s[0]};
    batched.insert(batched.end(), block_shape.begin(), block_shape.end());
    return reshape(shift, batched);
  }
  throw ShapeError("shift of shape " + shape_str(s) + " does not fit a block of " + std::to_string(d) + " values");
}

template Var<float> shaped_shift(Var<float>, const Shape&);
template Var<double> shaped_shift(Var<double>, const Shape&);

Tensor<float> ShiftableGenerator::render_from_prefix(const Tensor<float>& prefix, const Tensor<float>* shift) const {
  Graph<float> g;
  std::optional<Var<float>> s;
  if (shift) s = g.constant(*shift);
  return tail(g, g.constant(prefix), s).value();
}

Tensor<float> ShiftableGenerator::render(const Tensor<float>& z, const Tensor<float>* shift) const {
  return render_from_prefix(prefix(z), shift);
}

LayerView::LayerView(GeneratorModel model, int layer) : model_(std::move(model)), layer_(layer) {
  (void)layer_name(layer);
}

Tensor<float> LayerView::base_block() const {
  const auto& w = model_.weight(layer_);
  return w.reshaped({w.size()});
}

Tensor<float> LayerView::prefix(const Tensor<float>& z) const { return model_.activation_before(z, layer_); }

template <typename T>
Var<T> LayerView::tail_impl(Graph<T>& g, Var<T> prefix, std::optional<Var<T>> shift) const {
  auto vars = bind_params(g, model_, false);
  std::optional<Var<T>> weight;
  if (shift) {
    weight = add(vars.at(GeneratorModel::weight_name(layer_)),
                 shaped_shift(*shift, GeneratorModel::weight_shape(layer_)));
  }
  return forward_layers(vars, layer_, prefix, layer_, weight);
}

Var<float> LayerView::tail(Graph<float>& g, Var<float> prefix, std::optional<Var<float>> shift) const {
  return tail_impl(g, prefix, shift);
}

Var<double> LayerView::tail(Graph<double>& g, Var<double> prefix, std::optional<Var<double>> shift) const {
  return tail_impl(g, prefix, shift);
}

}  // namespace paramshift
