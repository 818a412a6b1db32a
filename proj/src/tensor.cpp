#include "paramshift/tensor.hpp"

#include <cmath>
#include <sstream>
#include <string_view>

#include "paramshift/rng.hpp"

namespace paramshift {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

template <typename T>
void Tensor<T>::fill(T value) {
  for (auto& x : data_) x = value;
}

template <typename T>
std::uint64_t hash_tensor(const Tensor<T>& t) {
  std::string_view bytes(reinterpret_cast<const char*>(t.ptr()), t.size() * sizeof(T));
  std::uint64_t h = fnv1a64(bytes);
  for (auto d : t.shape()) h = splitmix64(h ^ d);
  return h;
}

template class Tensor<float>;
template class Tensor<double>;
template std::uint64_t hash_tensor(const Tensor<float>&);
template std::uint64_t hash_tensor(const Tensor<double>&);

}  // namespace paramshift
