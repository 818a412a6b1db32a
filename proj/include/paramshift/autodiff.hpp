#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// Every op evaluates eagerly and appends a node to its Graph; node ids are
// assigned in evaluation order, so the node list is topologically sorted by
// construction. backward() may be called once per graph.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "paramshift/tensor.hpp"

namespace paramshift {

enum class OpKind {
  input,
  linear,
  conv2d,
  upsample2x,
  avg_pool2x,
  relu,
  leaky_relu,
  sigmoid,
  tanh,
  add,
  sub,
  mul,
  scale,
  concat,
  reshape,
  matmul,
  gather_rows,
  scale_rows,
  mean,
  sum,
  global_avg_pool,
  sq_diff,
  softmax_xent,
  abs_error,
};

const char* op_name(OpKind kind);

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  const Tensor<T>& grad() const;
  bool requires_grad() const;

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf node. Throws NumericError for non-finite data.
  Var<T> input(Tensor<T> value, bool requires_grad = false);
  Var<T> constant(Tensor<T> value) { return input(std::move(value), false); }
  Var<T> param(Tensor<T> value) { return input(std::move(value), true); }

  /// Appends an evaluated op. `backward` is dropped when no input needs grad.
  Var<T> record(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> value, Backward backward);

  /// Reverse sweep from a scalar node. A graph can be differentiated once.
  void backward(Var<T> output);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor<T>& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }
  bool differentiated() const { return consumed_; }

  /// Accumulation target for the gradient of node `id` during backward().
  Tensor<T>& grad_buffer(std::size_t id);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}
template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return graph_->grad(id_);
}
template <typename T>
bool Var<T>::requires_grad() const {
  return graph_->requires_grad(id_);
}

// ---- ops -------------------------------------------------------------------
// Shapes: images are (N, C, H, W); feature batches are (N, F).

/// x (N, in) times w^T plus b. `w` is (out, in) shared or (N, out, in) per
/// sample; `b` is (out) or (N, out).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b = std::nullopt);

/// Stride-1 convolution with zero "same" padding and odd square kernels.
/// `w` is (O, C, k, k) shared or (N, O, C, k, k) per sample; `b` is (O).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::optional<Var<T>> b = std::nullopt);

template <typename T>
Var<T> upsample_nearest2x(Var<T> x);
template <typename T>
Var<T> avg_pool2x(Var<T> x);

template <typename T>
Var<T> relu(Var<T> x);
/// Gradient at exactly 0 uses the negative-side slope.
template <typename T>
Var<T> leaky_relu(Var<T> x, T slope = T(0.2));
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> tanh(Var<T> x);

// Elementwise binary ops. Shapes must match, or one operand's shape must equal
// the other's with the leading axis removed (broadcast over that axis).
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);

/// Concatenation along axis 1 (channels for images, features for matrices).
template <typename T>
Var<T> concat(Var<T> a, Var<T> b);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// Rows of a 2-D tensor selected by index (repeats allowed).
template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> rows);
/// Multiplies slice i along axis 0 by the constant factors[i].
template <typename T>
Var<T> scale_rows(Var<T> x, std::vector<T> factors);

template <typename T>
Var<T> mean(Var<T> x);
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> global_avg_pool(Var<T> x);

enum class Reduction { mean, sum };

/// Per-sample squared difference reduced over all non-leading axes -> (N).
template <typename T>
Var<T> sq_diff(Var<T> a, Var<T> b, Reduction reduction = Reduction::mean);

/// Per-sample softmax cross-entropy of logits (N, K) against labels -> (N).
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::vector<std::size_t> labels);

/// Elementwise |a - b|; derivative 0 where a == b.
template <typename T>
Var<T> abs_error(Var<T> a, Var<T> b);

}  // namespace paramshift
