#include "paramshift/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace paramshift {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

// Row-major C (m x n) = op(A) op(B), or += when `accumulate`.
template <typename T>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, bool accumulate, T* c, std::size_t ldc) {
  using Index = Eigen::Index;
  MutMap<T> C(c, static_cast<Index>(m), static_cast<Index>(n), Eigen::OuterStride<>(static_cast<Index>(ldc)));
  ConstMap<T> A(a, static_cast<Index>(ta ? k : m), static_cast<Index>(ta ? m : k),
                Eigen::OuterStride<>(static_cast<Index>(lda)));
  ConstMap<T> B(b, static_cast<Index>(tb ? n : k), static_cast<Index>(tb ? k : n),
                Eigen::OuterStride<>(static_cast<Index>(ldb)));
  auto run = [&](const auto& x, const auto& y) {
    if (accumulate) {
      C.noalias() += x * y;
    } else {
      C.noalias() = x * y;
    }
  };
  if (ta && tb) {
    run(A.transpose(), B.transpose());
  } else if (ta) {
    run(A.transpose(), B);
  } else if (tb) {
    run(A, B.transpose());
  } else {
    run(A, B);
  }
}

template <typename T>
Graph<T>& same_graph(Var<T> a, Var<T> b) {
  if (&a.graph() != &b.graph()) throw Error("operands belong to different graphs");
  return a.graph();
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

// Column buffer (C*k*k, H*W) for a single image.
template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k, T* cols) {
  const long p = static_cast<long>(k / 2);
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* xc = x + ci * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      const long dy = static_cast<long>(ky) - p;
      for (std::size_t kx = 0; kx < k; ++kx) {
        const long dx = static_cast<long>(kx) - p;
        const long x0 = std::max(0L, -dx), x1 = std::min(lw, lw - dx);
        T* row = cols + ((ci * k + ky) * k + kx) * hw;
        for (long y = 0; y < lh; ++y) {
          T* out = row + y * lw;
          const long sy = y + dy;
          if (sy < 0 || sy >= lh || x1 <= x0) {
            std::fill(out, out + lw, T{0});
            continue;
          }
          std::fill(out, out + x0, T{0});
          std::copy(xc + sy * lw + x0 + dx, xc + sy * lw + x1 + dx, out + x0);
          std::fill(out + x1, out + lw, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, T* x) {
  const long p = static_cast<long>(k / 2);
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c; ++ci) {
    T* xc = x + ci * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      const long dy = static_cast<long>(ky) - p;
      for (std::size_t kx = 0; kx < k; ++kx) {
        const long dx = static_cast<long>(kx) - p;
        const long x0 = std::max(0L, -dx), x1 = std::min(lw, lw - dx);
        const T* row = cols + ((ci * k + ky) * k + kx) * hw;
        for (long y = 0; y < lh; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= lh) continue;
          const T* in = row + y * lw;
          T* dst = xc + sy * lw + dx;
          for (long xx = x0; xx < x1; ++xx) dst[xx] += in[xx];
        }
      }
    }
  }
}

template <typename T, typename F, typename D>
Var<T> unary(Var<T> x, OpKind kind, F f, D dfdx) {
  auto& g = x.graph();
  const auto& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const std::size_t xi = x.id();
  return g.record(kind, {xi}, std::move(y), [xi, dfdx](Graph<T>& gr, const Tensor<T>& gy) {
    const auto& xv = gr.value(xi);
    auto& gx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * dfdx(xv[i]);
  });
}

// Output shape of a leading-axis broadcast, or throws.
template <typename T>
Shape broadcast_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  auto tail = [](const Shape& s) { return Shape(s.begin() + (s.empty() ? 0 : 1), s.end()); };
  if (!a.shape().empty() && tail(a.shape()) == b.shape()) return a.shape();
  if (!b.shape().empty() && tail(b.shape()) == a.shape()) return b.shape();
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

template <typename T, typename F, typename DA, typename DB>
Var<T> binary(Var<T> a, Var<T> b, OpKind kind, F f, DA dfda, DB dfdb) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> y(broadcast_shape(av, bv, op_name(kind)));
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i % na], bv[i % nb]);
  const std::size_t ai = a.id(), bi = b.id();
  return g.record(kind, {ai, bi}, std::move(y), [ai, bi, dfda, dfdb](Graph<T>& gr, const Tensor<T>& gy) {
    const auto& av = gr.value(ai);
    const auto& bv = gr.value(bi);
    const std::size_t na = av.size(), nb = bv.size();
    if (gr.requires_grad(ai)) {
      auto& ga = gr.grad_buffer(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i % na] += gy[i] * dfda(av[i % na], bv[i % nb]);
    }
    if (gr.requires_grad(bi)) {
      auto& gb = gr.grad_buffer(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i % nb] += gy[i] * dfdb(av[i % na], bv[i % nb]);
    }
  });
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::linear: return "linear";
    case OpKind::conv2d: return "conv2d";
    case OpKind::upsample2x: return "upsample2x";
    case OpKind::avg_pool2x: return "avg_pool2x";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::concat: return "concat";
    case OpKind::reshape: return "reshape";
    case OpKind::matmul: return "matmul";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::scale_rows: return "scale_rows";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::sq_diff: return "sq_diff";
    case OpKind::softmax_xent: return "softmax_xent";
    case OpKind::abs_error: return "abs_error";
  }
  return "?";
}

// ---- Graph -----------------------------------------------------------------

template <typename T>
Var<T> Graph<T>::input(Tensor<T> value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite value in graph input");
  if (consumed_) throw Error("graph already differentiated; build a new graph");
  Node node{OpKind::input, {}, std::move(value), std::nullopt, requires_grad, {}};
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> value, Backward backward) {
  if (consumed_) throw Error("graph already differentiated; build a new graph");
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op_name(kind));
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_.at(id).requires_grad;
  Node node{kind, std::move(inputs), std::move(value), std::nullopt, needs, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
  auto& node = nodes_.at(id);
  if (!node.grad) node.grad.emplace(node.value.shape());
  return *node.grad;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(std::size_t id) const {
  if (!consumed_) throw Error("gradients are unavailable before backward()");
  const auto& node = nodes_.at(id);
  if (!node.grad) throw Error("no gradient retained for node " + std::to_string(id));
  return *node.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> output) {
  if (&output.graph() != this) throw Error("backward: output belongs to another graph");
  if (consumed_) throw Error("backward already ran on this graph; re-evaluate before differentiating again");
  const auto& out = nodes_.at(output.id());
  if (out.value.size() != 1) {
    throw ShapeError("backward requires a scalar output, got shape " + shape_str(out.value.shape()));
  }
  consumed_ = true;
  grad_buffer(output.id())[0] = T{1};
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || !node.grad) continue;
    if (node.kind == OpKind::input) continue;
    if (node.backward) node.backward(*this, *node.grad);
    node.grad.reset();
    node.backward = nullptr;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& node = nodes_[i];
    if (node.kind != OpKind::input || !node.requires_grad) continue;
    if (!node.grad) node.grad.emplace(node.value.shape());
    if (!node.grad->all_finite()) throw NumericError("non-finite gradient for input " + std::to_string(i));
  }
}

// ---- dense / conv ------------------------------------------------------------

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b) {
  auto& g = same_graph(x, w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  require_rank(xv, 2, "linear input");
  const std::size_t n = xv.dim(0), in = xv.dim(1);
  const bool per_sample = wv.rank() == 3;
  if (per_sample ? (wv.dim(0) != n || wv.dim(2) != in) : (wv.rank() != 2 || wv.dim(1) != in)) {
    throw ShapeError("linear: weight " + shape_str(wv.shape()) + " incompatible with input " +
                     shape_str(xv.shape()));
  }
  const std::size_t out = per_sample ? wv.dim(1) : wv.dim(0);
  bool bias_per_sample = false;
  if (b) {
    same_graph(x, *b);
    const auto& bv = b->value();
    bias_per_sample = bv.rank() == 2;
    if (!(bv.shape() == Shape{out} || bv.shape() == Shape{n, out})) {
      throw ShapeError("linear: bias " + shape_str(bv.shape()) + " incompatible with output width " +
                       std::to_string(out));
    }
  }
  Tensor<T> y({n, out});
  if (!per_sample) {
    gemm(false, true, n, out, in, xv.ptr(), in, wv.ptr(), in, false, y.ptr(), out);
  } else {
    for (std::size_t s = 0; s < n; ++s) {
      const T* ws = wv.ptr() + s * out * in;
      const T* xs = xv.ptr() + s * in;
      for (std::size_t o = 0; o < out; ++o) {
        T acc{0};
        for (std::size_t i = 0; i < in; ++i) acc += ws[o * in + i] * xs[i];
        y[s * out + o] = acc;
      }
    }
  }
  if (b) {
    const auto& bv = b->value();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t o = 0; o < out; ++o) y[s * out + o] += bv[bias_per_sample ? s * out + o : o];
  }
  std::vector<std::size_t> ids{x.id(), w.id()};
  if (b) ids.push_back(b->id());
  const std::size_t xi = x.id(), wi = w.id(), bi = b ? b->id() : 0;
  const bool has_bias = b.has_value();
  return g.record(OpKind::linear, ids, std::move(y),
                  [=](Graph<T>& gr, const Tensor<T>& gy) {
                    const auto& xv = gr.value(xi);
                    const auto& wv = gr.value(wi);
                    if (gr.requires_grad(xi)) {
                      auto& gx = gr.grad_buffer(xi);
                      if (!per_sample) {
                        gemm(false, false, n, in, out, gy.ptr(), out, wv.ptr(), in, true, gx.ptr(), in);
                      } else {
                        for (std::size_t s = 0; s < n; ++s)
                          for (std::size_t o = 0; o < out; ++o) {
                            const T go = gy[s * out + o];
                            const T* ws = wv.ptr() + (s * out + o) * in;
                            for (std::size_t i = 0; i < in; ++i) gx[s * in + i] += go * ws[i];
                          }
                      }
                    }
                    if (gr.requires_grad(wi)) {
                      auto& gw = gr.grad_buffer(wi);
                      if (!per_sample) {
                        gemm(true, false, out, in, n, gy.ptr(), out, xv.ptr(), in, true, gw.ptr(), in);
                      } else {
                        for (std::size_t s = 0; s < n; ++s)
                          for (std::size_t o = 0; o < out; ++o) {
                            const T go = gy[s * out + o];
                            T* gws = gw.ptr() + (s * out + o) * in;
                            for (std::size_t i = 0; i < in; ++i) gws[i] += go * xv[s * in + i];
                          }
                      }
                    }
                    if (has_bias && gr.requires_grad(bi)) {
                      auto& gb = gr.grad_buffer(bi);
                      for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t o = 0; o < out; ++o)
                          gb[bias_per_sample ? s * out + o : o] += gy[s * out + o];
                    }
                  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::optional<Var<T>> b) {
  auto& g = same_graph(x, w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  require_rank(xv, 4, "conv2d input");
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const bool per_sample = wv.rank() == 5;
  const std::size_t off = per_sample ? 1 : 0;
  if ((wv.rank() != 4 && wv.rank() != 5) || (per_sample && wv.dim(0) != n)) {
    throw ShapeError("conv2d: bad weight shape " + shape_str(wv.shape()));
  }
  const std::size_t o = wv.dim(off), k = wv.dim(off + 2);
  if (wv.dim(off + 1) != c || wv.dim(off + 3) != k || k % 2 == 0) {
    throw ShapeError("conv2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                     shape_str(xv.shape()));
  }
  if (b) {
    same_graph(x, *b);
    if (b->value().shape() != Shape{o}) throw ShapeError("conv2d: bias must have shape (" + std::to_string(o) + ")");
  }
  const std::size_t hw = h * wd, ckk = c * k * k;
  const std::size_t wstride = per_sample ? o * ckk : 0;
  Tensor<T> y({n, o, h, wd});
  std::vector<T> cols(ckk * hw);
  for (std::size_t s = 0; s < n; ++s) {
    im2col(xv.ptr() + s * c * hw, c, h, wd, k, cols.data());
    T* ys = y.ptr() + s * o * hw;
    gemm(false, false, o, hw, ckk, wv.ptr() + s * wstride, ckk, cols.data(), hw, false, ys, hw);
    if (b) {
      const auto& bv = b->value();
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t i = 0; i < hw; ++i) ys[oc * hw + i] += bv[oc];
    }
  }
  std::vector<std::size_t> ids{x.id(), w.id()};
  if (b) ids.push_back(b->id());
  const std::size_t xi = x.id(), wi = w.id(), bi = b ? b->id() : 0;
  const bool has_bias = b.has_value();
  return g.record(OpKind::conv2d, ids, std::move(y), [=](Graph<T>& gr, const Tensor<T>& gy) {
    const auto& xv = gr.value(xi);
    const auto& wv = gr.value(wi);
    const bool need_x = gr.requires_grad(xi), need_w = gr.requires_grad(wi);
    std::vector<T> cols(ckk * hw);
    std::vector<T> gcols(need_x ? ckk * hw : 0);
    for (std::size_t s = 0; s < n; ++s) {
      const T* gys = gy.ptr() + s * o * hw;
      if (need_w) {
        im2col(xv.ptr() + s * c * hw, c, h, wd, k, cols.data());
        auto& gw = gr.grad_buffer(wi);
        gemm(false, true, o, ckk, hw, gys, hw, cols.data(), hw, true, gw.ptr() + s * wstride, ckk);
      }
      if (need_x) {
        gemm(true, false, ckk, hw, o, wv.ptr() + s * wstride, ckk, gys, hw, false, gcols.data(), hw);
        auto& gx = gr.grad_buffer(xi);
        col2im_add(gcols.data(), c, h, wd, k, gx.ptr() + s * c * hw);
      }
    }
    if (has_bias && gr.requires_grad(bi)) {
      auto& gb = gr.grad_buffer(bi);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t oc = 0; oc < o; ++oc) {
          double acc = 0;
          const T* gys = gy.ptr() + (s * o + oc) * hw;
          for (std::size_t i = 0; i < hw; ++i) acc += gys[i];
          gb[oc] += static_cast<T>(acc);
        }
    }
  });
}

template <typename T>
Var<T> upsample_nearest2x(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  require_rank(xv, 4, "upsample input");
  const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> y({xv.dim(0), xv.dim(1), 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.ptr() + p * h * w;
    T* dst = y.ptr() + p * 4 * h * w;
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[yy * 2 * w + xx] = src[(yy / 2) * w + xx / 2];
  }
  const std::size_t xi = x.id();
  return g.record(OpKind::upsample2x, {xi}, std::move(y), [=](Graph<T>& gr, const Tensor<T>& gy) {
    auto& gx = gr.grad_buffer(xi);
    for (std::size_t p = 0; p < planes; ++p) {
      T* dst = gx.ptr() + p * h * w;
      const T* src = gy.ptr() + p * 4 * h * w;
      for (std::size_t yy = 0; yy < 2 * h; ++yy)
        for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[(yy / 2) * w + xx / 2] += src[yy * 2 * w + xx];
    }
  });
}

template <typename T>
Var<T> avg_pool2x(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  require_rank(xv, 4, "avg_pool input");
  const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2x needs even spatial extents, got " + shape_str(xv.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> y({xv.dim(0), xv.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.ptr() + p * h * w;
    T* dst = y.ptr() + p * oh * ow;
    for (std::size_t yy = 0; yy < oh; ++yy)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const T* q = src + 2 * yy * w + 2 * xx;
        dst[yy * ow + xx] = T(0.25) * (q[0] + q[1] + q[w] + q[w + 1]);
      }
  }
  const std::size_t xi = x.id();
  return g.record(OpKind::avg_pool2x, {xi}, std::move(y), [=](Graph<T>& gr, const Tensor<T>& gy) {
    auto& gx = gr.grad_buffer(xi);
    for (std::size_t p = 0; p < planes; ++p) {
      T* dst = gx.ptr() + p * h * w;
      const T* src = gy.ptr() + p * oh * ow;
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const T v = T(0.25) * src[yy * ow + xx];
          T* q = dst + 2 * yy * w + 2 * xx;
          q[0] += v;
          q[1] += v;
          q[w] += v;
          q[w + 1] += v;
        }
    }
  });
}

// ---- pointwise ---------------------------------------------------------------

template <typename T>
Var<T> relu(Var<T> x) {
  return unary(x, OpKind::relu, [](T v) { return v > T{0} ? v : T{0}; },
               [](T v) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  return unary(x, OpKind::leaky_relu, [slope](T v) { return v > T{0} ? v : slope * v; },
               [slope](T v) { return v > T{0} ? T{1} : slope; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  auto f = [](T v) {
    if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
    const T e = std::exp(v);
    return e / (T{1} + e);
  };
  return unary(x, OpKind::sigmoid, f, [f](T v) {
    const T s = f(v);
    return s * (T{1} - s);
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return unary(x, OpKind::tanh, [](T v) { return std::tanh(v); },
               [](T v) {
                 const T t = std::tanh(v);
                 return T{1} - t * t;
               });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(a, b, OpKind::add, [](T p, T q) { return p + q; }, [](T, T) { return T{1}; },
                [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(a, b, OpKind::sub, [](T p, T q) { return p - q; }, [](T, T) { return T{1}; },
                [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(a, b, OpKind::mul, [](T p, T q) { return p * q; }, [](T, T q) { return q; },
                [](T p, T) { return p; });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return unary(x, OpKind::scale, [factor](T v) { return factor * v; }, [factor](T) { return factor; });
}

// ---- structural ----------------------------------------------------------------

template <typename T>
Var<T> concat(Var<T> a, Var<T> b) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() < 2 || av.rank() != bv.rank() || av.dim(0) != bv.dim(0) ||
      !std::equal(av.shape().begin() + 2, av.shape().end(), bv.shape().begin() + 2)) {
    throw ShapeError("concat: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const std::size_t n = av.dim(0);
  const std::size_t ia = av.size() / n, ib = bv.size() / n;
  Shape shape = av.shape();
  shape[1] += bv.dim(1);
  Tensor<T> y(shape);
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(av.ptr() + s * ia, ia, y.ptr() + s * (ia + ib));
    std::copy_n(bv.ptr() + s * ib, ib, y.ptr() + s * (ia + ib) + ia);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return g.record(OpKind::concat, {ai, bi}, std::move(y), [=](Graph<T>& gr, const Tensor<T>& gy) {
    if (gr.requires_grad(ai)) {
      auto& ga = gr.grad_buffer(ai);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < ia; ++i) ga[s * ia + i] += gy[s * (ia + ib) + i];
    }
    if (gr.requires_grad(bi)) {
      auto& gb = gr.grad_buffer(bi);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < ib; ++i) gb[s * ib + i] += gy[s * (ia + ib) + ia + i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  auto& g = x.graph();
  Tensor<T> y = x.value().reshaped(std::move(shape));
  const std::size_t xi = x.id();
  return g.record(OpKind::reshape, {xi}, std::move(y), [xi](Graph<T>& gr, const Tensor<T>& gy) {
    auto& gx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank(av, 2, "matmul lhs");
  require_rank(bv, 2, "matmul rhs");
  if (av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: inner extents differ: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> y({m, n});
  gemm(false, false, m, n, k, av.ptr(), k, bv.ptr(), n, false, y.ptr(), n);
  const std::size_t ai = a.id(), bi = b.id();
  return g.record(OpKind::matmul, {ai, bi}, std::move(y), [=](Graph<T>& gr, const Tensor<T>& gy) {
    if (gr.requires_grad(ai)) {
      auto& ga = gr.grad_buffer(ai);
      gemm(false, true, m, k, n, gy.ptr(), n, gr.value(bi).ptr(), n, true, ga.ptr(), k);
    }
    if (gr.requires_grad(bi)) {
      auto& gb = gr.grad_buffer(bi);
      gemm(true, false, k, n, m, gr.value(ai).ptr(), k, gy.ptr(), n, true, gb.ptr(), n);
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> rows) {
  auto& g = x.graph();
  const auto& xv = x.value();
  require_rank(xv, 2, "gather_rows input");
  const std::size_t d = xv.dim(1);
  Tensor<T> y({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= xv.dim(0)) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(xv.ptr() + rows[r] * d, d, y.ptr() + r * d);
  }
  const std::size_t xi = x.id();
  return g.record(OpKind::gather_rows, {xi}, std::move(y),
                  [xi, d, rows = std::move(rows)](Graph<T>& gr, const Tensor<T>& gy) {
                    auto& gx = gr.grad_buffer(xi);
                    for (std::size_t r = 0; r < rows.size(); ++r)
                      for (std::size_t j = 0; j < d; ++j) gx[rows[r] * d + j] += gy[r * d + j];
                  });
}

template <typename T>
Var<T> scale_rows(Var<T> x, std::vector<T> factors) {
  auto& g = x.graph();
  const auto& xv = x.value();
  if (xv.rank() == 0 || xv.dim(0) != factors.size()) throw ShapeError("scale_rows: one factor per row required");
  const std::size_t inner = xv.size() / factors.size();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = factors[i / inner] * xv[i];
  const std::size_t xi = x.id();
  return g.record(OpKind::scale_rows, {xi}, std::move(y),
                  [xi, inner, factors = std::move(factors)](Graph<T>& gr, const Tensor<T>& gy) {
                    auto& gx = gr.grad_buffer(xi);
                    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factors[i / inner] * gy[i];
                  });
}

// ---- reductions / losses ----------------------------------------------------------

template <typename T>
Var<T> mean(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  double acc = 0;
  for (T v : xv.data()) acc += v;
  const std::size_t n = xv.size();
  const std::size_t xi = x.id();
  return g.record(OpKind::mean, {xi}, Tensor<T>::scalar(static_cast<T>(acc / n)),
                  [xi, n](Graph<T>& gr, const Tensor<T>& gy) {
                    auto& gx = gr.grad_buffer(xi);
                    const T v = gy[0] / static_cast<T>(n);
                    for (auto& e : gx.data()) e += v;
                  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  auto& g = x.graph();
  double acc = 0;
  for (T v : x.value().data()) acc += v;
  const std::size_t xi = x.id();
  return g.record(OpKind::sum, {xi}, Tensor<T>::scalar(static_cast<T>(acc)),
                  [xi](Graph<T>& gr, const Tensor<T>& gy) {
                    auto& gx = gr.grad_buffer(xi);
                    for (auto& e : gx.data()) e += gy[0];
                  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  require_rank(xv, 4, "global_avg_pool input");
  const std::size_t planes = xv.dim(0) * xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor<T> y({xv.dim(0), xv.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += xv[p * hw + i];
    y[p] = static_cast<T>(acc / hw);
  }
  const std::size_t xi = x.id();
  return g.record(OpKind::global_avg_pool, {xi}, std::move(y), [=](Graph<T>& gr, const Tensor<T>& gy) {
    auto& gx = gr.grad_buffer(xi);
    for (std::size_t p = 0; p < planes; ++p) {
      const T v = gy[p] / static_cast<T>(hw);
      for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += v;
    }
  });
}

template <typename T>
Var<T> sq_diff(Var<T> a, Var<T> b, Reduction reduction) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape() || av.rank() == 0) {
    throw ShapeError("sq_diff: shapes differ: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  const std::size_t n = av.dim(0), inner = av.size() / n;
  const double norm = reduction == Reduction::mean ? 1.0 / static_cast<double>(inner) : 1.0;
  Tensor<T> y({n});
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0;
    for (std::size_t i = 0; i < inner; ++i) {
      const double d = static_cast<double>(av[s * inner + i]) - static_cast<double>(bv[s * inner + i]);
      acc += d * d;
    }
    y[s] = static_cast<T>(acc * norm);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return g.record(OpKind::sq_diff, {ai, bi}, std::move(y), [=](Graph<T>& gr, const Tensor<T>& gy) {
    const auto& av = gr.value(ai);
    const auto& bv = gr.value(bi);
    const bool need_a = gr.requires_grad(ai), need_b = gr.requires_grad(bi);
    Tensor<T>* ga = need_a ? &gr.grad_buffer(ai) : nullptr;
    Tensor<T>* gb = need_b ? &gr.grad_buffer(bi) : nullptr;
    for (std::size_t s = 0; s < n; ++s) {
      const T f = static_cast<T>(2.0 * norm) * gy[s];
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t j = s * inner + i;
        const T d = f * (av[j] - bv[j]);
        if (ga) (*ga)[j] += d;
        if (gb) (*gb)[j] -= d;
      }
    }
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::vector<std::size_t> labels) {
  auto& g = logits.graph();
  const auto& lv = logits.value();
  require_rank(lv, 2, "softmax_cross_entropy logits");
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy: one label per row required");
  Tensor<T> y({n});
  Tensor<T> probs({n, k});
  for (std::size_t s = 0; s < n; ++s) {
    if (labels[s] >= k) throw ShapeError("softmax_cross_entropy: label out of range");
    const T* row = lv.ptr() + s * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) probs[s * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / z);
    y[s] = static_cast<T>(std::log(z) + static_cast<double>(mx) - static_cast<double>(row[labels[s]]));
  }
  const std::size_t li = logits.id();
  return g.record(OpKind::softmax_xent, {li}, std::move(y),
                  [=, probs = std::move(probs), labels = std::move(labels)](Graph<T>& gr, const Tensor<T>& gy) {
                    auto& gl = gr.grad_buffer(li);
                    for (std::size_t s = 0; s < n; ++s)
                      for (std::size_t j = 0; j < k; ++j) {
                        const T target = j == labels[s] ? T{1} : T{0};
                        gl[s * k + j] += gy[s] * (probs[s * k + j] - target);
                      }
                  });
}

template <typename T>
Var<T> abs_error(Var<T> a, Var<T> b) {
  auto sign = [](T d) { return d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0}); };
  return binary(a, b, OpKind::abs_error, [](T p, T q) { return std::abs(p - q); },
                [sign](T p, T q) { return sign(p - q); }, [sign](T p, T q) { return -sign(p - q); });
}

// ---- instantiation --------------------------------------------------------------

#define PARAMSHIFT_INSTANTIATE(T)                                                       \
  template class Graph<T>;                                                              \
  template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                        \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>);                        \
  template Var<T> upsample_nearest2x(Var<T>);                                           \
  template Var<T> avg_pool2x(Var<T>);                                                   \
  template Var<T> relu(Var<T>);                                                         \
  template Var<T> leaky_relu(Var<T>, T);                                                \
  template Var<T> sigmoid(Var<T>);                                                      \
  template Var<T> tanh(Var<T>);                                                         \
  template Var<T> add(Var<T>, Var<T>);                                                  \
  template Var<T> sub(Var<T>, Var<T>);                                                  \
  template Var<T> mul(Var<T>, Var<T>);                                                  \
  template Var<T> scale(Var<T>, T);                                                     \
  template Var<T> concat(Var<T>, Var<T>);                                               \
  template Var<T> reshape(Var<T>, Shape);                                               \
  template Var<T> matmul(Var<T>, Var<T>);                                               \
  template Var<T> gather_rows(Var<T>, std::vector<std::size_t>);                        \
  template Var<T> scale_rows(Var<T>, std::vector<T>);                                   \
  template Var<T> mean(Var<T>);                                                         \
  template Var<T> sum(Var<T>);                                                          \
  template Var<T> global_avg_pool(Var<T>);                                              \
  template Var<T> sq_diff(Var<T>, Var<T>, Reduction);                                   \
  template Var<T> softmax_cross_entropy(Var<T>, std::vector<std::size_t>);              \
  template Var<T> abs_error(Var<T>, Var<T>);

PARAMSHIFT_INSTANTIATE(float)
PARAMSHIFT_INSTANTIATE(double)

#undef PARAMSHIFT_INSTANTIATE

}  // namespace paramshift
