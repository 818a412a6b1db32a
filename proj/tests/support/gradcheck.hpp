#pragma once

// Finite-difference gradient checks for every autodiff primitive.

#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "paramshift/autodiff.hpp"

namespace gradcheck {

using paramshift::Graph;
using paramshift::Rng;
using paramshift::Shape;
using paramshift::Tensor;
using paramshift::Var;

using Builder = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

struct Instance {
  std::vector<Tensor<double>> inputs;
  Builder build;
};

struct OpCase {
  std::string name;
  std::function<Instance(Rng&)> make;
};

/// Scalar objective sum(build(inputs) * weights) with fixed random weights.
inline double evaluate(const Instance& inst, const std::vector<Tensor<double>>& inputs, const Tensor<double>& weights) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  const Var<double> out = inst.build(g, vars);
  const Var<double> w = g.constant(weights.reshaped(out.value().shape()));
  return paramshift::sum(paramshift::mul(out, w)).value().item();
}

/// Largest relative error between analytic and central-difference gradients
/// over all inputs of one instance.
inline double check(const Instance& inst, Rng& rng, double h = 1e-6) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (const auto& t : inst.inputs) vars.push_back(g.param(t));
  const Var<double> out = inst.build(g, vars);
  const Shape out_shape = out.value().shape();
  const Tensor<double> weights = oracle::random_tensor(rng, out_shape);
  const Var<double> w = g.constant(weights);
  g.backward(paramshift::sum(paramshift::mul(out, w)));

  double worst = 0.0;
  for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
    const std::vector<double> analytic = vars[i].grad().vec();
    auto f = [&](const std::vector<double>& x) {
      std::vector<Tensor<double>> in = inst.inputs;
      in[i] = Tensor<double>(inst.inputs[i].shape(), x);
      return evaluate(inst, in, weights);
    };
    const std::vector<double> numeric = oracle::numeric_gradient(f, inst.inputs[i].vec(), h);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return worst;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline std::vector<OpCase> catalog() {
  using namespace paramshift;
  using oracle::random_away_from_zero;
  using oracle::random_tensor;
  std::vector<OpCase> ops;
  ops.push_back({"linear", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 4), i = pick(r, 1, 5), o = pick(r, 1, 5);
                   return Instance{{random_tensor(r, {n, i}), random_tensor(r, {o, i}), random_tensor(r, {o})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return linear<double>(v[0], v[1], v[2]);
                                   }};
                 }});
  ops.push_back({"linear_per_sample", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 4), i = pick(r, 1, 5), o = pick(r, 1, 5);
                   return Instance{{random_tensor(r, {n, i}), random_tensor(r, {n, o, i}), random_tensor(r, {n, o})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return linear<double>(v[0], v[1], v[2]);
                                   }};
                 }});
  ops.push_back({"conv2d", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 2), c = pick(r, 1, 3), o = pick(r, 1, 3), s = pick(r, 2, 5);
                   const std::size_t k = r.below(2) ? 3 : 1;
                   return Instance{{random_tensor(r, {n, c, s, s}), random_tensor(r, {o, c, k, k}), random_tensor(r, {o})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return conv2d<double>(v[0], v[1], v[2]);
                                   }};
                 }});
  ops.push_back({"conv2d_per_sample", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 3), c = pick(r, 1, 2), o = pick(r, 1, 2), s = pick(r, 2, 4);
                   return Instance{{random_tensor(r, {n, c, s, s}), random_tensor(r, {n, o, c, 3, 3})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return conv2d<double>(v[0], v[1]);
                                   }};
                 }});
  ops.push_back({"upsample_nearest2x", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 2), c = pick(r, 1, 3), h = pick(r, 1, 4), w = pick(r, 1, 4);
                   return Instance{{random_tensor(r, {n, c, h, w})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return upsample_nearest2x(v[0]);
                                   }};
                 }});
  ops.push_back({"avg_pool2x", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 2), c = pick(r, 1, 3), h = 2 * pick(r, 1, 3), w = 2 * pick(r, 1, 3);
                   return Instance{{random_tensor(r, {n, c, h, w})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) { return avg_pool2x(v[0]); }};
                 }});
  auto unary = [&](const std::string& name, std::function<Var<double>(Var<double>)> f) {
    ops.push_back({name, [f](Rng& r) {
                     const std::size_t n = pick(r, 1, 4), m = pick(r, 1, 6);
                     return Instance{{random_away_from_zero(r, {n, m})},
                                     [f](Graph<double>&, const std::vector<Var<double>>& v) { return f(v[0]); }};
                   }});
  };
  unary("relu", [](Var<double> x) { return relu(x); });
  unary("leaky_relu", [](Var<double> x) { return leaky_relu(x, 0.2); });
  unary("sigmoid", [](Var<double> x) { return sigmoid(x); });
  unary("tanh", [](Var<double> x) { return paramshift::tanh(x); });
  unary("scale", [](Var<double> x) { return scale(x, -1.7); });
  unary("reshape", [](Var<double> x) { return reshape(x, Shape{x.value().size()}); });
  unary("mean", [](Var<double> x) { return mean(x); });
  unary("sum", [](Var<double> x) { return sum(x); });
  auto binary = [&](const std::string& name, std::function<Var<double>(Var<double>, Var<double>)> f, bool away) {
    ops.push_back({name, [f, away](Rng& r) {
                     const std::size_t n = pick(r, 1, 4), m = pick(r, 1, 6);
                     const bool broadcast = r.below(2) == 1;
                     Tensor<double> a = random_tensor(r, {n, m});
                     Tensor<double> b = broadcast ? random_tensor(r, {m}) : random_tensor(r, {n, m});
                     if (away) {
                       for (std::size_t i = 0; i < a.size(); ++i) {
                         const double d = a[i] - b[broadcast ? i % m : i];
                         if (std::abs(d) < 0.05) a[i] += d >= 0 ? 0.05 : -0.05;
                       }
                     }
                     return Instance{{a, b}, [f](Graph<double>&, const std::vector<Var<double>>& v) {
                                       return f(v[0], v[1]);
                                     }};
                   }});
  };
  binary("add", [](Var<double> a, Var<double> b) { return add(a, b); }, false);
  binary("sub", [](Var<double> a, Var<double> b) { return sub(a, b); }, false);
  binary("mul", [](Var<double> a, Var<double> b) { return mul(a, b); }, false);
  ops.push_back({"abs_error", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 5);
                   Tensor<double> a = random_tensor(r, {n}), d = random_away_from_zero(r, {n});
                   Tensor<double> b(a.shape());
                   for (std::size_t i = 0; i < n; ++i) b[i] = a[i] - d[i];
                   return Instance{{a, b}, [](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return abs_error(v[0], v[1]);
                                   }};
                 }});
  ops.push_back({"concat", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 3), ca = pick(r, 1, 3), cb = pick(r, 1, 3), s = pick(r, 1, 3);
                   const bool image = r.below(2) == 1;
                   Shape sa = image ? Shape{n, ca, s, s} : Shape{n, ca};
                   Shape sb = image ? Shape{n, cb, s, s} : Shape{n, cb};
                   return Instance{{random_tensor(r, sa), random_tensor(r, sb)},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) { return concat(v[0], v[1]); }};
                 }});
  ops.push_back({"matmul", [](Rng& r) {
                   const std::size_t m = pick(r, 1, 4), k = pick(r, 1, 5), n = pick(r, 1, 4);
                   return Instance{{random_tensor(r, {m, k}), random_tensor(r, {k, n})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) { return matmul(v[0], v[1]); }};
                 }});
  ops.push_back({"gather_rows", [](Rng& r) {
                   const std::size_t m = pick(r, 1, 4), n = pick(r, 1, 4), count = pick(r, 1, 6);
                   std::vector<std::size_t> rows(count);
                   for (auto& i : rows) i = r.below(m);
                   return Instance{{random_tensor(r, {m, n})},
                                   [rows](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return gather_rows(v[0], rows);
                                   }};
                 }});
  ops.push_back({"scale_rows", [](Rng& r) {
                   const std::size_t m = pick(r, 1, 4), n = pick(r, 1, 4);
                   std::vector<double> f(m);
                   for (auto& x : f) x = r.normal();
                   return Instance{{random_tensor(r, {m, n})},
                                   [f](Graph<double>&, const std::vector<Var<double>>& v) { return scale_rows(v[0], f); }};
                 }});
  ops.push_back({"global_avg_pool", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 3), c = pick(r, 1, 3), s = pick(r, 1, 4);
                   return Instance{{random_tensor(r, {n, c, s, s})},
                                   [](Graph<double>&, const std::vector<Var<double>>& v) { return global_avg_pool(v[0]); }};
                 }});
  ops.push_back({"sq_diff", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 3), c = pick(r, 1, 2), s = pick(r, 1, 4);
                   const bool use_sum = r.below(2) == 1;
                   return Instance{{random_tensor(r, {n, c, s, s}), random_tensor(r, {n, c, s, s})},
                                   [use_sum](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return sq_diff(v[0], v[1], use_sum ? Reduction::sum : Reduction::mean);
                                   }};
                 }});
  ops.push_back({"softmax_cross_entropy", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 5), k = pick(r, 2, 6);
                   std::vector<std::size_t> labels(n);
                   for (auto& l : labels) l = r.below(k);
                   return Instance{{random_tensor(r, {n, k}, 2.0)},
                                   [labels](Graph<double>&, const std::vector<Var<double>>& v) {
                                     return softmax_cross_entropy(v[0], labels);
                                   }};
                 }});
  return ops;
}

}  // namespace gradcheck
