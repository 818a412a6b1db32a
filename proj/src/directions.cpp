#include "paramshift/directions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace paramshift {

const char* parametrization_name(Parametrization p) {
  switch (p) {
    case Parametrization::raw_kernel: return "raw_kernel";
    case Parametrization::singular_values: return "singular_values";
    case Parametrization::eigen_coeffs: return "eigen_coeffs";
  }
  return "?";
}

Parametrization parse_parametrization(const std::string& s) {
  if (s == "raw_kernel") return Parametrization::raw_kernel;
  if (s == "singular_values") return Parametrization::singular_values;
  if (s == "eigen_coeffs") return Parametrization::eigen_coeffs;
  throw FormatError("unknown parametrization '" + s + "'");
}

Vec DirectionSet::coefficient(std::size_t k) const {
  if (k >= count()) {
    throw ValueError("direction index " + std::to_string(k) + " out of range (K = " + std::to_string(count()) + ")");
  }
  const std::size_t n = coord_dim();
  return Vec(coeffs.ptr() + k * n, coeffs.ptr() + (k + 1) * n);
}

Vec DirectionSet::raw_direction(std::size_t k) const {
  Vec c = coefficient(k);
  if (kind == Parametrization::raw_kernel) return c;
  const std::size_t n = coord_dim(), d = raw_dim();
  Vec out(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (c[j] == 0.0) continue;
    const float* row = basis.ptr() + j * d;
    for (std::size_t i = 0; i < d; ++i) out[i] += c[j] * static_cast<double>(row[i]);
  }
  return out;
}

Tensor<float> DirectionSet::raw_shift(std::size_t k, double t) const {
  Vec v = raw_direction(k);
  Tensor<float> out({v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(t * v[i]);
  return out;
}

Tensor<float> DirectionSet::expansion() const {
  if (kind != Parametrization::raw_kernel) return basis;
  const std::size_t n = coord_dim();
  Tensor<float> eye({n, n});
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0f;
  return eye;
}

void DirectionSet::validate() const {
  if (coeffs.rank() != 2) throw ValueError("direction coefficients must be a (K, n) matrix");
  const std::size_t k = count(), n = coord_dim();
  if (k > n) throw ValueError("K = " + std::to_string(k) + " exceeds the parametrization dimension " + std::to_string(n));
  if (kind != Parametrization::raw_kernel && (basis.rank() != 2 || basis.dim(0) != n)) {
    throw ValueError("direction basis must have one row per coordinate");
  }
  if (!info.empty() && info.size() != k) throw ValueError("direction metadata count differs from K");
  if (!(T > 0) || !std::isfinite(T)) throw ValueError("magnitude range T must be positive");
  for (std::size_t i = 0; i < k; ++i) {
    const double len = norm(coefficient(i));
    if (std::abs(len - 1.0) > 1e-6) {
      throw ValueError("direction " + std::to_string(i) + " has norm " + std::to_string(len) + ", expected 1");
    }
  }
  if (kind == Parametrization::eigen_coeffs) {
    std::vector<Vec> rows;
    const std::size_t d = basis.dim(1);
    for (std::size_t j = 0; j < n; ++j) rows.emplace_back(basis.ptr() + j * d, basis.ptr() + (j + 1) * d);
    if (orthonormality_error(rows) > 1e-6) throw ValueError("stored eigenvectors are not orthonormal");
  }
}

void DirectionSet::renormalize() {
  const std::size_t n = coord_dim();
  for (std::size_t i = 0; i < count(); ++i) {
    Vec c = normalized(coefficient(i));
    for (std::size_t j = 0; j < n; ++j) coeffs[i * n + j] = static_cast<float>(c[j]);
  }
}

SingularBasis singular_basis(const GeneratorModel& model, int layer) {
  const Tensor<float> flat = flatten_kernel(model, layer);
  const SvdFactors f = svd_jacobi(Matrix::from_tensor(flat));
  const std::size_t m = flat.dim(0), cols = flat.dim(1), r = f.S.size();
  SingularBasis out{Tensor<float>({r, m * cols}), f.S};
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < cols; ++b)
        out.basis[j * m * cols + a * cols + b] = static_cast<float>(f.U(a, j) * f.V(j, b));
  return out;
}

GeneratorModel apply_direction(const GeneratorModel& model, const DirectionSet& dirs, std::size_t k, double t) {
  if (dirs.layer < 0 || dirs.layer >= GeneratorModel::kNumLayers) throw ValueError("direction set targets no generator layer");
  if (dirs.raw_dim() != GeneratorModel::weight_size(dirs.layer)) {
    throw ValueError("direction set dimension " + std::to_string(dirs.raw_dim()) + " does not match layer " +
                     layer_name(dirs.layer));
  }
  if (!std::isfinite(t)) throw ValueError("shift magnitude must be finite");
  const Vec xi = dirs.raw_direction(k);
  GeneratorModel shifted = model;
  auto& w = shifted.weight(dirs.layer);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(static_cast<double>(w[i]) + t * xi[i]);
  if (!w.all_finite()) throw NumericError("shifted weights are not finite");
  return shifted;
}

void sort_by_score(DirectionSet& dirs) {
  const std::size_t k = dirs.count(), n = dirs.coord_dim();
  if (dirs.info.size() != k) return;
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dirs.info[a].score > dirs.info[b].score; });
  Tensor<float> coeffs({k, n});
  std::vector<DirectionInfo> info;
  for (std::size_t i = 0; i < k; ++i) {
    std::copy_n(dirs.coeffs.ptr() + order[i] * n, n, coeffs.ptr() + i * n);
    info.push_back(dirs.info[order[i]]);
  }
  dirs.coeffs = std::move(coeffs);
  dirs.info = std::move(info);
}

}  // namespace paramshift
