#pragma once

#include <string>
#include <vector>

#include "paramshift/generator.hpp"
#include "paramshift/linalg.hpp"
#include "paramshift/tensor.hpp"

namespace paramshift {

enum class Parametrization { raw_kernel, singular_values, eigen_coeffs };

const char* parametrization_name(Parametrization p);
Parametrization parse_parametrization(const std::string& s);

struct DirectionInfo {
  std::string label;
  std::string method;
  double score = 0.0;
  double eigenvalue = 0.0;
};

/// K unit directions over a coordinate space of dimension n, mapped to the
/// raw parameter block (dimension D) of one layer.
///
/// coeffs is (K, n). basis is (n, D) and expands coordinates into raw
/// space: for singular_values row j is vec(u_j v_j^T) of the unshifted
/// kernel's SVD, for eigen_coeffs row j is the j-th eigenvector, and for
/// raw_kernel it is empty (identity).
struct DirectionSet {
  int layer = 2;
  Parametrization kind = Parametrization::raw_kernel;
  Tensor<float> coeffs{Shape{0, 0}};
  Tensor<float> basis{Shape{0, 0}};
  /// Singular values of the unshifted flattened kernel (singular_values only).
  std::vector<double> sigma;
  double T = 1.0;
  std::vector<DirectionInfo> info;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t count() const { return coeffs.dim(0); }
  std::size_t coord_dim() const { return coeffs.dim(1); }
  std::size_t raw_dim() const { return kind == Parametrization::raw_kernel ? coord_dim() : basis.dim(1); }

  Vec coefficient(std::size_t k) const;
  /// xi_k expanded into the raw parameter block.
  Vec raw_direction(std::size_t k) const;
  /// t * raw_direction(k) as a flat float shift.
  Tensor<float> raw_shift(std::size_t k, double t) const;
  /// (n, D) expansion matrix, identity for raw_kernel.
  Tensor<float> expansion() const;

  /// Checks shapes, unit norms (1e-6), basis orthonormality for
  /// eigen_coeffs (1e-6) and K <= n. Throws ValueError.
  void validate() const;
  /// Rescales every coefficient row to unit length.
  void renormalize();
};

/// Rows vec(u_j v_j^T) of the flattened conv kernel's SVD, plus sigma.
struct SingularBasis {
  Tensor<float> basis;
  std::vector<double> sigma;
};
SingularBasis singular_basis(const GeneratorModel& model, int layer);

/// Returns a copy of `model` with W <- W + t * xi_k in raw space. The delta
/// is formed in double; t = 0 returns parameters identical to the input.
GeneratorModel apply_direction(const GeneratorModel& model, const DirectionSet& dirs, std::size_t k, double t);

/// Ordering of directions by descending `score` (stable), applied in place.
void sort_by_score(DirectionSet& dirs);

}  // namespace paramshift
