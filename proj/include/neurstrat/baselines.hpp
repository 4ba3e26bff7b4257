#pragma once

// Comparison methods: Latin hypercube sampling and active-subspace
// stratification through a Gaussian transport map.

#include <cstddef>
#include <span>
#include <vector>

#include "neurstrat/distributions.hpp"
#include "neurstrat/estimators.hpp"
#include "neurstrat/models.hpp"
#include "neurstrat/neuram.hpp"
#include "neurstrat/rng.hpp"
#include "neurstrat/stratify.hpp"

namespace neurstrat {

// N x d points in (0, 1)^d; column k times N, floored, is a permutation of 0..N-1.
std::vector<double> lhs_sample(std::size_t N, std::size_t d, Rng& rng);

EstimateResult lhs_mc_estimate(const Model& model, const ProductDistribution& dist, std::size_t N, Rng& rng);

// x_i = quantile_i(Phi(z_i)).
class GaussianMap {
 public:
  explicit GaussianMap(ProductDistribution dist);

  std::size_t dim() const { return dist_.dim(); }
  const ProductDistribution& distribution() const { return dist_; }

  void forward(std::span<const double> z, std::span<double> x) const;
  void inverse(std::span<const double> x, std::span<double> z) const;
  std::vector<double> forward(std::span<const double> z) const;
  std::vector<double> inverse(std::span<const double> x) const;
  // dx_i / dz_i at z.
  void jacobian_diagonal(std::span<const double> z, std::span<double> out) const;

 private:
  ProductDistribution dist_;
};

struct AsDirection {
  std::vector<double> v;            // unit vector
  std::vector<double> eigenvalues;  // of B, descending
  std::size_t n_samples = 0;
};

// Eigen-decomposition of a symmetric d x d matrix (row-major) by cyclic
// Jacobi rotations. Eigenvalues descending; eigenvectors are the columns
// of the returned row-major matrix.
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<double> vectors;
};
SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t d);

// B = E[grad Q~(Z) grad Q~(Z)^T], Q~ = Q o G, Z ~ N(0, I), by Monte Carlo.
// Uses the model's analytic gradient when present, otherwise central
// differences in z with step fd_step.
AsDirection as_direction(const Model& model, const GaussianMap& gmap, std::size_t n_samples, double fd_step, Rng& rng);

// u = Phi(v^T G^-1(x)).
class AsMap final : public QuantileMap {
 public:
  AsMap(AsDirection direction, GaussianMap gmap);

  std::size_t dim() const override { return gmap_.dim(); }
  void quantiles(std::span<const double> x, std::size_t rows, std::span<double> u) const override;
  const AsDirection& direction() const { return dir_; }

 private:
  AsDirection dir_;
  GaussianMap gmap_;
};

std::size_t as_stratum_index(const AsMap& map, const Stratification& strat, std::span<const double> x);

}  // namespace neurstrat
