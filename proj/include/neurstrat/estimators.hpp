#pragma once

// Monte Carlo, stratified, multifidelity and stratified multifidelity
// estimators of E[Q(X)].

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurstrat/distributions.hpp"
#include "neurstrat/models.hpp"
#include "neurstrat/neuram.hpp"
#include "neurstrat/rng.hpp"
#include "neurstrat/stratify.hpp"

namespace neurstrat {

struct Allocation {
  std::vector<std::size_t> counts;
  std::size_t total() const;
};

// Largest-remainder rounding of N * weights / sum(weights), then every
// count lifted to 2 by taking from the currently largest stratum.
Allocation allocate_by_weights(std::span<const double> weights, std::size_t N);
Allocation proportional_allocation(const Stratification& strat, std::size_t N);
// Weights width * sqrt(variance); falls back to proportional when all
// variances vanish.
Allocation optimal_allocation_smc(const Stratification& strat, const StratumStats& stats, std::size_t N);

struct StratumBreakdown {
  double width = 1.0;
  double mean = 0.0;       // HF sample mean
  double variance = 0.0;   // HF sample variance
  std::size_t hf_count = 0;
  std::size_t lf_count = 0;
  // Multifidelity only.
  double lf_mean_paired = 0.0;  // LF mean over the HF inputs
  double lf_mean_all = 0.0;     // LF mean over all LF inputs
  double lf_variance = 0.0;
  double covariance = 0.0;
  double alpha = 0.0;
  double rho = 0.0;
  double estimate = 0.0;           // stratum-level estimate
  double variance_estimate = 0.0;  // of the stratum-level estimate
};

struct EstimateResult {
  std::string estimator;
  double estimate = 0.0;
  double variance_estimate = 0.0;
  std::vector<StratumBreakdown> strata;
  std::size_t hf_evals = 0;
  std::size_t lf_evals = 0;
  double cost_ratio = 0.0;
  std::uint64_t seed = 0;

  double hf_equivalent_cost() const { return static_cast<double>(hf_evals) + cost_ratio * static_cast<double>(lf_evals); }
};

EstimateResult mc_estimate(const Model& model, const ProductDistribution& dist, std::size_t N, Rng& rng);

EstimateResult smc_estimate(const Model& model, const ProductDistribution& dist, const QuantileMap& map,
                            const Stratification& strat, const Allocation& alloc, Rng& rng);

struct MfBudget {
  double cost_ratio = 0.0;
  double budget = 0.0;  // in HF-equivalent evaluations
  double beta = 0.0;
  std::size_t n_hf = 0;
  std::size_t n_lf = 0;
  bool not_beneficial = false;  // rho^2 <= 4w / (1 + w)^2

  // LF evaluations are skipped when n_lf == n_hf.
  bool uses_lf() const { return n_lf > n_hf; }
  double cost() const { return static_cast<double>(n_hf) + (uses_lf() ? cost_ratio * static_cast<double>(n_lf) : 0.0); }
};

MfBudget mfmc_allocation(double rho, double w, double N);

// Fixed coefficient, or estimated from the HF/LF pairs of the run.
struct AlphaSource {
  std::optional<double> value;

  static AlphaSource fixed(double alpha) { return {alpha}; }
  static AlphaSource from_samples() { return {}; }
};

// The first n_hf LF inputs coincide with the HF inputs.
EstimateResult mfmc_estimate(const Model& hf, const Model& lf, const ProductDistribution& dist, const MfBudget& budget,
                             AlphaSource alpha, Rng& rng);

// Splits N across strata (optimal: width * sqrt(variance) * (sqrt(1 - rho^2)
// + sqrt(w rho^2)); proportional: width), each at least 2(1 + w), then
// splits each stratum budget into HF and LF counts.
std::vector<MfBudget> smfmc_allocation(const Stratification& strat, const StratumStats& stats, double w, double N,
                                       AllocationKind kind);

EstimateResult smfmc_estimate(const Model& hf, const Model& lf, const ProductDistribution& dist, const QuantileMap& map,
                              const Stratification& strat, std::span<const MfBudget> budgets,
                              std::span<const double> alphas, Rng& rng);

struct TheoreticalVariances {
  double alloc1 = 0.0;
  double alloc2 = 0.0;
  double mc = 0.0;
  std::optional<double> mf_alloc1;
  std::optional<double> mf_alloc2;
  std::optional<double> mfmc;
};

// Closed-form variances from stratum statistics. Without `total_variance`
// the MC variance is assembled from the stratum means and variances.
TheoreticalVariances theoretical_variances(const StratumStats& stats, double N,
                                           std::optional<double> total_variance = std::nullopt,
                                           std::optional<double> w = std::nullopt,
                                           std::optional<double> global_rho = std::nullopt);

}  // namespace neurstrat
