#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "neurstrat/distributions.hpp"
#include "neurstrat/neuram.hpp"
#include "neurstrat/rng.hpp"

namespace neurstrat {

inline constexpr double kMinStratumWidth = 1e-3;

// Breakpoints 0 = a_0 < a_1 < ... < a_S = 1. Stratum s (zero-based) is
// [a_s, a_{s+1}), the last one closed at 1.
struct Stratification {
  std::vector<double> breakpoints{0.0, 1.0};

  // Validates ordering, endpoints and the minimum width.
  static Stratification from_breakpoints(std::vector<double> breakpoints);

  std::size_t size() const { return breakpoints.size() - 1; }
  double lower(std::size_t s) const { return breakpoints[s]; }
  double upper(std::size_t s) const { return breakpoints[s + 1]; }
  double width(std::size_t s) const { return breakpoints[s + 1] - breakpoints[s]; }
  std::vector<double> widths() const;
  bool operator==(const Stratification&) const = default;
};

Stratification uniform_breakpoints(std::size_t strata);

// Zero-based stratum containing u; throws InvalidArgument outside [0, 1].
std::size_t stratum_index(const Stratification& strat, double u);

// One draw from mu restricted to stratum s by plain rejection, capped at
// ceil(100 / width) proposals.
std::vector<double> sample_in_stratum(const ProductDistribution& dist, const QuantileMap& map,
                                      const Stratification& strat, std::size_t s, Rng& rng);

// Conditional draws for every stratum at once. Proposals x ~ mu are drawn
// in order and each is kept if its stratum still needs samples, so every
// bucket holds iid draws from mu restricted to its stratum. With a single
// stratum the kept inputs are exactly the first counts[0] proposals.
struct StrataDraws {
  std::vector<std::vector<double>> inputs;     // per stratum, rows x dim
  std::vector<std::vector<double>> quantiles;  // per stratum
  std::vector<std::vector<double>> surrogate;  // per stratum, only when requested
  std::size_t proposals = 0;
};

StrataDraws fill_strata(const ProductDistribution& dist, const QuantileMap& map, const Stratification& strat,
                        std::span<const std::size_t> counts, Rng& rng, bool with_surrogate = false);

struct StratumStats {
  std::vector<double> widths;
  std::vector<double> means;
  std::vector<double> variances;
  std::vector<std::size_t> counts;
  // Multifidelity pilot quantities, empty in single-fidelity mode.
  std::vector<double> rho;
  std::vector<double> alpha;

  std::size_t size() const { return widths.size(); }
  bool has_multifidelity() const { return !rho.empty(); }
};

// Means and variances of the surrogate on round(n_cheap * width) conditional
// draws per stratum. No model evaluations.
StratumStats stratum_stats_surrogate(const NeuramMap& map, const ProductDistribution& dist,
                                     const Stratification& strat, std::size_t n_cheap, Rng& rng);

// Paired HF/LF values at pilot points with known latent quantiles.
struct MfPilot {
  std::vector<double> quantiles;
  std::vector<double> hf;
  std::vector<double> lf;

  std::size_t size() const { return hf.size(); }
};

struct PairMoments {
  std::size_t n = 0;
  double mean_hf = 0.0;
  double mean_lf = 0.0;
  double var_hf = 0.0;
  double var_lf = 0.0;
  double cov = 0.0;

  double rho() const;
  double alpha() const;
};

// Pilot points with quantile in [lo, hi] (closed at hi only when hi == 1).
PairMoments pilot_moments(const MfPilot& pilot, double lo, double hi);

// Fills rho and alpha per stratum from the pilot. Strata with fewer than
// three pilot points fall back to the pooled pilot values.
void attach_pilot(StratumStats& stats, const Stratification& strat, const MfPilot& pilot);

// Multifidelity variance factor (sqrt(1 - rho^2) + sqrt(w rho^2))^2.
double mf_variance_factor(double rho, double w);

// Surrogate as a function of the latent quantile, g(u) = S(F^-1(u)),
// sampled at one jittered point per cell of a uniform grid on [0, 1] and
// treated as piecewise constant on the cells. Interval moments are then
// exact integrals, so splitting an interval never increases the summed
// within-interval variance.
class LatentProfile {
 public:
  LatentProfile(const NeuramMap& map, std::size_t cells, Rng& rng);
  explicit LatentProfile(std::vector<double> cell_values);

  std::size_t cells() const { return values_.size(); }
  // Mean and variance of g(U) for U uniform on [lo, hi].
  double mean(double lo, double hi) const;
  double variance(double lo, double hi) const;

 private:
  std::vector<double> values_;
  double shift_ = 0.0;
  std::vector<double> p1_;  // prefix integrals of g - shift
  std::vector<double> p2_;  // prefix integrals of (g - shift)^2

  double integral(const std::vector<double>& prefix, double t, bool squared) const;
};

enum class AllocationKind { Optimal, Proportional };
enum class SplitRule { Midpoint, Optimal };

std::string to_string(AllocationKind kind);
std::string to_string(SplitRule rule);
AllocationKind parse_allocation_kind(const std::string& text);
SplitRule parse_split_rule(const std::string& text);

// argmin over a in [lo + min_width, hi - min_width] of
// (a - lo) v([lo, a]) + (hi - a) v([a, hi]), v = sqrt(variance) or variance.
double optimal_split(const LatentProfile& profile, double lo, double hi, AllocationKind kind);
double split_objective(const LatentProfile& profile, double lo, double a, double hi, AllocationKind kind);

struct HeuristicOptions {
  std::size_t target_strata = 1;
  AllocationKind allocation = AllocationKind::Optimal;
  SplitRule split = SplitRule::Midpoint;
  double cost_ratio = 0.01;         // used only with a pilot
  const MfPilot* pilot = nullptr;   // enables the multifidelity weighting
};

struct HeuristicResult {
  Stratification strat;
  // Sum of width * variance and sum of width * sqrt(variance) over strata,
  // recorded before the first insertion and after each one.
  std::vector<double> proportional_objective;
  std::vector<double> optimal_objective;
  std::size_t achieved_strata = 1;
};

HeuristicResult heuristic_refine(const LatentProfile& profile, const HeuristicOptions& options);

}  // namespace neurstrat
