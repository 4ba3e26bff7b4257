#include "neurstrat/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "neurstrat/error.hpp"
#include "neurstrat/math.hpp"

namespace neurstrat {

std::size_t Allocation::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Allocation allocate_by_weights(std::span<const double> weights, std::size_t N) {
  const std::size_t S = weights.size();
  if (S == 0) throw Error(ErrorKind::InvalidArgument, "allocation over zero strata");
  if (N < 2 * S) {
    std::ostringstream msg;
    msg << "budget " << N << " cannot give 2 samples to each of " << S << " strata";
    throw Error(ErrorKind::InfeasibleBudget, msg.str());
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::InvalidArgument, "allocation weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::InvalidArgument, "allocation weights sum to zero");

  Allocation a;
  a.counts.resize(S);
  std::vector<double> frac(S);
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < S; ++s) {
    const double target = static_cast<double>(N) * weights[s] / total;
    a.counts[s] = static_cast<std::size_t>(std::floor(target));
    frac[s] = target - std::floor(target);
    assigned += a.counts[s];
  }
  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });
  for (std::size_t k = 0; assigned < N; k = (k + 1) % S, ++assigned) ++a.counts[order[k]];
  while (assigned > N) {
    // Only reachable through floating-point excess in the floors.
    const auto it = std::max_element(a.counts.begin(), a.counts.end());
    --*it;
    --assigned;
  }

  for (std::size_t s = 0; s < S; ++s) {
    while (a.counts[s] < 2) {
      std::size_t donor = S;
      for (std::size_t r = 0; r < S; ++r)
        if (a.counts[r] > 2 && (donor == S || a.counts[r] > a.counts[donor])) donor = r;
      --a.counts[donor];
      ++a.counts[s];
    }
  }
  return a;
}

Allocation proportional_allocation(const Stratification& strat, std::size_t N) {
  return allocate_by_weights(strat.widths(), N);
}

Allocation optimal_allocation_smc(const Stratification& strat, const StratumStats& stats, std::size_t N) {
  if (stats.size() != strat.size()) throw Error(ErrorKind::Shape, "stats do not match the stratification");
  std::vector<double> w(strat.size());
  bool any = false;
  for (std::size_t s = 0; s < strat.size(); ++s) {
    if (!std::isfinite(stats.variances[s]) || stats.variances[s] < 0.0)
      throw Error(ErrorKind::InvalidArgument, "stratum variance must be finite and nonnegative");
    w[s] = strat.width(s) * std::sqrt(stats.variances[s]);
    any = any || w[s] > 0.0;
  }
  return any ? allocate_by_weights(w, N) : proportional_allocation(strat, N);
}

namespace {

std::vector<double> eval_rows(const Model& model, std::span<const double> x, std::size_t rows, std::size_t d) {
  std::vector<double> q(rows);
  eval_model_rows(model, x.first(rows * d), rows, q);
  return q;
}

double covariance(std::span<const double> a, double ma, std::span<const double> b, double mb) {
  if (a.size() < 2) return 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) c += (a[i] - ma) * (b[i] - mb);
  return c / static_cast<double>(a.size() - 1);
}

// Control-variate estimate on one block of inputs (rows x d, n_lf rows).
StratumBreakdown mf_block(const Model& hf, const Model& lf, std::span<const double> x, std::size_t d, std::size_t n_hf,
                          std::size_t n_lf, const AlphaSource& alpha) {
  StratumBreakdown b;
  const auto qh = eval_rows(hf, x, n_hf, d);
  const auto mh = sample_moments(qh);
  b.mean = mh.mean;
  b.variance = mh.variance;
  b.hf_count = n_hf;
  b.estimate = mh.mean;
  b.variance_estimate = mh.variance / static_cast<double>(n_hf);
  if (n_lf <= n_hf) return b;

  const auto ql = eval_rows(lf, x, n_lf, d);
  b.lf_count = n_lf;
  const std::span<const double> paired(ql.data(), n_hf);
  const auto ml_pair = sample_moments(paired);
  const auto ml_all = sample_moments(ql);
  b.lf_mean_paired = ml_pair.mean;
  b.lf_mean_all = ml_all.mean;
  b.lf_variance = ml_all.variance;
  b.covariance = covariance(qh, mh.mean, paired, ml_pair.mean);
  if (alpha.value) {
    b.alpha = *alpha.value;
  } else {
    if (!(ml_pair.variance > 0.0))
      throw Error(ErrorKind::DegenerateLowFidelity, "low-fidelity sample variance is zero; alpha undefined");
    b.alpha = b.covariance / ml_pair.variance;
  }
  if (mh.variance > 0.0 && ml_pair.variance > 0.0)
    b.rho = std::clamp(b.covariance / std::sqrt(mh.variance * ml_pair.variance), -1.0, 1.0);

  const double n = static_cast<double>(n_hf);
  const double m = static_cast<double>(n_lf);
  b.estimate = mh.mean - b.alpha * (ml_pair.mean - ml_all.mean);
  b.variance_estimate = std::max(
      0.0, mh.variance / n + (1.0 / n - 1.0 / m) * (b.alpha * b.alpha * ml_all.variance - 2.0 * b.alpha * b.covariance));
  return b;
}

}  // namespace

EstimateResult mc_estimate(const Model& model, const ProductDistribution& dist, std::size_t N, Rng& rng) {
  if (N < 2) throw Error(ErrorKind::InvalidArgument, "Monte Carlo needs N >= 2");
  if (model.dim != dist.dim()) throw Error(ErrorKind::Shape, "model and distribution dimensions differ");
  const auto x = dist.sample_batch(rng, N);
  const auto q = eval_rows(model, x, N, dist.dim());
  const auto m = sample_moments(q);
  EstimateResult r;
  r.estimator = "mc";
  r.estimate = m.mean;
  r.variance_estimate = m.variance / static_cast<double>(N);
  r.hf_evals = N;
  StratumBreakdown b;
  b.mean = m.mean;
  b.variance = m.variance;
  b.hf_count = N;
  b.estimate = m.mean;
  b.variance_estimate = r.variance_estimate;
  r.strata.push_back(b);
  return r;
}

EstimateResult smc_estimate(const Model& model, const ProductDistribution& dist, const QuantileMap& map,
                            const Stratification& strat, const Allocation& alloc, Rng& rng) {
  const std::size_t S = strat.size();
  if (alloc.counts.size() != S) throw Error(ErrorKind::Shape, "allocation does not match the stratification");
  for (std::size_t c : alloc.counts)
    if (c < 2) throw Error(ErrorKind::InvalidArgument, "every stratum needs at least two samples");
  if (model.dim != dist.dim()) throw Error(ErrorKind::Shape, "model and distribution dimensions differ");

  const auto draws = fill_strata(dist, map, strat, alloc.counts, rng);
  EstimateResult r;
  r.estimator = "smc";
  for (std::size_t s = 0; s < S; ++s) {
    const double lam = strat.width(s);
    const auto q = eval_rows(model, draws.inputs[s], alloc.counts[s], dist.dim());
    const auto m = sample_moments(q);
    StratumBreakdown b;
    b.width = lam;
    b.mean = m.mean;
    b.variance = m.variance;
    b.hf_count = alloc.counts[s];
    b.estimate = m.mean;
    b.variance_estimate = m.variance / static_cast<double>(alloc.counts[s]);
    r.estimate += lam * m.mean;
    r.variance_estimate += lam * lam * b.variance_estimate;
    r.hf_evals += alloc.counts[s];
    r.strata.push_back(b);
  }
  return r;
}

MfBudget mfmc_allocation(double rho, double w, double N) {
  if (!(std::abs(rho) < 1.0)) throw Error(ErrorKind::InvalidArgument, "correlation must satisfy |rho| < 1");
  if (!(w > 0.0) || w > 1.0) throw Error(ErrorKind::InvalidArgument, "cost ratio must lie in (0, 1]");
  if (!(N >= 2.0 * (1.0 + w) - 1e-9)) {
    std::ostringstream msg;
    msg << "multifidelity budget " << N << " is below 2(1 + w)";
    throw Error(ErrorKind::InfeasibleBudget, msg.str());
  }
  MfBudget b;
  b.cost_ratio = w;
  b.budget = N;
  const double r2 = rho * rho;
  b.beta = std::sqrt(r2 / (w * (1.0 - r2)));
  b.not_beneficial = r2 <= 4.0 * w / ((1.0 + w) * (1.0 + w));
  b.n_hf = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(N / (1.0 + w * b.beta) + 1e-9)));
  b.n_lf = std::max(b.n_hf, static_cast<std::size_t>(std::llround(b.beta * static_cast<double>(b.n_hf))));
  while (b.n_lf > b.n_hf && static_cast<double>(b.n_hf) + w * static_cast<double>(b.n_lf) > N + 1e-9) --b.n_lf;
  return b;
}

EstimateResult mfmc_estimate(const Model& hf, const Model& lf, const ProductDistribution& dist, const MfBudget& budget,
                             AlphaSource alpha, Rng& rng) {
  if (budget.n_hf < 2 || budget.n_lf < budget.n_hf) throw Error(ErrorKind::InvalidArgument, "invalid multifidelity budget");
  if (hf.dim != dist.dim() || lf.dim != dist.dim()) throw Error(ErrorKind::Shape, "model and distribution dimensions differ");
  const std::size_t rows = budget.uses_lf() ? budget.n_lf : budget.n_hf;
  const auto x = dist.sample_batch(rng, rows);
  const auto b = mf_block(hf, lf, x, dist.dim(), budget.n_hf, budget.uses_lf() ? budget.n_lf : 0, alpha);
  EstimateResult r;
  r.estimator = "mfmc";
  r.estimate = b.estimate;
  r.variance_estimate = b.variance_estimate;
  r.hf_evals = b.hf_count;
  r.lf_evals = b.lf_count;
  r.cost_ratio = budget.cost_ratio;
  r.strata.push_back(b);
  return r;
}

std::vector<MfBudget> smfmc_allocation(const Stratification& strat, const StratumStats& stats, double w, double N,
                                       AllocationKind kind) {
  const std::size_t S = strat.size();
  if (stats.size() != S) throw Error(ErrorKind::Shape, "stats do not match the stratification");
  if (!stats.has_multifidelity()) throw Error(ErrorKind::InvalidArgument, "stratum stats lack correlations");
  const double floor_budget = 2.0 * (1.0 + w);
  if (N < floor_budget * static_cast<double>(S) - 1e-9) {
    std::ostringstream msg;
    msg << "budget " << N << " is below 2(1 + w) per stratum for " << S << " strata";
    throw Error(ErrorKind::InfeasibleBudget, msg.str());
  }

  std::vector<double> weight(S);
  bool any = false;
  for (std::size_t s = 0; s < S; ++s) {
    if (kind == AllocationKind::Proportional) {
      weight[s] = strat.width(s);
    } else {
      const double r2 = stats.rho[s] * stats.rho[s];
      weight[s] = strat.width(s) * std::sqrt(std::max(0.0, stats.variances[s])) *
                  (std::sqrt(std::max(0.0, 1.0 - r2)) + std::sqrt(w * r2));
    }
    any = any || weight[s] > 0.0;
  }
  if (!any) weight = strat.widths();

  std::vector<double> share(S, 0.0);
  std::vector<bool> pinned(S, false);
  for (bool changed = true; changed;) {
    changed = false;
    double free_budget = N;
    double free_weight = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      if (pinned[s]) free_budget -= floor_budget;
      else free_weight += weight[s];
    }
    for (std::size_t s = 0; s < S; ++s) {
      if (pinned[s]) {
        share[s] = floor_budget;
        continue;
      }
      share[s] = free_weight > 0.0 ? free_budget * weight[s] / free_weight : floor_budget;
      if (share[s] < floor_budget) {
        pinned[s] = true;
        changed = true;
      }
    }
  }

  std::vector<double> rho(stats.rho);
  for (double& r : rho) r = std::clamp(r, -1.0 + 1e-9, 1.0 - 1e-9);
  std::vector<MfBudget> budgets;
  for (std::size_t s = 0; s < S; ++s) budgets.push_back(mfmc_allocation(rho[s], w, share[s]));
  return budgets;
}

EstimateResult smfmc_estimate(const Model& hf, const Model& lf, const ProductDistribution& dist, const QuantileMap& map,
                              const Stratification& strat, std::span<const MfBudget> budgets,
                              std::span<const double> alphas, Rng& rng) {
  const std::size_t S = strat.size();
  if (budgets.size() != S || alphas.size() != S) throw Error(ErrorKind::Shape, "one budget and alpha per stratum required");
  if (hf.dim != dist.dim() || lf.dim != dist.dim()) throw Error(ErrorKind::Shape, "model and distribution dimensions differ");
  std::vector<std::size_t> counts(S);
  for (std::size_t s = 0; s < S; ++s) {
    if (budgets[s].n_hf < 2 || budgets[s].n_lf < budgets[s].n_hf)
      throw Error(ErrorKind::InvalidArgument, "invalid budget in stratum " + std::to_string(s));
    counts[s] = budgets[s].uses_lf() ? budgets[s].n_lf : budgets[s].n_hf;
  }
  const auto draws = fill_strata(dist, map, strat, counts, rng);
  EstimateResult r;
  r.estimator = "smfmc";
  r.cost_ratio = budgets.empty() ? 0.0 : budgets[0].cost_ratio;
  for (std::size_t s = 0; s < S; ++s) {
    const double lam = strat.width(s);
    auto b = mf_block(hf, lf, draws.inputs[s], dist.dim(), budgets[s].n_hf,
                      budgets[s].uses_lf() ? budgets[s].n_lf : 0, AlphaSource::fixed(alphas[s]));
    b.width = lam;
    if (b.lf_count == 0) b.alpha = alphas[s];
    r.estimate += lam * b.estimate;
    r.variance_estimate += lam * lam * b.variance_estimate;
    r.hf_evals += b.hf_count;
    r.lf_evals += b.lf_count;
    r.strata.push_back(b);
  }
  return r;
}

TheoreticalVariances theoretical_variances(const StratumStats& stats, double N, std::optional<double> total_variance,
                                           std::optional<double> w, std::optional<double> global_rho) {
  if (!(N > 0.0)) throw Error(ErrorKind::InvalidArgument, "budget must be positive");
  const std::size_t S = stats.size();
  double sum_sqrt = 0.0, sum_var = 0.0, mean = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    sum_sqrt += stats.widths[s] * std::sqrt(stats.variances[s]);
    sum_var += stats.widths[s] * stats.variances[s];
    if (!stats.means.empty()) mean += stats.widths[s] * stats.means[s];
  }
  TheoreticalVariances t;
  t.alloc1 = sum_sqrt * sum_sqrt / N;
  t.alloc2 = sum_var / N;
  double total;
  if (total_variance) {
    total = *total_variance;
  } else {
    double between = 0.0;
    for (std::size_t s = 0; s < S && !stats.means.empty(); ++s)
      between += stats.widths[s] * (stats.means[s] - mean) * (stats.means[s] - mean);
    total = sum_var + between;
  }
  t.mc = total / N;

  if (w && stats.has_multifidelity()) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const double eta = mf_variance_factor(stats.rho[s], *w);
      s1 += stats.widths[s] * std::sqrt(stats.variances[s] * eta);
      s2 += stats.widths[s] * stats.variances[s] * eta;
    }
    t.mf_alloc1 = s1 * s1 / N;
    t.mf_alloc2 = s2 / N;
  }
  if (w && global_rho) t.mfmc = total * mf_variance_factor(*global_rho, *w) / N;
  return t;
}

}  // namespace neurstrat
