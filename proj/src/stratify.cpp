#include "neurstrat/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "neurstrat/error.hpp"
#include "neurstrat/math.hpp"

namespace neurstrat {

Stratification Stratification::from_breakpoints(std::vector<double> breakpoints) {
  if (breakpoints.size() < 2) throw Error(ErrorKind::InvalidArgument, "stratification needs at least two breakpoints");
  if (breakpoints.front() != 0.0 || breakpoints.back() != 1.0)
    throw Error(ErrorKind::InvalidArgument, "breakpoints must start at 0 and end at 1");
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    const double w = breakpoints[i] - breakpoints[i - 1];
    if (!(w >= kMinStratumWidth * (1.0 - 1e-9))) {
      std::ostringstream msg;
      msg << "stratum " << i - 1 << " has width " << w << " below the minimum " << kMinStratumWidth;
      throw Error(ErrorKind::InvalidArgument, msg.str());
    }
  }
  Stratification s;
  s.breakpoints = std::move(breakpoints);
  return s;
}

std::vector<double> Stratification::widths() const {
  std::vector<double> w(size());
  for (std::size_t s = 0; s < size(); ++s) w[s] = width(s);
  return w;
}

Stratification uniform_breakpoints(std::size_t strata) {
  if (strata == 0) throw Error(ErrorKind::InvalidArgument, "number of strata must be positive");
  if (1.0 / static_cast<double>(strata) < kMinStratumWidth)
    throw Error(ErrorKind::InvalidArgument, "too many strata for the minimum width");
  std::vector<double> b(strata + 1);
  for (std::size_t s = 0; s <= strata; ++s) b[s] = static_cast<double>(s) / static_cast<double>(strata);
  b.back() = 1.0;
  return Stratification::from_breakpoints(std::move(b));
}

std::size_t stratum_index(const Stratification& strat, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw Error(ErrorKind::InvalidArgument, "quantile outside [0, 1]");
  const auto& b = strat.breakpoints;
  const auto it = std::upper_bound(b.begin() + 1, b.end() - 1, u);
  return static_cast<std::size_t>(it - (b.begin() + 1));
}

namespace {

std::size_t rejection_cap(double width) { return static_cast<std::size_t>(std::ceil(100.0 / width)); }

}  // namespace

std::vector<double> sample_in_stratum(const ProductDistribution& dist, const QuantileMap& map,
                                      const Stratification& strat, std::size_t s, Rng& rng) {
  if (s >= strat.size()) throw Error(ErrorKind::InvalidArgument, "stratum index out of range");
  if (map.dim() != dist.dim()) throw Error(ErrorKind::Shape, "map and distribution dimensions differ");
  const std::size_t cap = rejection_cap(strat.width(s));
  std::vector<double> x(dist.dim());
  for (std::size_t attempt = 0; attempt < cap; ++attempt) {
    dist.sample(rng, x);
    if (stratum_index(strat, map.quantile(x)) == s) return x;
  }
  std::ostringstream msg;
  msg << "no acceptance in stratum " << s << " after " << cap << " proposals";
  throw Error(ErrorKind::RejectionBudget, msg.str());
}

StrataDraws fill_strata(const ProductDistribution& dist, const QuantileMap& map, const Stratification& strat,
                        std::span<const std::size_t> counts, Rng& rng, bool with_surrogate) {
  const std::size_t S = strat.size();
  const std::size_t d = dist.dim();
  if (counts.size() != S) throw Error(ErrorKind::Shape, "one count per stratum required");
  if (map.dim() != d) throw Error(ErrorKind::Shape, "map and distribution dimensions differ");
  const NeuramMap* neuram = nullptr;
  if (with_surrogate) {
    neuram = dynamic_cast<const NeuramMap*>(&map);
    if (!neuram) throw Error(ErrorKind::InvalidArgument, "surrogate values need a NeurAM map");
  }

  StrataDraws out;
  out.inputs.resize(S);
  out.quantiles.resize(S);
  if (with_surrogate) out.surrogate.resize(S);
  std::size_t remaining = 0;
  std::size_t cap = 0;
  for (std::size_t s = 0; s < S; ++s) {
    out.inputs[s].reserve(counts[s] * d);
    out.quantiles[s].reserve(counts[s]);
    if (with_surrogate) out.surrogate[s].reserve(counts[s]);
    remaining += counts[s];
    cap += counts[s] * rejection_cap(strat.width(s));
  }

  std::vector<double> u, sur;
  while (remaining > 0) {
    if (out.proposals >= cap) {
      std::ostringstream msg;
      msg << "stratified sampling exhausted " << cap << " proposals with " << remaining << " draws missing";
      throw Error(ErrorKind::RejectionBudget, msg.str());
    }
    const std::size_t batch = std::min(std::clamp<std::size_t>(remaining, 256, 1 << 16), cap - out.proposals);
    const auto x = dist.sample_batch(rng, batch);
    u.resize(batch);
    if (neuram) {
      sur.resize(batch);
      neuram->quantiles_and_surrogate(x, batch, u, sur);
    } else {
      map.quantiles(x, batch, u);
    }
    std::size_t used = 0;
    for (std::size_t i = 0; i < batch && remaining > 0; ++i, ++used) {
      const std::size_t s = stratum_index(strat, u[i]);
      if (out.quantiles[s].size() == counts[s]) continue;
      out.inputs[s].insert(out.inputs[s].end(), x.begin() + i * d, x.begin() + (i + 1) * d);
      out.quantiles[s].push_back(u[i]);
      if (neuram) out.surrogate[s].push_back(sur[i]);
      --remaining;
    }
    out.proposals += used;
  }
  return out;
}

StratumStats stratum_stats_surrogate(const NeuramMap& map, const ProductDistribution& dist,
                                     const Stratification& strat, std::size_t n_cheap, Rng& rng) {
  const std::size_t S = strat.size();
  std::vector<std::size_t> counts(S);
  for (std::size_t s = 0; s < S; ++s) {
    counts[s] = static_cast<std::size_t>(std::llround(static_cast<double>(n_cheap) * strat.width(s)));
    if (counts[s] < 2) {
      std::ostringstream msg;
      msg << "stratum " << s << " receives " << counts[s] << " cheap samples out of " << n_cheap;
      throw Error(ErrorKind::InsufficientSamples, msg.str());
    }
  }
  const auto draws = fill_strata(dist, map, strat, counts, rng, true);
  StratumStats stats;
  stats.widths = strat.widths();
  stats.counts = counts;
  for (std::size_t s = 0; s < S; ++s) {
    const auto m = sample_moments(draws.surrogate[s]);
    stats.means.push_back(m.mean);
    stats.variances.push_back(m.variance);
  }
  return stats;
}

// ---------------------------------------------------------------------------

double PairMoments::rho() const {
  if (!(var_hf > 0.0) || !(var_lf > 0.0)) return 0.0;
  return std::clamp(cov / std::sqrt(var_hf * var_lf), -1.0, 1.0);
}

double PairMoments::alpha() const { return var_lf > 0.0 ? cov / var_lf : 0.0; }

PairMoments pilot_moments(const MfPilot& pilot, double lo, double hi) {
  std::vector<double> hf, lf;
  for (std::size_t i = 0; i < pilot.size(); ++i) {
    const double u = pilot.quantiles[i];
    if (u >= lo && (u < hi || (hi == 1.0 && u <= hi))) {
      hf.push_back(pilot.hf[i]);
      lf.push_back(pilot.lf[i]);
    }
  }
  PairMoments pm;
  pm.n = hf.size();
  if (pm.n == 0) return pm;
  const auto mh = sample_moments(hf);
  const auto ml = sample_moments(lf);
  pm.mean_hf = mh.mean;
  pm.mean_lf = ml.mean;
  pm.var_hf = mh.variance;
  pm.var_lf = ml.variance;
  if (pm.n >= 2) {
    double c = 0.0;
    for (std::size_t i = 0; i < pm.n; ++i) c += (hf[i] - mh.mean) * (lf[i] - ml.mean);
    pm.cov = c / static_cast<double>(pm.n - 1);
  }
  return pm;
}

void attach_pilot(StratumStats& stats, const Stratification& strat, const MfPilot& pilot) {
  if (pilot.quantiles.size() != pilot.size() || pilot.lf.size() != pilot.size())
    throw Error(ErrorKind::Shape, "pilot arrays differ in length");
  const auto pooled = pilot_moments(pilot, 0.0, 1.0);
  if (pooled.n < 3) throw Error(ErrorKind::InsufficientSamples, "multifidelity pilot needs at least three points");
  stats.rho.assign(strat.size(), 0.0);
  stats.alpha.assign(strat.size(), 0.0);
  for (std::size_t s = 0; s < strat.size(); ++s) {
    const auto pm = pilot_moments(pilot, strat.lower(s), strat.upper(s));
    const auto& use = (pm.n >= 3 && pm.var_lf > 0.0) ? pm : pooled;
    stats.rho[s] = use.rho();
    stats.alpha[s] = use.alpha();
  }
}

double mf_variance_factor(double rho, double w) {
  const double r2 = rho * rho;
  const double f = std::sqrt(std::max(0.0, 1.0 - r2)) + std::sqrt(w * r2);
  return f * f;
}

// ---------------------------------------------------------------------------

LatentProfile::LatentProfile(const NeuramMap& map, std::size_t cells, Rng& rng) {
  if (cells < 2) throw Error(ErrorKind::InvalidArgument, "latent profile needs at least two cells");
  std::vector<double> z(cells);
  for (std::size_t i = 0; i < cells; ++i)
    z[i] = map.cdf().inverse((static_cast<double>(i) + rng.uniform_open()) / static_cast<double>(cells));
  std::vector<double> g(cells);
  map.model().surrogate_latent_batch(z, g);
  *this = LatentProfile(std::move(g));
}

LatentProfile::LatentProfile(std::vector<double> cell_values) : values_(std::move(cell_values)) {
  const std::size_t n = values_.size();
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "latent profile needs at least two cells");
  for (double v : values_)
    if (!std::isfinite(v)) throw Error(ErrorKind::Numeric, "nonfinite surrogate value in latent profile");
  shift_ = sample_moments(values_).mean;
  p1_.assign(n + 1, 0.0);
  p2_.assign(n + 1, 0.0);
  const double h = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = values_[i] - shift_;
    p1_[i + 1] = p1_[i] + c * h;
    p2_[i + 1] = p2_[i] + c * c * h;
  }
}

double LatentProfile::integral(const std::vector<double>& prefix, double t, bool squared) const {
  const std::size_t n = values_.size();
  const double x = t * static_cast<double>(n);
  const std::size_t i = std::min(static_cast<std::size_t>(std::max(0.0, x)), n - 1);
  const double frac = x - static_cast<double>(i);
  const double c = values_[i] - shift_;
  return prefix[i] + frac * (squared ? c * c : c) / static_cast<double>(n);
}

double LatentProfile::mean(double lo, double hi) const {
  return shift_ + (integral(p1_, hi, false) - integral(p1_, lo, false)) / (hi - lo);
}

double LatentProfile::variance(double lo, double hi) const {
  const double w = hi - lo;
  const double m1 = (integral(p1_, hi, false) - integral(p1_, lo, false)) / w;
  const double m2 = (integral(p2_, hi, true) - integral(p2_, lo, true)) / w;
  return std::max(0.0, m2 - m1 * m1);
}

std::string to_string(AllocationKind kind) { return kind == AllocationKind::Optimal ? "optimal" : "proportional"; }
std::string to_string(SplitRule rule) { return rule == SplitRule::Optimal ? "optimal" : "midpoint"; }

AllocationKind parse_allocation_kind(const std::string& text) {
  if (text == "optimal" || text == "1") return AllocationKind::Optimal;
  if (text == "proportional" || text == "2") return AllocationKind::Proportional;
  throw Error(ErrorKind::InvalidArgument, "unknown allocation kind '" + text + "'");
}

SplitRule parse_split_rule(const std::string& text) {
  if (text == "midpoint") return SplitRule::Midpoint;
  if (text == "optimal") return SplitRule::Optimal;
  throw Error(ErrorKind::InvalidArgument, "unknown split rule '" + text + "'");
}

double split_objective(const LatentProfile& profile, double lo, double a, double hi, AllocationKind kind) {
  auto v = [&](double l, double r) {
    const double var = profile.variance(l, r);
    return kind == AllocationKind::Optimal ? std::sqrt(var) : var;
  };
  return (a - lo) * v(lo, a) + (hi - a) * v(a, hi);
}

double optimal_split(const LatentProfile& profile, double lo, double hi, AllocationKind kind) {
  const double mw = kMinStratumWidth;
  if (!(hi - lo >= 2.0 * mw)) throw Error(ErrorKind::InvalidArgument, "interval too narrow to split");
  const double a0 = lo + mw;
  const double a1 = hi - mw;
  constexpr int grid = 64;
  auto f = [&](double a) { return split_objective(profile, lo, a, hi, kind); };

  const double step = (a1 - a0) / (grid - 1);
  int best = -1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid; ++k) {
    const double val = f(a0 + step * k);
    if (std::isfinite(val) && val < best_val) {
      best_val = val;
      best = k;
    }
  }
  if (best < 0) throw Error(ErrorKind::Estimation, "split objective nonfinite on the whole grid");
  double best_a = best == grid - 1 ? a1 : a0 + step * best;

  // Golden-section search on the bracket around the best grid point.
  double l = std::max(a0, best_a - step);
  double r = std::min(a1, best_a + step);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = r - inv_phi * (r - l);
  double d = l + inv_phi * (r - l);
  double fc = f(c), fd = f(d);
  while (r - l > 1e-4) {
    if (fc <= fd) {
      r = d;
      d = c;
      fd = fc;
      c = r - inv_phi * (r - l);
      fc = f(c);
    } else {
      l = c;
      c = d;
      fc = fd;
      d = l + inv_phi * (r - l);
      fd = f(d);
    }
  }
  const double refined = std::clamp(0.5 * (l + r), a0, a1);
  const double refined_val = f(refined);
  if (std::isfinite(refined_val) && refined_val < best_val) {
    best_a = refined;
    best_val = refined_val;
  }
  const double mid = 0.5 * (lo + hi);
  if (f(mid) < best_val) best_a = mid;
  return best_a;
}

HeuristicResult heuristic_refine(const LatentProfile& profile, const HeuristicOptions& options) {
  if (options.target_strata == 0) throw Error(ErrorKind::InvalidArgument, "target strata must be positive");
  std::vector<double> b{0.0, 1.0};
  HeuristicResult result;

  auto record = [&] {
    double prop = 0.0, opt = 0.0;
    for (std::size_t s = 0; s + 1 < b.size(); ++s) {
      const double w = b[s + 1] - b[s];
      const double var = profile.variance(b[s], b[s + 1]);
      prop += w * var;
      opt += w * std::sqrt(var);
    }
    result.proportional_objective.push_back(prop);
    result.optimal_objective.push_back(opt);
  };
  auto contribution = [&](std::size_t s) {
    const double w = b[s + 1] - b[s];
    double var = profile.variance(b[s], b[s + 1]);
    if (options.pilot) {
      const auto pm = pilot_moments(*options.pilot, b[s], b[s + 1]);
      if (pm.n >= 3) var *= mf_variance_factor(pm.rho(), options.cost_ratio);
    }
    return options.allocation == AllocationKind::Optimal ? w * std::sqrt(var) : w * var;
  };

  record();
  while (b.size() - 1 < options.target_strata) {
    const std::size_t S = b.size() - 1;
    std::vector<std::size_t> order(S);
    std::vector<double> contrib(S);
    for (std::size_t s = 0; s < S; ++s) {
      order[s] = s;
      contrib[s] = contribution(s);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return contrib[x] > contrib[y]; });
    std::size_t chosen = S;
    for (std::size_t s : order) {
      if (b[s + 1] - b[s] >= 2.0 * kMinStratumWidth) {
        chosen = s;
        break;
      }
    }
    if (chosen == S) break;
    const double lo = b[chosen];
    const double hi = b[chosen + 1];
    const double a =
        options.split == SplitRule::Midpoint ? 0.5 * (lo + hi) : optimal_split(profile, lo, hi, options.allocation);
    b.insert(b.begin() + static_cast<std::ptrdiff_t>(chosen) + 1, a);
    record();
  }
  result.strat = Stratification::from_breakpoints(b);
  result.achieved_strata = result.strat.size();
  return result;
}

}  // namespace neurstrat
