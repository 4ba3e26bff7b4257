#include <cmath>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "helpers.hpp"
#include "neurstrat/stratify.hpp"

using namespace neurstrat;
using testing::check_error;

namespace {

const double kRoot2 = std::sqrt(2.0);

// Constant quantile, for exercising the rejection cap.
class FixedMap final : public QuantileMap {
 public:
  explicit FixedMap(double u) : u_(u) {}
  std::size_t dim() const override { return 2; }
  void quantiles(std::span<const double>, std::size_t rows, std::span<double> u) const override {
    for (std::size_t i = 0; i < rows; ++i) u[i] = u_;
  }

 private:
  double u_;
};

NeuramMap constant_surrogate_map() {
  auto a = analytic_linear_neuram();
  auto m = std::make_shared<const NeurAmModel>(a.model->encoder(), a.model->decoder(), nn::Mlp({1, 1}),
                                               AffineNormalizer::identity(2), AffineNormalizer{{4.0}, {1.0}});
  return NeuramMap(m, a.cdf);
}

}  // namespace

TEST_SUITE("stratify") {

TEST_CASE("uniform breakpoints") {
  CHECK(uniform_breakpoints(1).breakpoints == std::vector<double>{0.0, 1.0});
  CHECK(uniform_breakpoints(4).breakpoints == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  const auto s7 = uniform_breakpoints(7);
  CHECK(s7.size() == 7);
  double total = 0.0;
  for (double w : s7.widths()) {
    CHECK(w == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  check_error(ErrorKind::InvalidArgument, [] { uniform_breakpoints(0); });
  check_error(ErrorKind::InvalidArgument, [] { uniform_breakpoints(1001); });
}

TEST_CASE("breakpoint validation") {
  CHECK(Stratification::from_breakpoints({0.0, 0.3, 1.0}).size() == 2);
  check_error(ErrorKind::InvalidArgument, [] { Stratification::from_breakpoints({0.0, 0.6, 0.4, 1.0}); });
  check_error(ErrorKind::InvalidArgument, [] { Stratification::from_breakpoints({0.1, 1.0}); });
  check_error(ErrorKind::InvalidArgument, [] { Stratification::from_breakpoints({0.0, 0.9}); });
  check_error(ErrorKind::InvalidArgument, [] { Stratification::from_breakpoints({0.0, 0.5, 0.5005, 1.0}); });
  check_error(ErrorKind::InvalidArgument, [] { Stratification::from_breakpoints({0.0}); });
}

TEST_CASE("stratum index, one-based in the examples") {
  const auto s4 = uniform_breakpoints(4);
  CHECK(stratum_index(s4, 0.0) + 1 == 1);
  CHECK(stratum_index(s4, 1.0) + 1 == 4);
  CHECK(stratum_index(s4, 0.3) + 1 == 2);
  CHECK(stratum_index(s4, 0.25) + 1 == 2);
  CHECK(stratum_index(s4, 0.2499999) + 1 == 1);
  check_error(ErrorKind::InvalidArgument, [&] { stratum_index(s4, -1e-9); });
  check_error(ErrorKind::InvalidArgument, [&] { stratum_index(s4, 1.0 + 1e-9); });

  const auto strat = Stratification::from_breakpoints({0.0, 0.1, 0.35, 0.36, 0.8, 1.0});
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    const std::size_t s = stratum_index(strat, u);
    int hits = 0;
    for (std::size_t k = 0; k < strat.size(); ++k) hits += (u >= strat.lower(k) && u < strat.upper(k)) ? 1 : 0;
    CHECK(hits == 1);
    CHECK((u >= strat.lower(s) && u < strat.upper(s)));
  }
}

TEST_CASE("rejection sampling in a stratum") {
  const auto a = analytic_linear_neuram();
  const auto map = a.map();
  const auto dist = ProductDistribution::uniform_cube(2, -1.0, 1.0);

  Rng r1(10), r2(10);
  const auto x = sample_in_stratum(dist, map, uniform_breakpoints(1), 0, r1);
  CHECK(x == dist.sample(r2));

  const auto s4 = uniform_breakpoints(4);
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto y = sample_in_stratum(dist, map, s4, 0, rng);
    CHECK(y[0] + y[1] <= kRoot2 - 2.0 + 1e-12);
    CHECK(y[1] > -1.0);
  }

  std::size_t accepted = 0;
  std::vector<double> p(2);
  for (int i = 0; i < 10000; ++i) {
    dist.sample(rng, p);
    accepted += stratum_index(s4, map.quantile(p)) == 2 ? 1 : 0;
  }
  const double rate = accepted / 10000.0;
  CHECK((rate >= 0.22 && rate <= 0.28));

  check_error(ErrorKind::RejectionBudget, [&] { sample_in_stratum(dist, FixedMap(0.9), s4, 0, rng); });
  check_error(ErrorKind::InvalidArgument, [&] { sample_in_stratum(dist, map, s4, 4, rng); });
}

TEST_CASE("strata of the linear example are the half-plane cells") {
  const auto a = analytic_linear_neuram();
  const auto map = a.map();
  const auto dist = ProductDistribution::uniform_cube(2, -1.0, 1.0);
  const auto s4 = uniform_breakpoints(4);
  Rng rng(12);
  std::vector<double> x(2);
  for (int i = 0; i < 10000; ++i) {
    dist.sample(rng, x);
    const double t = x[0] + x[1];
    const std::size_t expected = t < kRoot2 - 2.0 ? 0 : t < 0.0 ? 1 : t < 2.0 - kRoot2 ? 2 : 3;
    CHECK(stratum_index(s4, map.quantile(x)) == expected);
  }
}

TEST_CASE("fill_strata keeps iid conditional draws") {
  const auto a = analytic_linear_neuram();
  const auto map = a.map();
  const auto dist = ProductDistribution::uniform_cube(2, -1.0, 1.0);

  const std::vector<std::size_t> one{300};
  Rng r1(20), r2(20);
  const auto single = fill_strata(dist, map, uniform_breakpoints(1), one, r1);
  CHECK(single.proposals == 300);
  const auto direct = dist.sample_batch(r2, 300);
  CHECK(single.inputs[0] == direct);

  const auto s4 = uniform_breakpoints(4);
  const std::vector<std::size_t> counts{5, 40, 2, 100};
  Rng rng(21);
  const auto draws = fill_strata(dist, map, s4, counts, rng, true);
  CHECK(draws.proposals >= 147);
  for (std::size_t s = 0; s < 4; ++s) {
    REQUIRE(draws.quantiles[s].size() == counts[s]);
    CHECK(draws.inputs[s].size() == 2 * counts[s]);
    for (std::size_t i = 0; i < counts[s]; ++i) {
      CHECK(stratum_index(s4, draws.quantiles[s][i]) == s);
      CHECK(draws.surrogate[s][i] == draws.inputs[s][2 * i] + draws.inputs[s][2 * i + 1]);
    }
  }
  const std::vector<std::size_t> few{1, 1, 1, 1};
  check_error(ErrorKind::RejectionBudget, [&] { fill_strata(dist, FixedMap(0.9), s4, few, rng); });
  check_error(ErrorKind::InvalidArgument, [&] { fill_strata(dist, FixedMap(0.5), s4, few, rng, true); });
}

TEST_CASE("surrogate stratum statistics") {
  const auto dist = ProductDistribution::uniform_cube(2, -1.0, 1.0);
  const auto s4 = uniform_breakpoints(4);
  Rng rng(30);

  const auto flat = stratum_stats_surrogate(constant_surrogate_map(), dist, s4, 1000, rng);
  for (double v : flat.variances) CHECK(v == 0.0);
  for (double m : flat.means) CHECK(m == 4.0);

  const auto a = analytic_linear_neuram();
  const auto stats = stratum_stats_surrogate(a.map(), dist, s4, 1000000, rng);
  CHECK(stats.widths == s4.widths());
  const double inner = 32.0 * kRoot2 / 9.0 - 5.0;
  const double expected[] = {1.0 / 9.0, inner, inner, 1.0 / 9.0};
  for (std::size_t s = 0; s < 4; ++s) {
    CAPTURE(s);
    CHECK(std::abs(stats.variances[s] - expected[s]) / expected[s] < 0.02);
    CHECK(stats.counts[s] == 250000);
  }
  check_error(ErrorKind::InsufficientSamples, [&] { stratum_stats_surrogate(a.map(), dist, s4, 4, rng); });
}

TEST_CASE("occupancy of trained NeurAM strata matches the widths") {
  const auto& t = testing::trained_q0();
  const auto map = t.hf_map();
  const auto strat = Stratification::from_breakpoints({0.0, 0.05, 0.2, 0.5, 0.55, 0.9, 1.0});
  Rng rng(31);
  const std::size_t n = 10000;
  const auto x = t.hf.dist.sample_batch(rng, n);
  std::vector<double> u(n);
  map.quantiles(x, n, u);
  std::vector<double> hits(strat.size(), 0.0);
  for (double v : u) hits[stratum_index(strat, v)] += 1.0;
  for (std::size_t s = 0; s < strat.size(); ++s) {
    const double w = strat.width(s);
    const double sd = std::sqrt(n * w * (1.0 - w));
    CAPTURE(s);
    CHECK(std::abs(hits[s] - n * w) <= 3.0 * sd);
  }
}

TEST_CASE("latent profile moments") {
  LatentProfile p({1.0, 3.0, 3.0, 7.0});
  CHECK(p.cells() == 4);
  CHECK(p.mean(0.0, 1.0) == doctest::Approx(3.5));
  CHECK(p.variance(0.0, 1.0) == doctest::Approx((1 + 9 + 9 + 49) / 4.0 - 3.5 * 3.5));
  CHECK(p.mean(0.25, 0.75) == doctest::Approx(3.0));
  CHECK(p.variance(0.25, 0.75) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.mean(0.125, 0.375) == doctest::Approx(2.0));
  CHECK(p.variance(0.125, 0.375) == doctest::Approx(1.0));

  Rng rng(32);
  std::vector<double> values(500);
  for (double& v : values) v = rng.normal() + 10.0;
  LatentProfile q(values);
  for (int i = 0; i < 200; ++i) {
    double lo = rng.uniform(), hi = rng.uniform();
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 1e-2) continue;
    const double a = rng.uniform(lo, hi);
    const double whole = (hi - lo) * q.variance(lo, hi);
    const double split = (a - lo) * q.variance(lo, a) + (hi - a) * q.variance(a, hi);
    CHECK(split <= whole + 1e-12);
  }
  check_error(ErrorKind::InvalidArgument, [] { LatentProfile(std::vector<double>{1.0}); });
}

TEST_CASE("optimal split") {
  std::vector<double> ramp(1000);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = (i + 0.5) / 1000.0;
  LatentProfile linear(ramp);
  for (auto kind : {AllocationKind::Optimal, AllocationKind::Proportional}) {
    CHECK(optimal_split(linear, 0.0, 1.0, kind) == doctest::Approx(0.5).epsilon(1.0 / 64.0));
    CHECK(optimal_split(linear, 0.2, 0.6, kind) == doctest::Approx(0.4).epsilon(1.0 / 64.0));
  }

  Rng rng(33);
  std::vector<double> bumpy(2000);
  for (std::size_t i = 0; i < bumpy.size(); ++i) {
    const double u = (i + 0.5) / 2000.0;
    bumpy[i] = std::exp(3.0 * u) + 0.3 * std::sin(12.0 * u) + 0.01 * rng.normal();
  }
  LatentProfile p(bumpy);
  for (auto kind : {AllocationKind::Optimal, AllocationKind::Proportional}) {
    for (auto [lo, hi] : {std::pair{0.0, 1.0}, std::pair{0.1, 0.4}, std::pair{0.7, 0.71}}) {
      const double a = optimal_split(p, lo, hi, kind);
      CHECK(a >= lo + kMinStratumWidth);
      CHECK(a <= hi - kMinStratumWidth);
      CHECK(split_objective(p, lo, a, hi, kind) <= split_objective(p, lo, 0.5 * (lo + hi), hi, kind));
    }
  }

  LatentProfile flat(std::vector<double>(100, 2.0));
  const double a1 = optimal_split(flat, 0.2, 0.8, AllocationKind::Optimal);
  CHECK(a1 == optimal_split(flat, 0.2, 0.8, AllocationKind::Optimal));
  CHECK(a1 == doctest::Approx(0.2 + kMinStratumWidth));
  check_error(ErrorKind::InvalidArgument, [&] { optimal_split(flat, 0.5, 0.5015, AllocationKind::Optimal); });
}

TEST_CASE("heuristic refinement on simple profiles") {
  LatentProfile flat(std::vector<double>(64, 1.0));
  HeuristicOptions opt;
  opt.target_strata = 1;
  CHECK(heuristic_refine(flat, opt).strat.breakpoints == std::vector<double>{0.0, 1.0});

  opt.target_strata = 2;
  CHECK(heuristic_refine(flat, opt).strat.breakpoints == std::vector<double>{0.0, 0.5, 1.0});
  opt.target_strata = 4;
  const auto r4 = heuristic_refine(flat, opt);
  CHECK(r4.strat.breakpoints == std::vector<double>{0.0, 0.125, 0.25, 0.5, 1.0});
  CHECK(r4.achieved_strata == 4);
  CHECK(r4.proportional_objective.size() == 4);

  opt.target_strata = 5000;
  const auto capped = heuristic_refine(flat, opt);
  CHECK(capped.achieved_strata < 5000);
  CHECK(capped.achieved_strata == capped.strat.size());
  for (double w : capped.strat.widths()) CHECK(w >= kMinStratumWidth);

  opt.target_strata = 0;
  check_error(ErrorKind::InvalidArgument, [&] { heuristic_refine(flat, opt); });
}

TEST_CASE("heuristic objective never increases on Q0") {
  const auto& t = testing::trained_q0();
  Rng rng(34);
  const LatentProfile profile(t.hf_map(), 100000, rng);
  for (auto split : {SplitRule::Midpoint, SplitRule::Optimal}) {
    for (auto alloc : {AllocationKind::Optimal, AllocationKind::Proportional}) {
      HeuristicOptions opt;
      opt.target_strata = 10;
      opt.split = split;
      opt.allocation = alloc;
      const auto r = heuristic_refine(profile, opt);
      CHECK(r.achieved_strata == 10);
      REQUIRE(r.proportional_objective.size() == 10);
      for (std::size_t i = 1; i < r.proportional_objective.size(); ++i) {
        CHECK(r.proportional_objective[i] <= r.proportional_objective[i - 1]);
      }
      for (double b : r.strat.breakpoints) CHECK((b >= 0.0 && b <= 1.0));
    }
  }
}

TEST_CASE("multifidelity pilot moments") {
  MfPilot pilot;
  Rng rng(35);
  for (int i = 0; i < 4000; ++i) {
    const double u = rng.uniform();
    const double h = u + 0.1 * rng.normal();
    pilot.quantiles.push_back(u);
    pilot.hf.push_back(h);
    pilot.lf.push_back(u < 0.5 ? 2.0 * h + 0.05 * rng.normal() : rng.normal());
  }
  const auto low = pilot_moments(pilot, 0.0, 0.5);
  const auto high = pilot_moments(pilot, 0.5, 1.0);
  CHECK(low.n + high.n == 4000);
  CHECK(low.rho() > 0.9);
  CHECK(std::abs(high.rho()) < 0.1);
  CHECK(low.alpha() == doctest::Approx(0.5).epsilon(0.05));

  StratumStats stats;
  const auto strat = Stratification::from_breakpoints({0.0, 0.5, 0.998, 1.0});
  stats.widths = strat.widths();
  stats.variances = {1.0, 1.0, 1.0};
  stats.means = {0.0, 0.0, 0.0};
  stats.counts = {10, 10, 10};
  MfPilot sparse = pilot;
  for (std::size_t i = 0; i < sparse.size(); ++i)
    if (sparse.quantiles[i] > 0.998) sparse.quantiles[i] = 0.9;
  attach_pilot(stats, strat, sparse);
  REQUIRE(stats.has_multifidelity());
  const auto pooled = pilot_moments(sparse, 0.0, 1.0);
  CHECK(stats.rho[2] == doctest::Approx(pooled.rho()));
  CHECK(stats.alpha[2] == doctest::Approx(pooled.alpha()));
  CHECK(stats.rho[0] > 0.9);

  CHECK(mf_variance_factor(0.0, 0.01) == 1.0);
  CHECK(mf_variance_factor(1.0, 0.01) == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(mf_variance_factor(-1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("allocation and split rule names") {
  CHECK(parse_allocation_kind("optimal") == AllocationKind::Optimal);
  CHECK(parse_allocation_kind("1") == AllocationKind::Optimal);
  CHECK(parse_allocation_kind("2") == AllocationKind::Proportional);
  CHECK(parse_split_rule("midpoint") == SplitRule::Midpoint);
  CHECK(to_string(SplitRule::Optimal) == "optimal");
  CHECK(to_string(AllocationKind::Proportional) == "proportional");
  check_error(ErrorKind::InvalidArgument, [] { parse_split_rule("golden"); });
}

}  // TEST_SUITE
