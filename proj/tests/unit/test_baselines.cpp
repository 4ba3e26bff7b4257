#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "neurstrat/baselines.hpp"
#include "neurstrat/math.hpp"

using namespace neurstrat;
using testing::check_error;

namespace {

bool columns_are_permutations(const std::vector<double>& x, std::size_t N, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<std::size_t> bins;
    for (std::size_t i = 0; i < N; ++i) {
      const double v = x[i * d + k];
      if (!(v > 0.0 && v < 1.0)) return false;
      bins.push_back(static_cast<std::size_t>(std::floor(v * static_cast<double>(N))));
    }
    std::sort(bins.begin(), bins.end());
    for (std::size_t i = 0; i < N; ++i)
      if (bins[i] != i) return false;
  }
  return true;
}

ProductDistribution mixed_distribution() {
  return ProductDistribution({Component::uniform(63070, 115600), Component::log_uniform(0.05, 0.2),
                              Component::normal(0.1, 0.0161812), Component::log_normal(7.71, 1.0056)});
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("latin hypercube permutation property") {
  Rng rng(1);
  const auto one = lhs_sample(1, 3, rng);
  CHECK(one.size() == 3);
  for (double v : one) CHECK((v >= 0.0 && v < 1.0));

  const auto four = lhs_sample(4, 2, rng);
  CHECK(columns_are_permutations(four, 4, 2));

  for (std::size_t N : {2, 7, 64, 1000})
    for (std::size_t d : {1, 3, 10}) CHECK(columns_are_permutations(lhs_sample(N, d, rng), N, d));

  const auto big = lhs_sample(1000, 5, rng);
  for (std::size_t k = 0; k < 5; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) s += big[i * 5 + k];
    CHECK(std::abs(s / 1000.0 - 0.5) < 0.02);
  }
  check_error(ErrorKind::InvalidArgument, [&] { lhs_sample(0, 2, rng); });
}

TEST_CASE("latin hypercube estimator") {
  const auto lin = make_benchmark("linear");
  Rng rng(2);
  const auto r = lhs_mc_estimate(lin.model, lin.dist, 500, rng);
  CHECK(r.estimator == "lhs-mc");
  CHECK(r.hf_evals == 500);
  std::vector<double> lhs(300), mc(300);
  const auto sinsum = make_benchmark("sinsum", 10);
  for (std::size_t i = 0; i < 300; ++i) {
    lhs[i] = lhs_mc_estimate(sinsum.model, sinsum.dist, 256, rng).estimate;
    mc[i] = mc_estimate(sinsum.model, sinsum.dist, 256, rng).estimate;
  }
  CHECK(std::abs(testing::mean_of(lhs)) < 4.0 * std::sqrt(testing::variance_of(lhs) / 300.0));
  CHECK(testing::variance_of(lhs) < testing::variance_of(mc));
}

TEST_CASE("gaussian map") {
  const GaussianMap cube(ProductDistribution::uniform_cube(3, -1.0, 1.0));
  for (double v : cube.forward(std::vector<double>{0.0, 0.0, 0.0})) CHECK(v == doctest::Approx(0.0));
  const GaussianMap ab(ProductDistribution({Component::uniform(2.0, 5.0)}));
  CHECK(ab.forward(std::vector<double>{0.0})[0] == doctest::Approx(3.5));

  for (double z : {-2.5, -0.3, 0.0, 0.8, 1.9}) {
    CHECK(cube.forward(std::vector<double>{z, 0.0, 0.0})[0] == doctest::Approx(std::erf(z / std::sqrt(2.0))).epsilon(1e-13));
  }

  const GaussianMap mixed(mixed_distribution());
  Rng rng(3);
  std::vector<double> z(4), x(4), back(4), jac(4);
  for (int i = 0; i < 1000; ++i) {
    for (double& v : z) v = rng.uniform(-5.0, 5.0);
    mixed.forward(z, x);
    mixed.inverse(x, back);
    for (std::size_t k = 0; k < 4; ++k) CHECK(back[k] == doctest::Approx(z[k]).epsilon(1e-8).scale(1.0));
  }

  for (int i = 0; i < 50; ++i) {
    for (double& v : z) v = rng.normal();
    mixed.jacobian_diagonal(z, jac);
    for (std::size_t k = 0; k < 4; ++k) {
      auto zp = z, zm = z;
      zp[k] += 1e-6;
      zm[k] -= 1e-6;
      const double fd = (mixed.forward(zp)[k] - mixed.forward(zm)[k]) / 2e-6;
      CHECK(jac[k] == doctest::Approx(fd).epsilon(1e-5));
    }
  }

  const auto dist = mixed_distribution();
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> xs(10000);
    for (double& v : xs) {
      for (double& zi : z) zi = rng.normal();
      v = mixed.forward(z)[k];
    }
    const auto& c = dist.component(k);
    CHECK(testing::ks_statistic(xs, [&](double t) { return c.cdf(t); }) < testing::ks_critical_1pct(10000));
  }
}

TEST_CASE("jacobi eigen-decomposition") {
  const std::vector<double> a{4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 5.0};
  const auto e = jacobi_eigen(a, 3);
  REQUIRE(e.values.size() == 3);
  CHECK(e.values[0] >= e.values[1]);
  CHECK(e.values[1] >= e.values[2]);
  CHECK(e.values[0] + e.values[1] + e.values[2] == doctest::Approx(12.0));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double rec = 0.0;
      for (std::size_t k = 0; k < 3; ++k) rec += e.vectors[i * 3 + k] * e.values[k] * e.vectors[j * 3 + k];
      CHECK(rec == doctest::Approx(a[i * 3 + j]).epsilon(1e-12).scale(1.0));
    }
  }
  const auto diag = jacobi_eigen({1.0, 0.0, 0.0, 7.0}, 2);
  CHECK(diag.values == std::vector<double>{7.0, 1.0});
}

TEST_CASE("active subspace directions") {
  const auto lin = make_benchmark("linear");
  const GaussianMap gmap(lin.dist);
  Rng rng(4);
  const auto dir = as_direction(lin.model, gmap, 10000, 1e-4, rng);
  CHECK(std::abs(dir.v[0] - 1.0 / std::sqrt(2.0)) < 0.02);
  CHECK(std::abs(dir.v[1] - 1.0 / std::sqrt(2.0)) < 0.02);
  CHECK(dir.n_samples == 10000);

  Model fd_lin = lin.model;
  fd_lin.gradient = {};
  const auto fd_dir = as_direction(fd_lin, gmap, 10000, 1e-4, rng);
  CHECK(std::abs(std::abs(fd_dir.v[0]) - 1.0 / std::sqrt(2.0)) < 0.02);

  Model x1{"x1", 3, [](std::span<const double> x) { return std::sin(x[0]) + 2.0 * x[0]; }, {}, {}, Fidelity::High, 1.0, {}};
  const GaussianMap cube(ProductDistribution::uniform_cube(3, -1.0, 1.0));
  const auto e1 = as_direction(x1, cube, 2000, 1e-4, rng);
  CHECK(std::abs(e1.v[0]) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(e1.v[1]) < 1e-6);

  const auto q0 = make_benchmark("q0");
  const auto ish = make_benchmark("ishigami");
  for (const auto* b : {&q0, &ish}) {
    const auto d = as_direction(b->model, GaussianMap(b->dist), 3000, 1e-4, rng);
    double norm = 0.0;
    for (double v : d.v) norm += v * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    for (double ev : d.eigenvalues) CHECK(ev >= -1e-12);
    const auto first = std::find_if(d.v.begin(), d.v.end(), [](double v) { return v != 0.0; });
    CHECK(*first > 0.0);
  }
  check_error(ErrorKind::InvalidArgument, [&] { as_direction(lin.model, gmap, 1, 1e-4, rng); });
}

TEST_CASE("active subspace strata") {
  const auto lin = make_benchmark("linear");
  const GaussianMap gmap(lin.dist);
  AsDirection dir{{1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}, {1.0, 0.0}, 0};
  const AsMap map(dir, gmap);
  const auto s3 = uniform_breakpoints(3);
  CHECK(map.quantile(std::vector<double>{0.0, 0.0}) == doctest::Approx(0.5));
  CHECK(as_stratum_index(map, s3, std::vector<double>{0.0, 0.0}) == 1);

  const auto s2 = uniform_breakpoints(2);
  Rng rng(5);
  std::vector<double> x(2);
  std::size_t first = 0;
  for (int i = 0; i < 10000; ++i) {
    lin.dist.sample(rng, x);
    const std::size_t s = as_stratum_index(map, s2, x);
    first += s == 0 ? 1 : 0;
    if (std::abs(x[0] + x[1]) > 1e-9) CHECK(s == (x[0] + x[1] < 0.0 ? 0u : 1u));
  }
  CHECK((first / 10000.0 >= 0.48 && first / 10000.0 <= 0.52));

  const auto q0 = make_benchmark("q0");
  const AsMap qmap(as_direction(q0.model, GaussianMap(q0.dist), 2000, 1e-4, rng), GaussianMap(q0.dist));
  const auto s8 = uniform_breakpoints(8);
  std::vector<double> hits(8, 0.0);
  for (int i = 0; i < 10000; ++i) {
    q0.dist.sample(rng, x);
    hits[as_stratum_index(qmap, s8, x)] += 1.0;
  }
  for (double h : hits) CHECK(std::abs(h - 1250.0) <= 3.0 * std::sqrt(10000 * 0.125 * 0.875));
}

}  // TEST_SUITE
