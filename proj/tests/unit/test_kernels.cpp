#include <cmath>
#include <vector>

#include "doctest.h"
#include "neurstrat/kernels.hpp"
#include "neurstrat/rng.hpp"

using namespace neurstrat;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  }
  return worst;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar and avx2 kernels agree") {
  const kernels::KernelTable* fast = kernels::avx2_table();
  if (fast == nullptr || !kernels::cpu_has_avx2()) {
    MESSAGE("avx2 kernels unavailable, skipping");
    return;
  }
  const kernels::KernelTable& ref = kernels::scalar_table();
  Rng rng(99);
  const std::size_t shapes[][3] = {{1, 1, 1}, {7, 2, 8}, {33, 8, 8}, {5, 8, 1}, {13, 3, 13}, {64, 1, 17}};

  for (const auto& shape : shapes) {
    const std::size_t rows = shape[0], n_in = shape[1], n_out = shape[2];
    CAPTURE(rows);
    CAPTURE(n_in);
    CAPTURE(n_out);
    const auto in = random_vector(rng, rows * n_in);
    const auto wt = random_vector(rng, n_in * n_out);
    const auto bias = random_vector(rng, n_out);
    std::vector<double> a(rows * n_out), b(rows * n_out);
    ref.affine(in.data(), wt.data(), bias.data(), a.data(), rows, n_in, n_out);
    fast->affine(in.data(), wt.data(), bias.data(), b.data(), rows, n_in, n_out);
    CHECK(max_rel_diff(a, b) < 1e-14);

    const auto g = random_vector(rng, rows * n_out);
    std::vector<double> acc_a(n_in * n_out, 0.5), acc_b(n_in * n_out, 0.5);
    ref.outer_acc(in.data(), g.data(), acc_a.data(), rows, n_in, n_out);
    fast->outer_acc(in.data(), g.data(), acc_b.data(), rows, n_in, n_out);
    CHECK(max_rel_diff(acc_a, acc_b) < 1e-13);

    std::vector<double> cs_a(n_out, 0.0), cs_b(n_out, 0.0);
    ref.column_sum(g.data(), cs_a.data(), rows, n_out);
    fast->column_sum(g.data(), cs_b.data(), rows, n_out);
    CHECK(max_rel_diff(cs_a, cs_b) < 1e-13);

    auto act = random_vector(rng, rows * n_out);
    auto ga = g, gb = g;
    ref.tanh_grad(act.data(), ga.data(), ga.size());
    fast->tanh_grad(act.data(), gb.data(), gb.size());
    CHECK(max_rel_diff(ga, gb) < 1e-15);

    const double shift = 0.1;
    const auto ma = ref.shifted_moments(in.data(), in.size(), shift);
    const auto mb = fast->shifted_moments(in.data(), in.size(), shift);
    CHECK(std::abs(ma.sum - mb.sum) < 1e-12);
    CHECK(std::abs(ma.sum_sq - mb.sum_sq) < 1e-12);
  }
}

TEST_CASE("vectorized tanh stays within a few ulp of the scalar one") {
  const kernels::KernelTable* fast = kernels::avx2_table();
  if (fast == nullptr || !kernels::cpu_has_avx2()) {
    MESSAGE("avx2 kernels unavailable, skipping");
    return;
  }
  Rng rng(7);
  std::vector<double> v;
  for (int i = 0; i < 200000; ++i) {
    const double mag = std::pow(10.0, rng.uniform(-12.0, 1.7));
    v.push_back(rng.uniform() < 0.5 ? mag : -mag);
  }
  for (double x : {0.0, -0.0, 0.625, -0.625, 0.6249999999999999, 22.0, 1e300, -1e300}) v.push_back(x);
  auto a = v, b = v;
  kernels::scalar_table().tanh(a.data(), a.size());
  fast->tanh(b.data(), b.size());
  double worst_ulp = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(std::signbit(a[i]) == std::signbit(b[i]));
    const double ulp = std::nextafter(std::abs(a[i]), 2.0) - std::abs(a[i]);
    worst_ulp = std::max(worst_ulp, std::abs(a[i] - b[i]) / ulp);
  }
  CHECK(worst_ulp <= 4.0);
}

TEST_CASE("backend selection") {
  const auto original = kernels::active_backend();
  kernels::set_backend(kernels::Backend::Scalar);
  CHECK(kernels::active_backend() == kernels::Backend::Scalar);
  CHECK(kernels::backend_name(kernels::Backend::Scalar) == "scalar");
  kernels::set_backend(original);
  CHECK(kernels::active_backend() == original);
}

}  // TEST_SUITE
