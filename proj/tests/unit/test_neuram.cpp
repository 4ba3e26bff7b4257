#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "helpers.hpp"
#include "neurstrat/models.hpp"
#include "neurstrat/neuram.hpp"
#include "neurstrat/rng.hpp"

using namespace neurstrat;
using testing::check_error;
using testing::trained_q0;

namespace {

NeurAmModel random_model(std::size_t d, std::uint64_t seed) {
  auto enc = nn::mlp_init({d, 5, 1}, seed);
  auto dec = nn::mlp_init({1, 5, d}, seed + 1);
  auto sur = nn::mlp_init({1, 5, 1}, seed + 2);
  Rng rng(seed);
  for (auto* m : {&enc, &dec, &sur})
    for (std::size_t l = 0; l < m->num_layers(); ++l)
      for (double& b : m->biases(l)) b = rng.uniform(-0.3, 0.3);
  AffineNormalizer in{std::vector<double>(d, 0.1), std::vector<double>(d, 1.7)};
  AffineNormalizer out{{0.4}, {2.5}};
  return NeurAmModel(enc, dec, sur, in, out);
}

}  // namespace

TEST_SUITE("neuram") {

TEST_CASE("analytic linear triple has zero loss") {
  const auto a = analytic_linear_neuram();
  const auto lin = make_benchmark("linear");
  Rng rng(1);
  const auto data = make_dataset(lin.model, lin.dist, 500, rng);
  const auto terms = neuram_loss_terms(*a.model, data);
  CHECK(terms.total() < 1e-14);
  CHECK(a.model->surrogate_eval(std::vector<double>{0.3, -0.55}) == 0.3 + -0.55);
  const auto p = a.model->decode(0.8);
  CHECK(p[0] == 0.4);
  CHECK(p[1] == 0.4);
}

TEST_CASE("constant model on constant data has zero loss") {
  const double c = 3.25;
  NeurAmModel m(nn::Mlp({2, 1}), nn::Mlp({1, 2}), nn::Mlp({1, 1}), AffineNormalizer::identity(2),
                AffineNormalizer{{c}, {1.0}});
  Dataset data{2, {0.1, 0.2, -0.5, 0.9, 0.3, 0.3}, {c, c, c}};
  CHECK(neuram_loss(m, data) == 0.0);
  CHECK(m.surrogate_eval(std::vector<double>{0.7, -0.1}) == c);
  CHECK(m.surrogate_eval(std::vector<double>{-0.9, 0.4}) == c);
}

TEST_CASE("loss matches a direct per-point recomputation") {
  const std::size_t d = 3;
  const auto m = random_model(d, 21);
  Rng rng(8);
  Dataset data{d, {}, {}};
  for (int i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < d; ++k) data.inputs.push_back(rng.uniform(-1.0, 1.0));
    data.outputs.push_back(rng.uniform(-2.0, 2.0));
  }

  double projected = 0.0, direct = 0.0, fixed_point = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    std::vector<double> xn(d);
    for (std::size_t k = 0; k < d; ++k) xn[k] = (data.inputs[i * d + k] - 0.1) / 1.7;
    const double yn = (data.outputs[i] - 0.4) / 2.5;
    const double z1 = m.encoder().forward(xn)[0];
    const auto x1 = m.decoder().forward(std::vector<double>{z1});
    const double z2 = m.encoder().forward(x1)[0];
    const auto x2 = m.decoder().forward(std::vector<double>{z2});
    const double s1 = m.surrogate().forward(std::vector<double>{z1})[0];
    const double s2 = m.surrogate().forward(std::vector<double>{z2})[0];
    projected += (yn - s2) * (yn - s2);
    direct += (yn - s1) * (yn - s1);
    for (std::size_t k = 0; k < d; ++k) fixed_point += (x1[k] - x2[k]) * (x1[k] - x2[k]);
  }
  const auto terms = neuram_loss_terms(m, data);
  CHECK(terms.projected == doctest::Approx(projected / 5).epsilon(1e-12));
  CHECK(terms.direct == doctest::Approx(direct / 5).epsilon(1e-12));
  CHECK(terms.fixed_point == doctest::Approx(fixed_point / 5).epsilon(1e-12));
  CHECK(std::abs(neuram_loss(m, data) - (projected + direct + fixed_point) / 5) < 1e-12);
}

TEST_CASE("training on Q0 gives an accurate surrogate") {
  const auto& t = trained_q0();
  const auto& report = t.hf_model->training_report();
  CHECK(report.epochs == 10000);
  CHECK(report.loss_history.size() == report.epochs);
  CHECK(report.final_loss == report.loss_history.back());
  CHECK(report.dataset_size == 100);
  CHECK(report.loss_history.back() <= report.loss_history.front());

  Rng rng(77);
  double err2 = 0.0, ref2 = 0.0;
  std::vector<double> x(2);
  for (int i = 0; i < 10000; ++i) {
    t.hf.dist.sample(rng, x);
    const double q = t.hf.model.eval(x);
    const double s = t.hf_model->surrogate_eval(x);
    err2 += (q - s) * (q - s);
    ref2 += q * q;
  }
  const double rel_rms = std::sqrt(err2 / ref2);
  MESSAGE("Q0 surrogate relative RMS error: " << rel_rms);
  CHECK(rel_rms < 0.05);
}

TEST_CASE("training on constant data drives the loss to zero") {
  const auto dist = ProductDistribution::uniform_cube(2, -1.0, 1.0);
  Rng rng(4);
  Dataset data{2, dist.sample_batch(rng, 50), std::vector<double>(50, 2.5)};
  TrainConfig cfg;
  cfg.seed = 9;
  const auto m = train_neuram(data, dist, cfg);
  CHECK(m.training_report().final_loss < 1e-6);
  CHECK(m.surrogate_eval(std::vector<double>{0.2, 0.2}) == doctest::Approx(2.5).epsilon(1e-3));
}

TEST_CASE("training is deterministic") {
  const auto q0 = make_benchmark("q0");
  Rng rng(12);
  const auto data = make_dataset(q0.model, q0.dist, 40, rng);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.seed = 5;
  const auto a = train_neuram(data, q0.dist, cfg);
  const auto b = train_neuram(data, q0.dist, cfg);
  CHECK(a.training_report().loss_history == b.training_report().loss_history);
  CHECK(a == b);
  cfg.seed = 6;
  CHECK(train_neuram(data, q0.dist, cfg).training_report().loss_history != a.training_report().loss_history);
}

TEST_CASE("training input validation") {
  const auto dist = ProductDistribution::uniform_cube(2, -1.0, 1.0);
  Dataset data{2, {0.0, 0.0, 1.0, 1.0}, {1.0, 2.0}};
  TrainConfig cfg;
  cfg.epochs = 2;
  check_error(ErrorKind::Shape, [&] { train_neuram(data, ProductDistribution::uniform_cube(3, -1.0, 1.0), cfg); });
  cfg.learning_rate = 0.0;
  check_error(ErrorKind::InvalidArgument, [&] { train_neuram(data, dist, cfg); });
  Dataset bad{2, {0.0, 0.0, 1.0, std::nan("")}, {1.0, 2.0}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("empirical CDF evaluation rules") {
  EmpiricalCdf cdf({3.0, 1.0, 0.0, 2.0});
  CHECK(cdf.sorted_latents() == std::vector<double>{0.0, 1.0, 2.0, 3.0});
  CHECK(cdf_eval(cdf, 1.5) == 0.5);
  CHECK(cdf_eval(cdf, -0.1) == 0.0);
  CHECK(cdf_eval(cdf, 3.1) == 1.0);
  CHECK(cdf_inverse(cdf, 0.0) == 0.0);
  CHECK(cdf_inverse(cdf, 1.0) == 3.0);
  CHECK(cdf_inverse(cdf, 0.5) == 1.5);

  double prev = -1.0;
  for (int i = 0; i <= 400; ++i) {
    const double v = cdf_eval(cdf, -0.5 + 4.0 * i / 400.0);
    CHECK(v >= prev);
    CHECK((v >= 0.0 && v <= 1.0));
    prev = v;
  }
  prev = -1.0;
  for (int i = 0; i <= 400; ++i) {
    const double v = cdf_inverse(cdf, i / 400.0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("empirical CDF round trips") {
  Rng rng(6);
  std::vector<double> latents(5000);
  for (double& v : latents) v = rng.normal();
  EmpiricalCdf cdf(latents);
  const double lo = 0.5 / 5000.0, hi = 1.0 - lo;
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(lo, hi);
    CHECK(std::abs(cdf_eval(cdf, cdf_inverse(cdf, u)) - u) < 1e-10);
  }
  for (std::size_t k = 1; k + 1 < cdf.size(); k += 37) {
    const double t = cdf.sorted_latents()[k];
    CHECK(std::abs(cdf_inverse(cdf, cdf_eval(cdf, t)) - t) < 1e-12);
  }
}

TEST_CASE("degenerate latents are rejected") {
  check_error(ErrorKind::DegenerateLatent, [] { EmpiricalCdf(std::vector<double>(100, 0.7)); });
  NeurAmModel constant(nn::Mlp({2, 1}), nn::Mlp({1, 2}), nn::Mlp({1, 1}), AffineNormalizer::identity(2),
                       AffineNormalizer::identity(1));
  check_error(ErrorKind::DegenerateLatent,
              [&] { build_cdf(constant, ProductDistribution::uniform_cube(2, -1.0, 1.0), 1000, 1); });
}

TEST_CASE("build_cdf on simple encoders") {
  NeurAmModel ident(nn::Mlp({1, 1}, {{1.0}}, {{0.0}}), nn::Mlp({1, 1}, {{1.0}}, {{0.0}}), nn::Mlp({1, 1}),
                    AffineNormalizer::identity(1), AffineNormalizer::identity(1));
  const auto cdf = build_cdf(ident, ProductDistribution::uniform_cube(1, 0.0, 1.0), 100000, 2);
  CHECK(cdf.size() == 100000);
  const double half = cdf_eval(cdf, 0.5);
  CHECK((half >= 0.49 && half <= 0.51));

  const auto a = analytic_linear_neuram();
  const auto tri = build_cdf(*a.model, ProductDistribution::uniform_cube(2, -1.0, 1.0), 1000000, 3);
  const double f0 = cdf_eval(tri, 0.0);
  CHECK((f0 >= 0.497 && f0 <= 0.503));
}

TEST_CASE("triangular CDF of the linear example") {
  const auto a = analytic_linear_neuram();
  CHECK(cdf_eval(*a.cdf, 0.0) == 0.5);
  CHECK(cdf_inverse(*a.cdf, 0.25) == doctest::Approx(std::sqrt(2.0) - 2.0).epsilon(1e-15));
  CHECK(std::sqrt(2.0) - 2.0 == doctest::Approx(-0.585786).epsilon(1e-6));
  for (double t : {-1.9, -1.0, -0.3, 0.0, 0.4, 1.5}) {
    const double closed = t <= 0.0 ? t * t / 8.0 + t / 2.0 + 0.5 : -t * t / 8.0 + t / 2.0 + 0.5;
    CHECK(cdf_eval(*a.cdf, t) == doctest::Approx(closed).epsilon(1e-15));
    CHECK(cdf_inverse(*a.cdf, closed) == doctest::Approx(t).epsilon(1e-12));
  }
  CHECK(cdf_eval(*a.cdf, -3.0) == 0.0);
  CHECK(cdf_eval(*a.cdf, 3.0) == 1.0);
}

TEST_CASE("F(E(X)) is uniform for a trained model") {
  const auto& t = trained_q0();
  const NeuramMap map(t.hf_model, t.hf_cdf);
  Rng rng(123);
  const auto x = t.hf.dist.sample_batch(rng, 10000);
  std::vector<double> u(10000);
  map.quantiles(x, 10000, u);
  const double ks = testing::ks_statistic(u, [](double v) { return v; });
  MESSAGE("KS statistic of F(E(X)): " << ks);
  CHECK(ks < testing::ks_critical_1pct(10000));
}

TEST_CASE("reparameterization with identical models projects onto the manifold") {
  const auto& t = trained_q0();
  const NeuramMap map(t.hf_model, t.hf_cdf);
  Rng rng(5);
  std::vector<double> x(2);
  for (int i = 0; i < 200; ++i) {
    t.hf.dist.sample(rng, x);
    const double u = map.quantile(x);
    if (u <= 1e-4 || u >= 1.0 - 1e-4) continue;
    const double r = reparameterize_lf(map, map, t.lf.model, x);
    const double direct = eval_model(t.lf.model, t.hf_model->decode(t.hf_model->encode(x)));
    CHECK(r == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("reparameterized LF depends only on the HF quantile") {
  const auto a = analytic_linear_neuram();
  const auto hf = std::make_shared<const NeuramMap>(a.map());
  const auto lf = std::make_shared<const NeuramMap>(a.map());
  const auto model = make_reparameterized_model(hf, lf, make_benchmark("q0_lf").model);
  CHECK(model.name == "q0_lf_reparam");
  CHECK(model.fidelity == Fidelity::Low);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform(-1.0, 1.0), q = rng.uniform(-1.0, 1.0);
    CHECK(model.eval(std::vector<double>{p, q}) == model.eval(std::vector<double>{q, p}));
  }
}

TEST_CASE("batched reparameterized evaluation matches the pointwise one") {
  const auto& t = trained_q0();
  const auto hf = std::make_shared<const NeuramMap>(t.hf_model, t.hf_cdf);
  const auto lf = std::make_shared<const NeuramMap>(t.lf_model, t.lf_cdf);
  const auto model = make_reparameterized_model(hf, lf, t.lf.model);
  REQUIRE(static_cast<bool>(model.eval_batch));
  Rng rng(8);
  const auto x = t.hf.dist.sample_batch(rng, 333);
  std::vector<double> batch(333);
  eval_model_rows(model, x, 333, batch);
  for (std::size_t i = 0; i < 333; ++i) {
    CHECK(batch[i] == doctest::Approx(model.eval(std::span<const double>(x.data() + 2 * i, 2))).epsilon(1e-12));
  }
}

TEST_CASE("reparameterization raises the HF/LF correlation on Q0") {
  const auto& t = trained_q0();
  const auto hf = std::make_shared<const NeuramMap>(t.hf_model, t.hf_cdf);
  const auto lf = std::make_shared<const NeuramMap>(t.lf_model, t.lf_cdf);
  const auto reparam = make_reparameterized_model(hf, lf, t.lf.model);
  Rng rng(44);
  const std::size_t n = 10000;
  const auto x = t.hf.dist.sample_batch(rng, n);
  std::vector<double> qh(n), ql(n), qr(n);
  eval_model_rows(t.hf.model, x, n, qh);
  eval_model_rows(t.lf.model, x, n, ql);
  eval_model_rows(reparam, x, n, qr);
  const double raw = testing::pearson(qh, ql);
  const double rep = testing::pearson(qh, qr);
  MESSAGE("correlation raw " << raw << ", reparameterized " << rep);
  CHECK(rep > raw);
}

}  // TEST_SUITE
