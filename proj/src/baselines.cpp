#include "neurstrat/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "neurstrat/error.hpp"
#include "neurstrat/math.hpp"

namespace neurstrat {

std::vector<double> lhs_sample(std::size_t N, std::size_t d, Rng& rng) {
  if (N == 0 || d == 0) throw Error(ErrorKind::InvalidArgument, "LHS needs N >= 1 and d >= 1");
  std::vector<double> x(N * d);
  std::vector<std::size_t> perm(N);
  for (std::size_t k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = N; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < N; ++i)
      x[i * d + k] = (static_cast<double>(perm[i]) + rng.uniform_open()) / static_cast<double>(N);
  }
  return x;
}

EstimateResult lhs_mc_estimate(const Model& model, const ProductDistribution& dist, std::size_t N, Rng& rng) {
  if (N < 2) throw Error(ErrorKind::InvalidArgument, "LHS estimator needs N >= 2");
  if (model.dim != dist.dim()) throw Error(ErrorKind::Shape, "model and distribution dimensions differ");
  const std::size_t d = dist.dim();
  auto x = lhs_sample(N, d, rng);
  std::vector<double> q(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < d; ++k) x[i * d + k] = dist.quantile(k, x[i * d + k]);
    q[i] = eval_model(model, std::span<const double>(x.data() + i * d, d));
  }
  const auto m = sample_moments(q);
  EstimateResult r;
  r.estimator = "lhs-mc";
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

// ---------------------------------------------------------------------------

GaussianMap::GaussianMap(ProductDistribution dist) : dist_(std::move(dist)) {}

void GaussianMap::forward(std::span<const double> z, std::span<double> x) const {
  for (std::size_t i = 0; i < dim(); ++i) {
    const auto& c = dist_.component(i);
    switch (c.kind()) {
      case ComponentKind::Normal: x[i] = c.first() + c.second() * z[i]; break;
      case ComponentKind::LogNormal: x[i] = std::exp(c.first() + c.second() * z[i]); break;
      default: x[i] = c.quantile(normal_cdf(z[i])); break;
    }
  }
}

void GaussianMap::inverse(std::span<const double> x, std::span<double> z) const {
  for (std::size_t i = 0; i < dim(); ++i) {
    const auto& c = dist_.component(i);
    switch (c.kind()) {
      case ComponentKind::Normal: z[i] = (x[i] - c.first()) / c.second(); break;
      case ComponentKind::LogNormal:
        if (!(x[i] > 0.0)) throw Error(ErrorKind::Domain, "log-normal component needs a positive value");
        z[i] = (std::log(x[i]) - c.first()) / c.second();
        break;
      default: z[i] = normal_quantile(c.cdf(x[i])); break;
    }
  }
}

std::vector<double> GaussianMap::forward(std::span<const double> z) const {
  std::vector<double> x(dim());
  forward(z, x);
  return x;
}

std::vector<double> GaussianMap::inverse(std::span<const double> x) const {
  std::vector<double> z(dim());
  inverse(x, z);
  return z;
}

void GaussianMap::jacobian_diagonal(std::span<const double> z, std::span<double> out) const {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  for (std::size_t i = 0; i < dim(); ++i) {
    const auto& c = dist_.component(i);
    switch (c.kind()) {
      case ComponentKind::Normal: out[i] = c.second(); break;
      case ComponentKind::LogNormal: out[i] = c.second() * std::exp(c.first() + c.second() * z[i]); break;
      default: {
        const double x = c.quantile(normal_cdf(z[i]));
        out[i] = inv_sqrt_2pi * std::exp(-0.5 * z[i] * z[i]) / c.pdf(x);
      }
    }
  }
}

// ---------------------------------------------------------------------------

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t d) {
  if (a.size() != d * d) throw Error(ErrorKind::Shape, "matrix is not d x d");
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) s += a[i * d + j] * a[i * d + j];
    return s;
  };
  double scale = 0.0;
  for (double x : a) scale += x * x;

  bool converged = d < 2;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    if (off_norm() <= 1e-30 * std::max(scale, 1e-300)) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p];
          const double akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k];
          const double aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p];
          const double vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged && off_norm() > 1e-20 * std::max(scale, 1e-300))
    throw Error(ErrorKind::Numeric, "Jacobi eigen-solver did not converge");

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x * d + x] > a[y * d + y]; });
  SymmetricEigen e;
  e.values.resize(d);
  e.vectors.resize(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    e.values[j] = a[order[j] * d + order[j]];
    for (std::size_t k = 0; k < d; ++k) e.vectors[k * d + j] = v[k * d + order[j]];
  }
  return e;
}

AsDirection as_direction(const Model& model, const GaussianMap& gmap, std::size_t n_samples, double fd_step, Rng& rng) {
  const std::size_t d = gmap.dim();
  if (model.dim != d) throw Error(ErrorKind::Shape, "model and map dimensions differ");
  if (n_samples < d) throw Error(ErrorKind::InvalidArgument, "active subspace needs at least d gradient samples");
  if (!(fd_step > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step must be positive");

  std::vector<double> B(d * d, 0.0);
  std::vector<double> z(d), x(d), g(d), jac(d), zp(d);
  for (std::size_t n = 0; n < n_samples; ++n) {
    for (double& zi : z) zi = rng.normal();
    if (model.has_gradient()) {
      gmap.forward(z, x);
      model.gradient(x, g);
      gmap.jacobian_diagonal(z, jac);
      for (std::size_t i = 0; i < d; ++i) g[i] *= jac[i];
    } else {
      for (std::size_t i = 0; i < d; ++i) {
        zp = z;
        zp[i] = z[i] + fd_step;
        gmap.forward(zp, x);
        const double qp = eval_model(model, x);
        zp[i] = z[i] - fd_step;
        gmap.forward(zp, x);
        const double qm = eval_model(model, x);
        g[i] = (qp - qm) / (2.0 * fd_step);
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(g[i])) throw Error(ErrorKind::Numeric, "nonfinite gradient at sample " + std::to_string(n));
      for (std::size_t j = 0; j < d; ++j) B[i * d + j] += g[i] * g[j];
    }
  }
  for (double& b : B) b /= static_cast<double>(n_samples);

  const auto eig = jacobi_eigen(std::move(B), d);
  AsDirection dir;
  dir.n_samples = n_samples;
  dir.eigenvalues = eig.values;
  for (double& lam : dir.eigenvalues) lam = std::max(lam, 0.0);
  dir.v.resize(d);
  double norm = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    dir.v[k] = eig.vectors[k * d];
    norm += dir.v[k] * dir.v[k];
  }
  norm = std::sqrt(norm);
  for (double& c : dir.v) c /= norm;
  for (double c : dir.v) {
    if (c != 0.0) {
      if (c < 0.0)
        for (double& cc : dir.v) cc = -cc;
      break;
    }
  }
  return dir;
}

AsMap::AsMap(AsDirection direction, GaussianMap gmap) : dir_(std::move(direction)), gmap_(std::move(gmap)) {
  if (dir_.v.size() != gmap_.dim()) throw Error(ErrorKind::Shape, "direction and map dimensions differ");
}

void AsMap::quantiles(std::span<const double> x, std::size_t rows, std::span<double> u) const {
  const std::size_t d = dim();
  if (x.size() != rows * d || u.size() != rows) throw Error(ErrorKind::Shape, "quantiles: size mismatch");
  std::vector<double> z(d);
  for (std::size_t r = 0; r < rows; ++r) {
    gmap_.inverse(x.subspan(r * d, d), z);
    double t = 0.0;
    for (std::size_t k = 0; k < d; ++k) t += dir_.v[k] * z[k];
    u[r] = normal_cdf(t);
  }
}

std::size_t as_stratum_index(const AsMap& map, const Stratification& strat, std::span<const double> x) {
  return stratum_index(strat, map.quantile(x));
}

}  // namespace neurstrat
