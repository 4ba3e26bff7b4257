#include "neurstrat/distributions.hpp"

#include <cmath>
#include <sstream>

#include "neurstrat/error.hpp"
#include "neurstrat/math.hpp"

namespace neurstrat {
namespace {

void require_interval(double a, double b, const char* what) {
  if (!(std::isfinite(a) && std::isfinite(b) && a < b)) {
    std::ostringstream os;
    os << what << " needs a < b, got [" << a << ", " << b << "]";
    throw Error(ErrorKind::InvalidArgument, os.str());
  }
}

void require_scale(double m, double sigma, const char* what) {
  if (!(std::isfinite(m) && std::isfinite(sigma) && sigma > 0.0)) {
    std::ostringstream os;
    os << what << " needs sigma > 0, got " << sigma;
    throw Error(ErrorKind::InvalidArgument, os.str());
  }
}

}  // namespace

Component Component::uniform(double a, double b) {
  require_interval(a, b, "uniform");
  return {ComponentKind::Uniform, a, b};
}

Component Component::log_uniform(double a, double b) {
  require_interval(a, b, "log-uniform");
  if (a <= 0.0) throw Error(ErrorKind::InvalidArgument, "log-uniform needs a > 0");
  return {ComponentKind::LogUniform, a, b};
}

Component Component::normal(double m, double sigma) {
  require_scale(m, sigma, "normal");
  return {ComponentKind::Normal, m, sigma};
}

Component Component::log_normal(double m, double sigma) {
  require_scale(m, sigma, "log-normal");
  return {ComponentKind::LogNormal, m, sigma};
}

double Component::quantile(double p) const {
  switch (kind_) {
    case ComponentKind::Uniform:
      if (p >= 1.0) return p2_;
      return p1_ + (p2_ - p1_) * p;
    case ComponentKind::LogUniform: {
      if (p <= 0.0) return p1_;
      if (p >= 1.0) return p2_;
      const double la = std::log(p1_);
      return std::exp(la + (std::log(p2_) - la) * p);
    }
    case ComponentKind::Normal:
      return p1_ + p2_ * normal_quantile(p);
    case ComponentKind::LogNormal:
      return std::exp(p1_ + p2_ * normal_quantile(p));
  }
  return 0.0;
}

double Component::cdf(double x) const {
  switch (kind_) {
    case ComponentKind::Uniform:
      if (x <= p1_) return 0.0;
      if (x >= p2_) return 1.0;
      return (x - p1_) / (p2_ - p1_);
    case ComponentKind::LogUniform:
      if (x <= p1_) return 0.0;
      if (x >= p2_) return 1.0;
      return std::log(x / p1_) / std::log(p2_ / p1_);
    case ComponentKind::Normal:
      return normal_cdf((x - p1_) / p2_);
    case ComponentKind::LogNormal:
      if (x <= 0.0) return 0.0;
      return normal_cdf((std::log(x) - p1_) / p2_);
  }
  return 0.0;
}

double Component::pdf(double x) const {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  switch (kind_) {
    case ComponentKind::Uniform:
      return (x < p1_ || x > p2_) ? 0.0 : 1.0 / (p2_ - p1_);
    case ComponentKind::LogUniform:
      return (x < p1_ || x > p2_) ? 0.0 : 1.0 / (x * std::log(p2_ / p1_));
    case ComponentKind::Normal: {
      const double z = (x - p1_) / p2_;
      return inv_sqrt_2pi * std::exp(-0.5 * z * z) / p2_;
    }
    case ComponentKind::LogNormal: {
      if (x <= 0.0) return 0.0;
      const double z = (std::log(x) - p1_) / p2_;
      return inv_sqrt_2pi * std::exp(-0.5 * z * z) / (p2_ * x);
    }
  }
  return 0.0;
}

double Component::mean() const {
  switch (kind_) {
    case ComponentKind::Uniform:
      return 0.5 * (p1_ + p2_);
    case ComponentKind::LogUniform:
      return (p2_ - p1_) / std::log(p2_ / p1_);
    case ComponentKind::Normal:
      return p1_;
    case ComponentKind::LogNormal:
      return std::exp(p1_ + 0.5 * p2_ * p2_);
  }
  return 0.0;
}

double Component::stddev() const {
  switch (kind_) {
    case ComponentKind::Uniform:
      return (p2_ - p1_) / std::sqrt(12.0);
    case ComponentKind::LogUniform: {
      const double l = std::log(p2_ / p1_);
      const double m2 = (p2_ * p2_ - p1_ * p1_) / (2.0 * l);
      const double m = mean();
      return std::sqrt(std::max(0.0, m2 - m * m));
    }
    case ComponentKind::Normal:
      return p2_;
    case ComponentKind::LogNormal:
      return mean() * std::sqrt(std::expm1(p2_ * p2_));
  }
  return 0.0;
}

std::pair<double, double> Component::normalization_range() const {
  if (bounded()) return {p1_, p2_};
  const double m = mean();
  const double s = stddev();
  return {m - 4.0 * s, m + 4.0 * s};
}

std::string Component::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case ComponentKind::Uniform:
      os << "uniform(" << p1_ << ", " << p2_ << ")";
      break;
    case ComponentKind::LogUniform:
      os << "log-uniform(" << p1_ << ", " << p2_ << ")";
      break;
    case ComponentKind::Normal:
      os << "normal(" << p1_ << ", " << p2_ << ")";
      break;
    case ComponentKind::LogNormal:
      os << "log-normal(" << p1_ << ", " << p2_ << ")";
      break;
  }
  return os.str();
}

ProductDistribution::ProductDistribution(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw Error(ErrorKind::InvalidArgument, "distribution needs at least one component");
}

ProductDistribution ProductDistribution::uniform_cube(std::size_t dim, double a, double b) {
  return ProductDistribution(std::vector<Component>(dim, Component::uniform(a, b)));
}

void ProductDistribution::sample(Rng& rng, std::span<double> out) const {
  for (std::size_t i = 0; i < components_.size(); ++i) out[i] = components_[i].sample(rng);
}

std::vector<double> ProductDistribution::sample(Rng& rng) const {
  std::vector<double> x(dim());
  sample(rng, x);
  return x;
}

std::vector<double> ProductDistribution::sample_batch(Rng& rng, std::size_t rows) const {
  std::vector<double> x(rows * dim());
  for (std::size_t r = 0; r < rows; ++r) sample(rng, std::span<double>(x.data() + r * dim(), dim()));
  return x;
}

}  // namespace neurstrat
