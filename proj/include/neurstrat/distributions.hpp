#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neurstrat/rng.hpp"

namespace neurstrat {

enum class ComponentKind { Uniform, LogUniform, Normal, LogNormal };

// One factor of a product measure. Parameters are (a, b) for the bounded
// kinds and (m, sigma) for the (log-)normal kinds, with sigma the standard
// deviation of the underlying normal.
class Component {
 public:
  static Component uniform(double a, double b);
  static Component log_uniform(double a, double b);
  static Component normal(double m, double sigma);
  static Component log_normal(double m, double sigma);

  ComponentKind kind() const { return kind_; }
  double first() const { return p1_; }
  double second() const { return p2_; }
  bool bounded() const { return kind_ == ComponentKind::Uniform || kind_ == ComponentKind::LogUniform; }

  double quantile(double p) const;
  double cdf(double x) const;
  double pdf(double x) const;
  double mean() const;
  double stddev() const;
  double sample(Rng& rng) const { return quantile(rng.uniform_open()); }

  // Support for bounded kinds, mean +/- 4 sd otherwise.
  std::pair<double, double> normalization_range() const;

  std::string describe() const;

 private:
  Component(ComponentKind kind, double p1, double p2) : kind_(kind), p1_(p1), p2_(p2) {}

  ComponentKind kind_;
  double p1_;
  double p2_;
};

class ProductDistribution {
 public:
  explicit ProductDistribution(std::vector<Component> components);
  static ProductDistribution uniform_cube(std::size_t dim, double a, double b);

  std::size_t dim() const { return components_.size(); }
  const Component& component(std::size_t i) const { return components_[i]; }
  const std::vector<Component>& components() const { return components_; }

  void sample(Rng& rng, std::span<double> out) const;
  std::vector<double> sample(Rng& rng) const;
  // rows x dim, row-major.
  std::vector<double> sample_batch(Rng& rng, std::size_t rows) const;
  double quantile(std::size_t i, double p) const { return components_[i].quantile(p); }

 private:
  std::vector<Component> components_;
};

}  // namespace neurstrat
