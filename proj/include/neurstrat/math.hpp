#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

namespace neurstrat {

// Standard normal CDF and its inverse.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_quantile(double p);

struct SampleMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased, 0 when n < 2
};

// Two-pass mean and variance.
SampleMoments sample_moments(std::span<const double> x);

}  // namespace neurstrat
