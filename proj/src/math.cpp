#include "neurstrat/math.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <limits>

#include "neurstrat/kernels.hpp"

namespace neurstrat {

double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

SampleMoments sample_moments(std::span<const double> x) {
  SampleMoments m;
  m.n = x.size();
  if (x.empty()) return m;
  const auto& k = kernels::active();
  const double n = static_cast<double>(x.size());
  m.mean = k.shifted_moments(x.data(), x.size(), 0.0).sum / n;
  if (x.size() >= 2) m.variance = k.shifted_moments(x.data(), x.size(), m.mean).sum_sq / (n - 1.0);
  return m;
}

}  // namespace neurstrat
