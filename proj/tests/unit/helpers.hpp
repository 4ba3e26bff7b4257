#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <span>
#include <vector>

#include "doctest.h"
#include "neurstrat/error.hpp"

namespace testing {

inline void check_error(neurstrat::ErrorKind kind, const std::function<void()>& fn) {
  bool thrown = false;
  try {
    fn();
  } catch (const neurstrat::Error& e) {
    thrown = true;
    CHECK_MESSAGE(e.kind() == kind, e.what());
  }
  CHECK_MESSAGE(thrown, "expected " << std::string(neurstrat::to_string(kind)));
}

// Kolmogorov-Smirnov distance of a sample against the CDF `F`.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& F) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = F(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic 1% critical value.
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace testing
