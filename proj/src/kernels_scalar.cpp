#include <cmath>

#include "neurstrat/kernels.hpp"

namespace neurstrat::kernels {
namespace {

void affine_scalar(const double* in, const double* wt, const double* bias, double* out,
                   std::size_t rows, std::size_t n_in, std::size_t n_out) {
  for (std::size_t b = 0; b < rows; ++b) {
    const double* x = in + b * n_in;
    double* y = out + b * n_out;
    for (std::size_t j = 0; j < n_out; ++j) y[j] = bias[j];
    for (std::size_t k = 0; k < n_in; ++k) {
      const double xk = x[k];
      const double* w = wt + k * n_out;
      for (std::size_t j = 0; j < n_out; ++j) y[j] += xk * w[j];
    }
  }
}

void outer_acc_scalar(const double* in, const double* g, double* acc, std::size_t rows,
                      std::size_t n_in, std::size_t n_out) {
  for (std::size_t b = 0; b < rows; ++b) {
    const double* x = in + b * n_in;
    const double* gb = g + b * n_out;
    for (std::size_t k = 0; k < n_in; ++k) {
      const double xk = x[k];
      double* a = acc + k * n_out;
      for (std::size_t j = 0; j < n_out; ++j) a[j] += xk * gb[j];
    }
  }
}

void column_sum_scalar(const double* g, double* acc, std::size_t rows, std::size_t cols) {
  for (std::size_t b = 0; b < rows; ++b) {
    const double* gb = g + b * cols;
    for (std::size_t j = 0; j < cols; ++j) acc[j] += gb[j];
  }
}

void tanh_scalar(double* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
}

void tanh_grad_scalar(const double* a, double* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) g[i] *= 1.0 - a[i] * a[i];
}

SumPair shifted_moments_scalar(const double* x, std::size_t n, double shift) {
  SumPair r;
  for (std::size_t i = 0; i < n; ++i) {
    r.sum += x[i];
    const double d = x[i] - shift;
    r.sum_sq += d * d;
  }
  return r;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Backend::Scalar,   affine_scalar,    outer_acc_scalar,
                                 column_sum_scalar, tanh_scalar, tanh_grad_scalar, shifted_moments_scalar};
  return table;
}

}  // namespace neurstrat::kernels
