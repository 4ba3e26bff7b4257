// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include <immintrin.h>

#include <cmath>

#include "neurstrat/kernels.hpp"

namespace neurstrat::kernels {
namespace {

void affine_avx2(const double* in, const double* wt, const double* bias, double* out,
                 std::size_t rows, std::size_t n_in, std::size_t n_out) {
  const std::size_t vec_end = n_out - n_out % 4;
  for (std::size_t b = 0; b < rows; ++b) {
    const double* x = in + b * n_in;
    double* y = out + b * n_out;
    std::size_t j = 0;
    // Two accumulators per step covers the 8-wide hidden layers in one pass.
    for (; j + 8 <= n_out; j += 8) {
      __m256d acc0 = _mm256_loadu_pd(bias + j);
      __m256d acc1 = _mm256_loadu_pd(bias + j + 4);
      for (std::size_t k = 0; k < n_in; ++k) {
        const __m256d xk = _mm256_broadcast_sd(x + k);
        const double* w = wt + k * n_out + j;
        acc0 = _mm256_fmadd_pd(xk, _mm256_loadu_pd(w), acc0);
        acc1 = _mm256_fmadd_pd(xk, _mm256_loadu_pd(w + 4), acc1);
      }
      _mm256_storeu_pd(y + j, acc0);
      _mm256_storeu_pd(y + j + 4, acc1);
    }
    for (; j < vec_end; j += 4) {
      __m256d acc = _mm256_loadu_pd(bias + j);
      for (std::size_t k = 0; k < n_in; ++k) {
        acc = _mm256_fmadd_pd(_mm256_broadcast_sd(x + k), _mm256_loadu_pd(wt + k * n_out + j), acc);
      }
      _mm256_storeu_pd(y + j, acc);
    }
    for (; j < n_out; ++j) {
      double acc = bias[j];
      for (std::size_t k = 0; k < n_in; ++k) acc += x[k] * wt[k * n_out + j];
      y[j] = acc;
    }
  }
}

void outer_acc_avx2(const double* in, const double* g, double* acc, std::size_t rows,
                    std::size_t n_in, std::size_t n_out) {
  const std::size_t vec_end = n_out - n_out % 4;
  for (std::size_t b = 0; b < rows; ++b) {
    const double* x = in + b * n_in;
    const double* gb = g + b * n_out;
    for (std::size_t k = 0; k < n_in; ++k) {
      const __m256d xk = _mm256_broadcast_sd(x + k);
      double* a = acc + k * n_out;
      std::size_t j = 0;
      for (; j < vec_end; j += 4) {
        _mm256_storeu_pd(a + j, _mm256_fmadd_pd(xk, _mm256_loadu_pd(gb + j), _mm256_loadu_pd(a + j)));
      }
      for (; j < n_out; ++j) a[j] += x[k] * gb[j];
    }
  }
}

void column_sum_avx2(const double* g, double* acc, std::size_t rows, std::size_t cols) {
  const std::size_t vec_end = cols - cols % 4;
  for (std::size_t b = 0; b < rows; ++b) {
    const double* gb = g + b * cols;
    std::size_t j = 0;
    for (; j < vec_end; j += 4) {
      _mm256_storeu_pd(acc + j, _mm256_add_pd(_mm256_loadu_pd(acc + j), _mm256_loadu_pd(gb + j)));
    }
    for (; j < cols; ++j) acc[j] += gb[j];
  }
}

// exp(y) for 0 <= y <= 44: y = n ln2 + r with |r| <= ln2/2, degree-13 Taylor in r.
__m256d exp_small_range(__m256d y) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(y, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, y);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);
  static constexpr double inv_fact[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                        1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                        1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                        1.0 / 24.0,         1.0 / 6.0,         0.5,
                                        1.0,                1.0};
  __m256d p = _mm256_set1_pd(inv_fact[0]);
  for (std::size_t k = 1; k < 14; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(inv_fact[k]));
  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(ni), _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

// Rational form on |x| < 0.625, 1 - 2 / (exp(2|x|) + 1) beyond, sign restored.
void tanh_avx2(double* v, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d cut = _mm256_set1_pd(0.625);
  const __m256d cap = _mm256_set1_pd(22.0);
  const __m256d p0 = _mm256_set1_pd(-9.64399179425052238628e-1);
  const __m256d p1 = _mm256_set1_pd(-9.92877231001918586564e1);
  const __m256d p2 = _mm256_set1_pd(-1.61468768441708447952e3);
  const __m256d q1 = _mm256_set1_pd(1.12811678491632931402e2);
  const __m256d q2 = _mm256_set1_pd(2.23548839060100448583e3);
  const __m256d q3 = _mm256_set1_pd(4.84406305325125486048e3);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(v + i);
    const __m256d sign = _mm256_and_pd(x, sign_mask);
    const __m256d ax = _mm256_min_pd(_mm256_andnot_pd(sign_mask, x), cap);

    const __m256d e = exp_small_range(_mm256_add_pd(ax, ax));
    const __m256d big = _mm256_sub_pd(one, _mm256_div_pd(two, _mm256_add_pd(e, one)));

    const __m256d z = _mm256_mul_pd(ax, ax);
    const __m256d num = _mm256_fmadd_pd(_mm256_fmadd_pd(p0, z, p1), z, p2);
    const __m256d den = _mm256_fmadd_pd(_mm256_fmadd_pd(_mm256_add_pd(z, q1), z, q2), z, q3);
    const __m256d small = _mm256_fmadd_pd(_mm256_mul_pd(ax, z), _mm256_div_pd(num, den), ax);

    const __m256d mag = _mm256_blendv_pd(big, small, _mm256_cmp_pd(ax, cut, _CMP_LT_OQ));
    _mm256_storeu_pd(v + i, _mm256_or_pd(mag, sign));
  }
  for (; i < n; ++i) v[i] = std::tanh(v[i]);
}

void tanh_grad_avx2(const double* a, double* g, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_loadu_pd(a + i);
    const __m256d d = _mm256_fnmadd_pd(av, av, one);
    _mm256_storeu_pd(g + i, _mm256_mul_pd(_mm256_loadu_pd(g + i), d));
  }
  for (; i < n; ++i) g[i] *= 1.0 - a[i] * a[i];
}

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

SumPair shifted_moments_avx2(const double* x, std::size_t n, double shift) {
  __m256d s = _mm256_setzero_pd();
  __m256d q = _mm256_setzero_pd();
  const __m256d c = _mm256_set1_pd(shift);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    s = _mm256_add_pd(s, v);
    const __m256d d = _mm256_sub_pd(v, c);
    q = _mm256_fmadd_pd(d, d, q);
  }
  SumPair r{hsum(s), hsum(q)};
  for (; i < n; ++i) {
    r.sum += x[i];
    const double d = x[i] - shift;
    r.sum_sq += d * d;
  }
  return r;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Backend::Avx2,   affine_avx2,    outer_acc_avx2,
                                 column_sum_avx2, tanh_avx2, tanh_grad_avx2, shifted_moments_avx2};
  return &table;
}

}  // namespace neurstrat::kernels
