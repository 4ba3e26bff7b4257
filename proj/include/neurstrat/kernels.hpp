#pragma once

// Dense inner loops used by the network passes and the sample reductions.
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2/FMA variant. The variant is chosen once at startup from CPUID and can
// be overridden with NEURSTRAT_KERNELS=scalar|avx2 or set_backend().

#include <cstddef>
#include <span>
#include <string_view>

namespace neurstrat::kernels {

enum class Backend { Scalar, Avx2 };

// out[b, :] = bias + sum_k in[b, k] * wt[k, :]
// in: rows x n_in, wt: n_in x n_out (transposed weight), out: rows x n_out.
using AffineFn = void (*)(const double* in, const double* wt, const double* bias, double* out,
                          std::size_t rows, std::size_t n_in, std::size_t n_out);

// acc[k, :] += sum_b in[b, k] * g[b, :]
using OuterAccFn = void (*)(const double* in, const double* g, double* acc, std::size_t rows,
                            std::size_t n_in, std::size_t n_out);

// acc[:] += sum_b g[b, :]
using ColumnSumFn = void (*)(const double* g, double* acc, std::size_t rows, std::size_t cols);

// v[i] = tanh(v[i])
using TanhFn = void (*)(double* v, std::size_t n);

// g[i] *= 1 - a[i]^2
using TanhGradFn = void (*)(const double* a, double* g, std::size_t n);

// Returns {sum x, sum (x - shift)^2}.
struct SumPair {
  double sum = 0.0;
  double sum_sq = 0.0;
};
using ShiftedMomentsFn = SumPair (*)(const double* x, std::size_t n, double shift);

struct KernelTable {
  Backend backend;
  AffineFn affine;
  OuterAccFn outer_acc;
  ColumnSumFn column_sum;
  TanhFn tanh;
  TanhGradFn tanh_grad;
  ShiftedMomentsFn shifted_moments;
};

const KernelTable& scalar_table();
// nullptr when the AVX2 variants were not compiled in.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Active table; resolved on first use.
const KernelTable& active();
Backend active_backend();
// Throws if the requested backend is unavailable on this machine/build.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

// Convenience wrappers over the active table.
inline void affine(std::span<const double> in, std::span<const double> wt,
                   std::span<const double> bias, std::span<double> out, std::size_t rows,
                   std::size_t n_in, std::size_t n_out) {
  active().affine(in.data(), wt.data(), bias.data(), out.data(), rows, n_in, n_out);
}

}  // namespace neurstrat::kernels
