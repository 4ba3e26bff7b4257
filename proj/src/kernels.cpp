#include "neurstrat/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "neurstrat/error.hpp"

namespace neurstrat::kernels {

#ifndef NEURSTRAT_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* resolve_default() {
  const char* env = std::getenv("NEURSTRAT_KERNELS");
  const bool avx2_ok = avx2_table() != nullptr && cpu_has_avx2();
  if (env != nullptr) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_ok) return avx2_table();
  }
  return avx2_ok ? avx2_table() : &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{resolve_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

Backend active_backend() { return active().backend; }

void set_backend(Backend backend) {
  if (backend == Backend::Scalar) {
    slot().store(&scalar_table());
    return;
  }
  if (avx2_table() == nullptr || !cpu_has_avx2()) {
    throw Error(ErrorKind::InvalidArgument, "AVX2 kernels unavailable on this machine or build");
  }
  slot().store(avx2_table());
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

}  // namespace neurstrat::kernels
