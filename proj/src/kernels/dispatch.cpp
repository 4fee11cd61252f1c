#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace natgrad::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(NATGRAD_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const KernelTable* best = avx2_table();
  if (const char* env = std::getenv("NATGRAD_KERNELS"); env != nullptr && *env != '\0') {
    if (parse_kernel_set(env) == KernelSet::Scalar) return &scalar_table();
    if (best == nullptr) throw std::runtime_error("NATGRAD_KERNELS=avx2 but AVX2 is unavailable");
    return best;
  }
  return best != nullptr ? best : &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{initial_table()};
  return current;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(NATGRAD_BUILD_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void select(KernelSet set) {
  if (set == KernelSet::Scalar) {
    slot().store(&scalar_table());
    return;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr) throw std::runtime_error("AVX2 kernels are unavailable on this machine");
  slot().store(t);
}

KernelSet parse_kernel_set(std::string_view name) {
  if (name == "scalar") return KernelSet::Scalar;
  if (name == "avx2") return KernelSet::Avx2;
  throw std::invalid_argument("unknown kernel set '" + std::string(name) + "'");
}

}  // namespace natgrad::kernels
