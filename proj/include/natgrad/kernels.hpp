#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation and, where the CPU supports it, an AVX2/FMA variant.
// The active set is picked once at first use and can be forced with the
// NATGRAD_KERNELS environment variable (`scalar` or `avx2`).
//
// All matrices are dense row-major. For a fixed kernel set every kernel
// visits its operands in a fixed order, so results are bitwise reproducible
// from run to run.

#include <cstddef>
#include <string_view>

namespace natgrad::kernels {

struct KernelTable {
  const char* name;

  // sum_i x[i] * y[i]
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // x[i] *= a
  void (*scale)(std::size_t n, double a, double* x);
  // C(m x n) += A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C(m x n) += A(k x m)^T * B(k x n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
};

enum class KernelSet { Scalar, Avx2 };

const KernelTable& scalar_table();

/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

/// Currently selected kernels.
const KernelTable& active();

/// Force a kernel set; throws std::runtime_error when unavailable.
void select(KernelSet set);

/// Parses `scalar` / `avx2`; throws std::invalid_argument otherwise.
KernelSet parse_kernel_set(std::string_view name);

}  // namespace natgrad::kernels
