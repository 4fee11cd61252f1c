#include <immintrin.h>

#include <cmath>
#include <vector>

#include "kernels_impl.hpp"

namespace natgrad::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// C[i0..i0+R) x [j0..j0+4V) += A * B where A(i,l) = a[i*ars + l*acs] and
// B is row-major with leading dimension ldb. The sum over l runs in
// increasing order for every output entry.
template <int R, int V>
inline void block(std::size_t i0, std::size_t j0, std::size_t k, const double* a,
                  std::size_t ars, std::size_t acs, const double* b, std::size_t ldb,
                  double* c, std::size_t ldc) {
  __m256d acc[R][V];
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < V; ++v) acc[r][v] = _mm256_loadu_pd(c + (i0 + r) * ldc + j0 + 4 * v);
  for (std::size_t l = 0; l < k; ++l) {
    __m256d bv[V];
    for (int v = 0; v < V; ++v) bv[v] = _mm256_loadu_pd(b + l * ldb + j0 + 4 * v);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + (i0 + r) * ars + l * acs);
      for (int v = 0; v < V; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < V; ++v) _mm256_storeu_pd(c + (i0 + r) * ldc + j0 + 4 * v, acc[r][v]);
}

template <int R>
inline void row_panel(std::size_t i0, std::size_t n, std::size_t k, const double* a,
                      std::size_t ars, std::size_t acs, const double* b, double* c) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) block<R, 2>(i0, j, k, a, ars, acs, b, n, c, n);
  for (; j + 4 <= n; j += 4) block<R, 1>(i0, j, k, a, ars, acs, b, n, c, n);
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      double s = c[(i0 + r) * n + j];
      for (std::size_t l = 0; l < k; ++l) s = std::fma(a[(i0 + r) * ars + l * acs], b[l * n + j], s);
      c[(i0 + r) * n + j] = s;
    }
  }
}

void gemm_core(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t ars,
               std::size_t acs, const double* b, double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_panel<4>(i, n, k, a, ars, acs, b, c);
  for (; i < m; ++i) row_panel<1>(i, n, k, a, ars, acs, b, c);
}

}  // namespace

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale(std::size_t n, double a, double* x) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  // Transposing B turns the dot-product form into broadcast-FMA panels while
  // keeping the per-entry summation order over l.
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t l = 0; l < k; ++l) bt[l * n + j] = b[j * k + l];
  gemm_core(m, n, k, a, k, 1, bt.data(), c);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  gemm_core(m, n, k, a, k, 1, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  gemm_core(m, n, k, a, 1, m, b, c);
}

}  // namespace natgrad::kernels::avx2

namespace natgrad::kernels {

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{"avx2",        avx2::dot,     avx2::axpy,
                                 avx2::scale,   avx2::gemm_nt, avx2::gemm_nn,
                                 avx2::gemm_tn};
  return table;
}

}  // namespace natgrad::kernels
