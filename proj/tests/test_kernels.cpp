#include <doctest.h>

#include <cmath>
#include <vector>

#include "natgrad/kernels.hpp"
#include "natgrad/rng.hpp"
#include "oracles.hpp"

using namespace natgrad;
using kernels::KernelTable;

namespace {

std::vector<double> randvec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / den;
}

// Naive triple loops, independent of both kernel sets.
std::vector<double> ref_gemm(char mode, std::size_t m, std::size_t n, std::size_t k,
                             const std::vector<double>& a, const std::vector<double>& b,
                             std::vector<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = mode == 't' ? a[p * m + i] : a[i * k + p];
        const double bv = mode == 'n' ? b[j * k + p] : b[p * n + j];
        s += static_cast<long double>(av) * bv;
      }
      c[i * n + j] += static_cast<double>(s);
    }
  return c;
}

void check_table(const KernelTable& t, double tol) {
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 33u, 100u, 1001u}) {
    const auto x = randvec(rng, n), y = randvec(rng, n);
    const double d = t.dot(n, x.data(), y.data());
    const double ref = oracle::dot(x, y);
    double mag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
    CHECK(std::abs(d - ref) <= tol * std::max(mag, 1.0));

    auto z = y;
    t.axpy(n, 0.37, x.data(), z.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(z[i] - (y[i] + 0.37 * x[i])) <= 1e-15 * (1 + std::abs(z[i])));
    auto w = x;
    t.scale(n, -2.5, w.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(w[i] == -2.5 * x[i]);
  }
  for (auto [m, n, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {3, 5, 7}, {4, 8, 16},
                         {9, 17, 5}, {13, 3, 64}, {32, 64, 20}, {5, 1, 9}}) {
    const auto c0 = randvec(rng, m * n);
    const auto a_nt = randvec(rng, m * k), b_nt = randvec(rng, n * k);
    auto c = c0;
    t.gemm_nt(m, n, k, a_nt.data(), b_nt.data(), c.data());
    CHECK(max_rel(c, ref_gemm('n', m, n, k, a_nt, b_nt, c0)) <= tol);

    const auto b_nn = randvec(rng, k * n);
    c = c0;
    t.gemm_nn(m, n, k, a_nt.data(), b_nn.data(), c.data());
    CHECK(max_rel(c, ref_gemm('x', m, n, k, a_nt, b_nn, c0)) <= tol);

    const auto a_tn = randvec(rng, k * m);
    c = c0;
    t.gemm_tn(m, n, k, a_tn.data(), b_nn.data(), c.data());
    CHECK(max_rel(c, ref_gemm('t', m, n, k, a_tn, b_nn, c0)) <= tol);
  }
}

}  // namespace

TEST_CASE("scalar kernels match naive references") { check_table(kernels::scalar_table(), 1e-13); }

TEST_CASE("avx2 kernels match naive references") {
  const KernelTable* t = kernels::avx2_table();
  if (!t) {
    MESSAGE("AVX2 unavailable; skipped");
    return;
  }
  check_table(*t, 1e-13);
}

TEST_CASE("avx2 and scalar kernels agree") {
  const KernelTable* v = kernels::avx2_table();
  if (!v) return;
  const KernelTable& s = kernels::scalar_table();
  Rng rng(11);
  for (std::size_t n : {5u, 64u, 1003u}) {
    const auto x = randvec(rng, n), y = randvec(rng, n);
    const double a = s.dot(n, x.data(), y.data()), b = v->dot(n, x.data(), y.data());
    CHECK(std::abs(a - b) <= 1e-12 * std::sqrt(static_cast<double>(n)));
  }
  const std::size_t m = 37, n = 29, k = 41;
  const auto a = randvec(rng, m * k), b = randvec(rng, n * k);
  std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0);
  s.gemm_nt(m, n, k, a.data(), b.data(), c1.data());
  v->gemm_nt(m, n, k, a.data(), b.data(), c2.data());
  CHECK(max_rel(c2, c1) <= 1e-13);
}

TEST_CASE("kernels are bitwise reproducible within a set") {
  Rng rng(3);
  const std::size_t m = 19, n = 23, k = 31;
  const auto a = randvec(rng, m * k), b = randvec(rng, n * k);
  for (const KernelTable* t : {&kernels::scalar_table(), kernels::avx2_table()}) {
    if (!t) continue;
    std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0);
    t->gemm_nt(m, n, k, a.data(), b.data(), c1.data());
    t->gemm_nt(m, n, k, a.data(), b.data(), c2.data());
    CHECK(c1 == c2);
    CHECK(t->dot(m * k, a.data(), a.data()) == t->dot(m * k, a.data(), a.data()));
  }
}

TEST_CASE("kernel selection") {
  CHECK(kernels::parse_kernel_set("scalar") == kernels::KernelSet::Scalar);
  CHECK(kernels::parse_kernel_set("avx2") == kernels::KernelSet::Avx2);
  CHECK_THROWS_AS(kernels::parse_kernel_set("sse9"), std::invalid_argument);
  const std::string before = kernels::active().name;
  kernels::select(kernels::KernelSet::Scalar);
  CHECK(std::string(kernels::active().name) == kernels::scalar_table().name);
  if (kernels::avx2_table()) {
    kernels::select(kernels::KernelSet::Avx2);
    CHECK(std::string(kernels::active().name) == kernels::avx2_table()->name);
  } else {
    CHECK_THROWS(kernels::select(kernels::KernelSet::Avx2));
  }
  kernels::select(before == "scalar" ? kernels::KernelSet::Scalar : kernels::KernelSet::Avx2);
}
