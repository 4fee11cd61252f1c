#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "natgrad/core.hpp"
#include "natgrad/rng.hpp"
#include "oracles.hpp"

using namespace natgrad;

TEST_CASE("ParamVector segments") {
  ParamVector v(std::vector<double>{1, 2, 3, 4, 5, 6}, {{0, 2, 2}, {4, 2, 1}});
  CHECK(v.size() == 6);
  CHECK(v.segments().size() == 2);
  CHECK(v.segment(1)[0] == 5);
  CHECK_THROWS_AS(ParamVector(std::vector<double>{1, 2, 3}, {{0, 1, 1}, {2, 1, 1}}), DimensionError);
  CHECK_THROWS_AS(ParamVector(std::vector<double>{1, 2, 3}, {{0, 2, 1}}), DimensionError);
  CHECK(ParamVector(4).is_zero());
  CHECK(ParamVector::zeros_like(v).size() == 6);
  ParamVector w = v;
  w[2] = std::nan("");
  CHECK_FALSE(w.all_finite());
  CHECK(v.all_finite());
}

TEST_CASE("vector algebra") {
  const ParamVector a(std::vector<double>{1, -2, 3}), b(std::vector<double>{4, 5, -6});
  CHECK(dot(a, b) == doctest::Approx(4 - 10 - 18));
  CHECK(norm2(a) == doctest::Approx(std::sqrt(14.0)));
  CHECK(axpy(2.0, a, b) == ParamVector(std::vector<double>{6, 1, 0}));
  CHECK(subtract(a, b) == ParamVector(std::vector<double>{-3, -7, 9}));
  CHECK(scaled(-1.0, a) == ParamVector(std::vector<double>{-1, 2, -3}));
  ParamVector c = b;
  axpy_inplace(-1.0, b, c);
  CHECK(c.is_zero());
  CHECK_THROWS_AS(dot(a, ParamVector(2)), DimensionError);
}

TEST_CASE("dot agrees with a compensated oracle on long vectors") {
  Rng rng(5);
  std::vector<double> x(10007), y(10007);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  const double d = dot(std::span<const double>(x), std::span<const double>(y));
  CHECK(std::abs(d - oracle::dot(x, y)) < 1e-10);
}

TEST_CASE("dense matrix operations") {
  DenseMatrix a(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(a.transposed()(2, 1) == 6);
  const DenseMatrix p = matmul(a, a.transposed());
  CHECK(p(0, 0) == 14);
  CHECK(p(0, 1) == 32);
  CHECK(p(1, 1) == 77);
  const ParamVector y = matvec(a, ParamVector(std::vector<double>{1, 0, -1}));
  CHECK(y == ParamVector(std::vector<double>{-2, -2}));
  const std::vector<std::size_t> rows{1, 1, 0};
  const DenseMatrix s = a.select_rows(rows);
  CHECK(s.rows() == 3);
  CHECK(s(2, 0) == 1);
  CHECK(frobenius_inner(a, a) == 91);
  CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(91.0)));
  CHECK(DenseMatrix::identity(3)(1, 1) == 1);
  CHECK_THROWS_AS(DenseMatrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  const std::vector<std::size_t> bad{5};
  CHECK_THROWS_AS(a.select_rows(bad), DimensionError);
}

TEST_CASE("matmul agrees with Eigen") {
  Rng rng(9);
  DenseMatrix a(13, 21), b(21, 8);
  for (auto* p = a.data(); p != a.data() + a.size(); ++p) *p = rng.normal();
  for (auto* p = b.data(); p != b.data() + b.size(); ++p) *p = rng.normal();
  const Eigen::MatrixXd ref = oracle::to_eigen(a) * oracle::to_eigen(b);
  CHECK((oracle::to_eigen(matmul(a, b)) - ref).norm() <= 1e-12 * ref.norm());
}

TEST_CASE("linear operators") {
  const ScaledIdentity s(3, 2.5);
  CHECK(s(ParamVector(std::vector<double>{1, 2, 3})) == ParamVector(std::vector<double>{2.5, 5, 7.5}));
  DenseOperator d(DenseMatrix(2, 2, std::vector<double>{2, 1, 1, 3}));
  CHECK(d(ParamVector(std::vector<double>{1, 1})) == ParamVector(std::vector<double>{3, 4}));
  CHECK_THROWS_AS(DenseOperator(DenseMatrix(2, 3)), DimensionError);
}

TEST_CASE("rng is deterministic and well-formed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng(42).next_u64() != c.next_u64());
  CHECK(Rng::derive(1, 2).next_u64() != Rng::derive(1, 3).next_u64());
  CHECK(Rng::derive(1, 2).next_u64() == Rng::derive(1, 2).next_u64());

  Rng r(1);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  std::vector<int> counts(3, 0);
  const std::vector<double> w{1, 2, 7};
  for (int i = 0; i < 100000; ++i) ++counts[r.categorical(w)];
  CHECK(counts[2] / 100000.0 == doctest::Approx(0.7).epsilon(0.02));
  CHECK(counts[0] / 100000.0 == doctest::Approx(0.1).epsilon(0.05));

  auto perm = r.permutation(50);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(perm[i] == i);
  const auto s = r.sample_without_replacement(100, 30);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 30);
  for (auto v : s) CHECK(v < 100);
  CHECK_THROWS(r.sample_without_replacement(3, 4));
  CHECK_THROWS(r.below(0));
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}
