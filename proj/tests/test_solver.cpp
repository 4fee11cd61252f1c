#include <doctest.h>

#include <cmath>

#include "natgrad/checks.hpp"
#include "natgrad/error.hpp"
#include "natgrad/rng.hpp"
#include "natgrad/solver.hpp"
#include "oracles.hpp"

using namespace natgrad;

namespace {

DenseMatrix spd(Rng& rng, std::size_t n, double shift) {
  DenseMatrix q(n, n);
  for (auto* p = q.data(); p != q.data() + q.size(); ++p) *p = rng.normal();
  DenseMatrix a = matmul(q.transposed(), q);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += shift;
  return a;
}

ParamVector randn(Rng& rng, std::size_t n) {
  ParamVector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

SolverConfig exact(int iters = 500) {
  SolverConfig c;
  c.max_iters = iters;
  c.rtol = 1e-12;
  return c;
}

// A x = x except that the first coordinate is negated.
class Indefinite final : public LinearOperator {
 public:
  explicit Indefinite(std::size_t n) : n_(n) {}
  std::size_t dim() const override { return n_; }
  void apply(std::span<const double> in, std::span<double> out) const override {
    for (std::size_t i = 0; i < n_; ++i) out[i] = i == 0 ? -in[i] : in[i];
  }

 private:
  std::size_t n_;
};

class Poisoned final : public LinearOperator {
 public:
  std::size_t dim() const override { return 3; }
  void apply(std::span<const double>, std::span<double> out) const override {
    for (auto& o : out) o = std::nan("");
  }
};

}  // namespace

TEST_CASE("CG agrees with an Eigen LDLT solve") {
  Rng rng(31);
  for (double shift : {30.0, 0.5}) {
    for (int t = 0; t < 5; ++t) {
      const DenseMatrix a = spd(rng, 30, shift);
      const ParamVector b = randn(rng, 30);
      const SolverResult r = cg_solve(DenseOperator(a), b, ParamVector(30), exact());
      const Eigen::VectorXd ref = oracle::to_eigen(a).ldlt().solve(oracle::to_eigen(b));
      CHECK(oracle::rel(oracle::to_eigen(r.x), ref) < 1e-9);
      CHECK(r.termination == Termination::Converged);
      CHECK(r.residual_norm <= 1e-11 * norm2(b));
      if (shift == 30.0) CHECK(r.iterations <= 32);
    }
  }
}

TEST_CASE("CG on the identity converges in one iteration") {
  const ParamVector b(std::vector<double>{1, 2, 3});
  const SolverResult r = cg_solve(ScaledIdentity(3, 2.0), b, ParamVector(3), exact());
  CHECK(r.iterations == 1);
  CHECK(r.x == ParamVector(std::vector<double>{0.5, 1, 1.5}));
}

TEST_CASE("CG edge cases") {
  const ScaledIdentity id(3, 1.0);
  const ParamVector b(std::vector<double>{1, 2, 3});
  SUBCASE("zero rhs returns zero") {
    const SolverResult r = cg_solve(id, ParamVector(3), b, exact());
    CHECK(r.x.is_zero());
    CHECK(r.iterations == 0);
  }
  SUBCASE("exact initial guess stops at iteration 0") {
    const SolverResult r = cg_solve(id, b, b, exact());
    CHECK(r.iterations == 0);
    CHECK(r.termination == Termination::Converged);
  }
  SUBCASE("iteration cap") {
    Rng rng(2);
    const SolverResult r = cg_solve(DenseOperator(spd(rng, 20, 0.1)), randn(rng, 20), ParamVector(20), exact(3));
    CHECK(r.iterations == 3);
    CHECK(r.termination == Termination::MaxIters);
  }
  SUBCASE("non-positive curvature reports breakdown") {
    const ParamVector e0(std::vector<double>{1, 0, 0});
    const SolverResult r = cg_solve(Indefinite(3), e0, ParamVector(3), exact());
    CHECK(r.termination == Termination::Breakdown);
  }
  SUBCASE("NaN operator output throws") {
    CHECK_THROWS_AS(cg_solve(Poisoned(), b, ParamVector(3), exact()), NumericError);
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(cg_solve(id, ParamVector(2), ParamVector(3), exact()), DimensionError);
  }
  SUBCASE("invalid config") {
    SolverConfig c;
    c.rtol = 0.0;
    CHECK_THROWS_AS(cg_solve(id, b, ParamVector(3), c), ConfigError);
  }
}

TEST_CASE("CG residuals decrease monotonically in the A-norm error") {
  Rng rng(33);
  const DenseMatrix a = spd(rng, 25, 1.0);
  const ParamVector b = randn(rng, 25);
  const Eigen::MatrixXd ea = oracle::to_eigen(a);
  const Eigen::VectorXd xs = ea.ldlt().solve(oracle::to_eigen(b));
  std::vector<double> errs;
  cg_solve(DenseOperator(a), b, ParamVector(25), exact(), [&](int, const ParamVector& x) {
    const Eigen::VectorXd e = oracle::to_eigen(x) - xs;
    errs.push_back(std::sqrt(e.dot(ea * e)));
  });
  REQUIRE(errs.size() > 2);
  for (std::size_t i = 1; i < errs.size(); ++i) CHECK(errs[i] <= errs[i - 1] * (1 + 1e-12));
}

TEST_CASE("warm start with the solution's multiple stays accurate") {
  Rng rng(34);
  const DenseMatrix a = spd(rng, 15, 2.0);
  const ParamVector b = randn(rng, 15);
  const SolverResult cold = cg_solve(DenseOperator(a), b, ParamVector(15), exact());
  const SolverResult warm = cg_solve(DenseOperator(a), b, scaled(0.6, cold.x), exact());
  CHECK(relative_error(warm.x.span(), cold.x.span()) < 1e-10);
  CHECK(to_string(Termination::Breakdown) == "breakdown");
}
