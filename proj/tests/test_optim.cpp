#include <doctest.h>

#include <cmath>
#include <limits>

#include "natgrad/checks.hpp"
#include "natgrad/error.hpp"
#include "natgrad/optim.hpp"
#include "oracles.hpp"
#include "quadratic.hpp"
#include "reparam.hpp"

using namespace natgrad;
using testing_support::Quadratic;
using testing_support::Reparam;

namespace {

SolverConfig exact_solver(int iters = 2000) {
  SolverConfig c;
  c.max_iters = iters;
  c.rtol = 1e-12;
  c.warm_start_scale = 0.0;
  return c;
}

ParamVector randn(Rng& rng, std::size_t n) {
  ParamVector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Batch labeled(const Mlp& m, const OutputModel& om, Rng& rng, std::size_t n) {
  DenseMatrix x = random_inputs(rng, n, m.input_dim());
  DenseMatrix t = sample_targets(forward(m, x).output(), om, rng);
  return {std::move(x), std::move(t)};
}

// Finite only at the starting point.
class Cliff final : public Objective {
 public:
  Cliff(const Quadratic& q, ParamVector start) : q_(q), start_(std::move(start)) {}
  std::size_t dim() const override { return q_.dim(); }
  double value(const ParamVector& t) const override {
    return t == start_ ? q_.value(t) : std::numeric_limits<double>::quiet_NaN();
  }
  LossAndGradient value_and_gradient(const ParamVector& t) const override { return q_.value_and_gradient(t); }

 private:
  const Quadratic& q_;
  ParamVector start_;
};

}  // namespace

TEST_CASE("lm_update") {
  CHECK(lm_update(2.0, 0.5) == 2.0);
  CHECK(lm_update(3.0, 0.9) == doctest::Approx(2.0));
  CHECK(lm_update(2.0, 0.1) == doctest::Approx(3.0));
  CHECK(lm_update(1e-10, 1.0) == kMinDamping);
  CHECK(lm_update(1e10, -1.0) == kMaxDamping);
  CHECK(lm_update(1.0, 0.75) == 1.0);
  CHECK(lm_update(1.0, 0.25) == 1.0);
}

TEST_CASE("reduction_ratio") {
  const ParamVector g(std::vector<double>{1, 2}), x(std::vector<double>{1, 1});
  CHECK(reduction_ratio(5.0, 5.0, g, x, 0.5) == 0.0);
  CHECK(reduction_ratio(5.0, 6.0, g, x, 0.5) < 0.0);
  CHECK(reduction_ratio(5.0, 3.5, g, x, 0.5) == doctest::Approx(1.0));
  CHECK_THROWS_AS(reduction_ratio(5.0, 4.0, g, ParamVector(2), 1.0), UndefinedRatioError);
}

TEST_CASE("reduction ratio on an exact quadratic is 1 - gamma/2") {
  Rng rng(41);
  const Quadratic q = Quadratic::random(rng, 8, 1.0);
  for (double gamma : {1.0, 0.5, 0.1, 1e-4}) {
    NgdState s = NgdState::start(randn(rng, 8), 1e-10, gamma);
    s.adapt_damping = false;
    const auto [next, rep] = ngd_step(s, q, q, exact_solver());
    CHECK(rep.rho_defined);
    CHECK(rep.rho == doctest::Approx(1.0 - gamma / 2.0).epsilon(1e-8));
    CHECK(rep.predicted_reduction ==
          doctest::Approx(gamma * dot(q.value_and_gradient(s.theta).gradient, subtract(s.theta, q.minimizer()))));
  }
}

TEST_CASE("backtracking line search") {
  Rng rng(42);
  const Quadratic q = Quadratic::random(rng, 5, 1.0);
  const ParamVector theta = randn(rng, 5);
  const ParamVector g = q.value_and_gradient(theta).gradient;
  auto f = [&](const ParamVector& t) { return q.value(t); };
  SUBCASE("ascent direction returns 0") {
    const LineSearchResult r = line_search_backtracking(theta, scaled(-1.0, g), g, f, 1.0);
    CHECK(r.step == 0.0);
    CHECK_FALSE(r.found);
  }
  SUBCASE("Newton direction accepts the first step") {
    const ParamVector newton = subtract(theta, q.minimizer());
    const LineSearchResult r = line_search_backtracking(theta, newton, g, f, 1.0);
    CHECK(r.found);
    CHECK(r.step == 1.0);
    CHECK(r.evaluations == 2);
  }
  SUBCASE("overlong initial step backtracks to a decrease") {
    const LineSearchResult r = line_search_backtracking(theta, g, g, f, 100.0);
    CHECK(r.found);
    CHECK(r.step < 100.0);
    CHECK(r.value < q.value(theta));
  }
}

TEST_CASE("sgd_step") {
  Rng rng(43);
  const Quadratic q = Quadratic::random(rng, 1, 0.0);
  const ParamVector theta(std::vector<double>{3.0});
  CHECK(sgd_step(q, theta, 0.0) == theta);
  const double curvature = q.hessian()(0, 0);
  ParamVector t = theta;
  double prev = q.value(t);
  for (int i = 0; i < 20; ++i) {
    t = sgd_step(q, t, 1.9 / curvature);
    const double f = q.value(t);
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("NGD approaches scaled SGD as damping grows") {
  Rng rng(44);
  const Architecture arch{{3, 5, 2}, {Activation::Tanh, Activation::Sigmoid}};
  const OutputModel om = OutputModel::sigmoid_bernoulli();
  const Mlp m = Mlp::init(arch, 2);
  const Batch b = labeled(m, om, rng, 20);
  NgdState s = NgdState::start(m.params(), 1e8, 1.0);
  s.adapt_damping = false;
  const auto [next, rep] = ngd_step(arch, s, b, b.inputs, om, exact_solver());
  const ParamVector dir = subtract(s.theta, next.theta);
  const ParamVector ref = scaled(1e-8, gradient(m, b, om));
  CHECK(relative_error(dir.span(), ref.span()) < 1e-6);
}

TEST_CASE("one exact NGD step solves linear least squares") {
  Rng rng(45);
  const Architecture arch{{4, 2}, {Activation::Linear}};
  const OutputModel om = OutputModel::linear_gaussian(0.8);
  const Mlp m = Mlp::init(arch, 3);
  DenseMatrix x = random_inputs(rng, 40, 4), t(40, 2);
  for (auto* p = t.data(); p != t.data() + t.size(); ++p) *p = rng.normal();
  const Batch b{x, t};
  NgdState s = NgdState::start(m.params(), 1e-10, 1.0);
  s.adapt_damping = false;
  const auto [next, rep] = ngd_step(arch, s, b, b.inputs, om, exact_solver());

  Eigen::MatrixXd a(40, 5);
  a << oracle::to_eigen(x), Eigen::VectorXd::Ones(40);
  const Eigen::MatrixXd w = a.colPivHouseholderQr().solve(oracle::to_eigen(t));  // 5 x 2
  const Mlp fit(arch, next.theta);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(fit.weights(0)[o * 4 + i] == doctest::Approx(w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o))).epsilon(1e-6));
    CHECK(fit.bias(0)[o] == doctest::Approx(w(4, static_cast<Eigen::Index>(o))).epsilon(1e-6));
  }
}

TEST_CASE("exact NGD step is covariant under linear reparametrization") {
  Rng rng(46);
  const Architecture arch{{2, 3, 1}, {Activation::Tanh, Activation::Sigmoid}};
  const OutputModel om = OutputModel::sigmoid_bernoulli();
  // N(0,1) weights and 200 examples keep the Fisher well conditioned, so the
  // 1e-14 damping is negligible next to its smallest eigenvalue.
  const Mlp m(arch, randn(rng, arch.param_count()));
  const Batch b = labeled(m, om, rng, 200);
  const std::size_t p = arch.param_count();
  DenseMatrix mm = DenseMatrix::identity(p);
  for (auto* e = mm.data(); e != mm.data() + mm.size(); ++e) *e += 0.3 * rng.normal() / std::sqrt(double(p));
  const MlpObjective obj(arch, b, om);
  const MlpMetric met(arch, b.inputs, om);
  const Reparam re(obj, met, mm);

  NgdState s = NgdState::start(m.params(), 1e-14, 0.5);
  s.adapt_damping = false;
  const auto [direct, rep1] = ngd_step(s, obj, met, exact_solver());
  const Eigen::VectorXd theta_prime = oracle::to_eigen(mm).lu().solve(oracle::to_eigen(m.params()));
  NgdState s2 = NgdState::start(oracle::from_eigen(theta_prime), 1e-14, 0.5);
  s2.adapt_damping = false;
  const auto [viaM, rep2] = ngd_step(s2, re, re, exact_solver());

  const DenseMatrix probe = random_inputs(rng, 25, 2);
  const DenseMatrix y1 = forward(Mlp(arch, direct.theta), probe).output();
  const DenseMatrix y2 = forward(Mlp(arch, matvec(mm, viaM.theta)), probe).output();
  CHECK(relative_error(y2.values(), y1.values()) < 1e-6);
  CHECK(dot(gradient(m, b, om), subtract(s.theta, direct.theta)) > 0.0);
}

TEST_CASE("rejected NGD step leaves theta untouched and raises damping") {
  Rng rng(47);
  const Quadratic q = Quadratic::random(rng, 4, 1.0);
  const ParamVector start = randn(rng, 4);
  const Cliff cliff(q, start);
  NgdState s = NgdState::start(start, 0.5, 0.3);
  const auto [next, rep] = ngd_step(s, cliff, q, exact_solver());
  CHECK_FALSE(rep.accepted);
  CHECK(next.theta == start);
  CHECK(next.damping > 0.5);
}

TEST_CASE("first NCG step is a line-searched NGD step") {
  Rng rng(48);
  const Architecture arch{{3, 4, 2}, {Activation::Sigmoid, Activation::Softmax}};
  const OutputModel om = OutputModel::softmax_multinomial();
  const Mlp m = Mlp::init(arch, 6);
  const Batch b = labeled(m, om, rng, 30);
  SolverConfig cfg;
  NgdState ngd = NgdState::start(m.params(), 1.0, 1.0);
  ngd.line_search = true;
  const NcgState ncg = NcgState::start(m.params(), 1.0);
  const auto [a, ra] = ngd_step(arch, ngd, b, b.inputs, om, cfg);
  const auto [c, rc] = ncg_step(arch, ncg, b, b.inputs, om, cfg);
  CHECK(rc.pure_natural);
  CHECK(rc.beta == 0.0);
  CHECK(a.theta == c.theta);
}

TEST_CASE("NCG directions are conjugate on a quadratic with the Euclidean metric") {
  Rng rng(49);
  for (int trial = 0; trial < 3; ++trial) {
    const Quadratic q = Quadratic::random(rng, 12, 1.0);
    const IdentityMetric euclid(12);
    NcgState s = NcgState::start(randn(rng, 12), 1e-10);
    s.adapt_damping = false;
    s.search = SubspaceSearch::QuadraticModel;
    ParamVector prev;
    const DenseOperator h(q.hessian());
    for (int step = 0; step < 8; ++step) {
      StepReport rep;
      std::tie(s, rep) = ncg_step(std::move(s), q, euclid, exact_solver());
      REQUIRE(rep.accepted);
      if (!prev.empty()) {
        const ParamVector hd = h(s.d_prev);
        const double num = std::abs(dot(hd, prev));
        const double den = std::sqrt(dot(hd, s.d_prev)) * std::sqrt(dot(h(prev), prev));
        CHECK(num <= 1e-8 * den);
      }
      prev = s.d_prev;
    }
  }
}

TEST_CASE("Nelder-Mead 2-D search against a dense grid") {
  auto phi = [](double a, double b) {
    const double u = a - 0.7, v = b + 0.2;
    return 3 * u * u + 2 * u * v + v * v + 1.0;
  };
  const SearchPoint nm = nelder_mead_2d(phi, 0.3, 40);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 400; ++i)
    for (int j = 0; j <= 400; ++j) best = std::min(best, phi(-1 + 3.0 * i / 400, -2 + 3.0 * j / 400));
  CHECK(nm.finite);
  CHECK(nm.evaluations <= 40);
  CHECK(nm.value <= best + 1e-2 * (phi(0, 0) - best));

  auto walled = [&](double a, double b) { return a > 0.5 ? std::nan("") : phi(a, b); };
  const SearchPoint w = nelder_mead_2d(walled, 0.3, 40);
  CHECK(w.finite);
  CHECK(w.value <= phi(0.3, 0));
  const SearchPoint none = nelder_mead_2d([](double, double) { return std::nan(""); }, 0.3, 40);
  CHECK_FALSE(none.finite);
}

TEST_CASE("quadratic models recover exact minimizers") {
  auto phi = [](double a, double b) { return 2 * (a - 1) * (a - 1) + (a - 1) * (b - 3) + (b - 3) * (b - 3); };
  const auto p = quadratic_model_2d(phi, phi(0, 0), 0.3, 0.5);
  REQUIRE(p);
  CHECK(p->alpha == doctest::Approx(1.0));
  CHECK(p->beta == doctest::Approx(3.0));
  const auto l = quadratic_model_1d([](double a) { return (a - 2) * (a - 2); }, 4.0, 0.3);
  REQUIRE(l);
  CHECK(l->alpha == doctest::Approx(2.0));
  CHECK_FALSE(quadratic_model_1d([](double a) { return -a * a; }, 0.0, 0.3));
}

TEST_CASE("NCG with all-NaN search is rejected with doubled damping") {
  Rng rng(50);
  const Quadratic q = Quadratic::random(rng, 4, 1.0);
  NcgState s = NcgState::start(randn(rng, 4), 1.0);
  s = ncg_step(std::move(s), q, q, exact_solver()).first;
  REQUIRE_FALSE(s.d_prev.is_zero());
  const ParamVector start = s.theta;
  const Cliff cliff(q, start);
  const double lambda = s.damping;
  const auto [next, rep] = ncg_step(s, cliff, q, exact_solver());
  CHECK_FALSE(rep.accepted);
  CHECK(next.theta == start);
  CHECK(next.damping == doctest::Approx(2 * lambda));
}

TEST_CASE("NCG resets to a pure natural step every reset_period steps") {
  Rng rng(51);
  const Architecture arch{{4, 6, 3}, {Activation::Tanh, Activation::Softmax}};
  const OutputModel om = OutputModel::softmax_multinomial();
  const Mlp m = Mlp::init(arch, 9);
  const Batch b = labeled(Mlp(arch, randn(rng, arch.param_count())), om, rng, 60);
  NcgState s = NcgState::start(m.params(), 1.0);
  SolverConfig cfg;
  for (int step = 1; step <= 61; ++step) {
    StepReport rep;
    std::tie(s, rep) = ncg_step(arch, std::move(s), b, b.inputs, om, cfg);
    REQUIRE(rep.accepted);
    CHECK_MESSAGE(rep.pure_natural == (step == 1 || step == 30 || step == 60), "step " << step);
  }
}
