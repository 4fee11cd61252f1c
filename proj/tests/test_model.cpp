#include <doctest.h>

#include <cmath>

#include "natgrad/checks.hpp"
#include "natgrad/error.hpp"
#include "natgrad/metric.hpp"
#include "natgrad/model.hpp"
#include "oracles.hpp"

using namespace natgrad;

namespace {

Architecture small_arch(Activation out) {
  return {{3, 4, 2}, {Activation::Tanh, out}};
}

OutputModel om_for(Activation out) {
  if (out == Activation::Linear) return OutputModel::linear_gaussian(0.5);
  if (out == Activation::Sigmoid) return OutputModel::sigmoid_bernoulli();
  return OutputModel::softmax_multinomial();
}

Batch make_batch(const Mlp& m, const OutputModel& om, std::uint64_t seed, std::size_t n = 6) {
  Rng rng(seed);
  DenseMatrix x = random_inputs(rng, n, m.input_dim());
  DenseMatrix t = sample_targets(forward(m, x).output(), om, rng);
  return {std::move(x), std::move(t)};
}

}  // namespace

TEST_CASE("architecture validation") {
  CHECK(small_arch(Activation::Sigmoid).param_count() == 3 * 4 + 4 + 4 * 2 + 2);
  CHECK_THROWS_AS((Architecture{{3, 4}, {Activation::Tanh, Activation::Tanh}}.validate()), DimensionError);
  CHECK_THROWS_AS((Architecture{{3, 4, 2}, {Activation::Softmax, Activation::Sigmoid}}.validate()), DimensionError);
  CHECK(parse_activation("tanh") == Activation::Tanh);
  CHECK(to_string(Activation::Softmax) == "softmax");
  CHECK_THROWS(parse_activation("relu"));
}

TEST_CASE("init is deterministic, Glorot-bounded, zero bias") {
  const Architecture a{{10, 6, 3}, {Activation::Sigmoid, Activation::Sigmoid}};
  const Mlp m1 = Mlp::init(a, 5), m2 = Mlp::init(a, 5), m3 = Mlp::init(a, 6);
  CHECK(m1 == m2);
  CHECK_FALSE(m1 == m3);
  const double s0 = std::sqrt(6.0 / 16.0);
  for (double w : m1.weights(0)) CHECK(std::abs(w) <= s0);
  for (double b : m1.bias(1)) CHECK(b == 0.0);
  CHECK(unflatten(a, flatten(m1)) == m1);
}

TEST_CASE("forward pass of a hand-built net") {
  // y = sigmoid(w.x + b) with w = (1, -1), b = 0.5
  const Mlp m({{2, 1}, {Activation::Sigmoid}}, ParamVector(std::vector<double>{1, -1, 0.5}));
  const DenseMatrix x(1, 2, std::vector<double>{2, 1});
  const ForwardTrace tr = forward(m, x);
  CHECK(tr.output_preactivation()(0, 0) == doctest::Approx(1.5));
  CHECK(tr.output()(0, 0) == doctest::Approx(1 / (1 + std::exp(-1.5))));
  const Batch one{x, DenseMatrix(1, 1, std::vector<double>{1})};
  CHECK(loss(m, one, OutputModel::sigmoid_bernoulli()) == doctest::Approx(std::log1p(std::exp(-1.5))));
}

TEST_CASE("softmax rows sum to one and loss matches log-sum-exp") {
  const Mlp m({{2, 3}, {Activation::Softmax}}, ParamVector(std::vector<double>{1, 0, 0, 1, -1, 2, 0, 0, 0}));
  const DenseMatrix x(1, 2, std::vector<double>{1, 2});
  const DenseMatrix y = forward(m, x).output();
  CHECK(y(0, 0) + y(0, 1) + y(0, 2) == doctest::Approx(1.0));
  const Batch b{x, DenseMatrix(1, 3, std::vector<double>{0, 1, 0})};
  const double r[3] = {1, 2, 3};
  const double lse = std::log(std::exp(r[0]) + std::exp(r[1]) + std::exp(r[2]));
  CHECK(loss(m, b, OutputModel::softmax_multinomial()) == doctest::Approx(lse - 2));
}

TEST_CASE("linear gaussian loss") {
  const Mlp m({{1, 1}, {Activation::Linear}}, ParamVector(std::vector<double>{2, 1}));
  const Batch b{DenseMatrix(2, 1, std::vector<double>{1, 0}), DenseMatrix(2, 1, std::vector<double>{0, 0})};
  // outputs 3 and 1, beta = 2: mean of (9 + 1) / (2 * 4)
  CHECK(loss(m, b, OutputModel::linear_gaussian(2.0)) == doctest::Approx(10.0 / 8.0 / 2.0));
}

TEST_CASE("output model compatibility and target validation") {
  const Mlp m = Mlp::init(small_arch(Activation::Sigmoid), 1);
  DenseMatrix x(2, 3, 0.1);
  CHECK_THROWS_AS(loss(m, {x, DenseMatrix(2, 2, 0.5)}, OutputModel::softmax_multinomial()), DimensionError);
  CHECK_THROWS(loss(m, {x, DenseMatrix(2, 2, 1.5)}, OutputModel::sigmoid_bernoulli()));
  const Mlp s = Mlp::init(small_arch(Activation::Softmax), 1);
  CHECK_THROWS(loss(s, {x, DenseMatrix(2, 2, 0.3)}, OutputModel::softmax_multinomial()));
  CHECK_THROWS_AS(loss(m, {DenseMatrix(2, 4), DenseMatrix(2, 2, 0.5)}, OutputModel::sigmoid_bernoulli()),
                  DimensionError);
}

TEST_CASE("gradient matches central differences") {
  for (Activation out : {Activation::Linear, Activation::Sigmoid, Activation::Softmax}) {
    const OutputModel om = om_for(out);
    Mlp m = Mlp::init(small_arch(out), 3);
    const Batch b = make_batch(m, om, 4);
    const ParamVector g = gradient(m, b, om);
    const auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& p) { return loss(m.with_params(ParamVector(p)), b, om); },
        m.params().values());
    CHECK(oracle::rel(oracle::to_eigen(g), oracle::to_eigen(ParamVector(fd))) < 1e-7);
    const LossAndGradient lg = loss_and_gradient(m, b, om);
    CHECK(lg.loss == loss(m, b, om));
    CHECK(lg.gradient == g);
  }
}

TEST_CASE("R-op matches finite differences and L-op is its adjoint") {
  Rng rng(12);
  for (Activation out : {Activation::Linear, Activation::Sigmoid, Activation::Softmax}) {
    const Mlp m = Mlp::init(small_arch(out), 8);
    const DenseMatrix x = random_inputs(rng, 5, 3);
    ParamVector v(m.param_count());
    for (auto& e : v) e = rng.normal();
    const double h = 1e-6;
    const DenseMatrix jv = rop_output(m, x, v);
    const DenseMatrix yp = forward(m.with_params(axpy(h, v, m.params())), x).output();
    const DenseMatrix ym = forward(m.with_params(axpy(-h, v, m.params())), x).output();
    for (std::size_t i = 0; i < jv.size(); ++i)
      CHECK(jv.data()[i] == doctest::Approx((yp.data()[i] - ym.data()[i]) / (2 * h)).epsilon(1e-6));

    DenseMatrix u(5, 2);
    for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
    for (bool pre : {false, true}) {
      const DenseMatrix j = pre ? rop_preactivation(m, x, v) : rop_output(m, x, v);
      const ParamVector jt = pre ? lop_preactivation(m, x, u) : lop_output(m, x, u);
      const double lhs = frobenius_inner(u, j), rhs = dot(jt, v);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("gradient equals L-op of the residual") {
  const OutputModel om = OutputModel::softmax_multinomial();
  const Mlp m = Mlp::init(small_arch(Activation::Softmax), 2);
  const Batch b = make_batch(m, om, 9);
  const ForwardTrace tr = forward(m, b.inputs);
  DenseMatrix res = output_residual(tr, *b.targets, om);
  for (std::size_t i = 0; i < res.size(); ++i) res.data()[i] /= static_cast<double>(b.size());
  const ParamVector g = lop_preactivation(m, tr, res);
  CHECK(oracle::rel(oracle::to_eigen(g), oracle::to_eigen(gradient(m, b, om))) < 1e-14);
}

TEST_CASE("checkpoint round trip is exact") {
  const Architecture a{{3, 5, 4}, {Activation::Tanh, Activation::Softmax}};
  const Mlp m = Mlp::init(a, 77);
  const Mlp back = checkpoint_from_string(checkpoint_to_string(m));
  CHECK(back == m);
  CHECK_THROWS(checkpoint_from_string("NGMLP 2\n"));
  CHECK_THROWS(checkpoint_from_string("garbage"));
  CHECK_THROWS(load_checkpoint("/nonexistent/path.ngmlp"));
}
