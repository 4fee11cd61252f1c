#pragma once

// f(theta) = 1/2 (theta - c)^T H (theta - c), with H SPD.

#include <memory>

#include "natgrad/optim.hpp"
#include "natgrad/rng.hpp"

namespace testing_support {

using namespace natgrad;

class Quadratic final : public Objective, public MetricProvider {
 public:
  Quadratic(DenseMatrix h, ParamVector c) : h_(std::move(h)), c_(std::move(c)) {}

  static Quadratic random(Rng& rng, std::size_t n, double shift) {
    DenseMatrix q(n, n);
    for (auto* p = q.data(); p != q.data() + q.size(); ++p) *p = rng.normal();
    DenseMatrix h = matmul(q.transposed(), q);
    for (std::size_t i = 0; i < n; ++i) h(i, i) += shift;
    ParamVector c(n);
    for (auto& v : c) v = rng.normal();
    return {std::move(h), std::move(c)};
  }

  std::size_t dim() const override { return c_.size(); }
  double value(const ParamVector& theta) const override {
    const ParamVector d = subtract(theta, c_);
    return 0.5 * dot(d, matvec(h_, d));
  }
  LossAndGradient value_and_gradient(const ParamVector& theta) const override {
    const ParamVector d = subtract(theta, c_);
    ParamVector g = matvec(h_, d);
    return {0.5 * dot(d, g), std::move(g)};
  }
  /// The Hessian itself: the metric matched to this objective.
  std::unique_ptr<LinearOperator> metric(const ParamVector&, double damping) const override {
    DenseMatrix a = h_;
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += damping;
    return std::make_unique<DenseOperator>(std::move(a));
  }

  const DenseMatrix& hessian() const { return h_; }
  const ParamVector& minimizer() const { return c_; }

 private:
  DenseMatrix h_;
  ParamVector c_;
};

}  // namespace testing_support
