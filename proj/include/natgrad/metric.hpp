#pragma once

// The Fisher information metric of p(t|x) as a matrix-free operator,
//
//   G v = (1/n) sum_i J_y,i^T D_i J_y,i v,
//
// where J_y is the Jacobian of the outputs and D_i the per-output Fisher
// weight of the density family (1/beta^2, 1/(y(1-y)), 1/y). The expectation
// over x is the plain mean over the supplied inputs; targets are never read.
//
// The extended Gauss-Newton product and the dense / Monte-Carlo matrices
// below are independent constructions of the same quantity, kept for
// verification.

#include <cstdint>

#include "natgrad/core.hpp"
#include "natgrad/model.hpp"
#include "natgrad/output_model.hpp"
#include "natgrad/rng.hpp"

namespace natgrad {

/// Floor applied to y(1-y) (sigmoid) and y (softmax) before taking reciprocals.
inline constexpr double kMetricWeightFloor = 1e-8;

/// Largest parameter count for which dense P x P oracles are built.
inline constexpr std::size_t kDenseOracleMaxParams = 200;

/// n x o per-output Fisher weights for the model outputs `y`.
DenseMatrix fisher_output_weights(const DenseMatrix& y, const OutputModel& om);

/// (G + damping I) bound to a model and a metric batch. Immutable; apply()
/// is reentrant.
class MetricOperator final : public LinearOperator {
 public:
  MetricOperator(Mlp model, DenseMatrix metric_inputs, OutputModel om, double damping);

  std::size_t dim() const override { return model_.param_count(); }
  void apply(std::span<const double> in, std::span<double> out) const override;

  double damping() const { return damping_; }
  const Mlp& model() const { return model_; }
  const DenseMatrix& metric_inputs() const { return trace_.input; }
  const OutputModel& output_model() const { return om_; }

 private:
  Mlp model_;
  OutputModel om_;
  double damping_;
  ForwardTrace trace_;
  DenseMatrix weights_;  // Fisher weights divided by n
};

ParamVector metric_vec(const MetricOperator& op, const ParamVector& v);

/// (1/n) sum_i J_r^T H_{L o r} J_r v with the loss Hessian w.r.t. the final
/// pre-activation: I/beta^2, diag(y(1-y)), diag(y) - y y^T.
ParamVector gn_vec_preactivation(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om,
                                 const ParamVector& v);

/// Dense G from per-example output Jacobians (P <= kDenseOracleMaxParams).
DenseMatrix explicit_fisher(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om);

/// Draws t ~ p(t|x) for each row of the model outputs `y`.
DenseMatrix sample_targets(const DenseMatrix& y, const OutputModel& om, Rng& rng);

/// (1/S) sum_s (1/n) sum_i s_i s_i^T with s_i the score of example i under
/// targets sampled from the model.
DenseMatrix mc_fisher(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om,
                      std::size_t n_samples, std::uint64_t seed);

struct ScoreMeanEstimate {
  ParamVector mean;       // estimate of E_t[grad log p]
  ParamVector std_error;  // per-coordinate standard error of the mean
  std::size_t samples = 0;
};

/// Monte-Carlo mean of the batch score (1/n) sum_i grad log p(t_i|x_i)
/// over t ~ p. With `antithetic`, LinearGaussian draws come in pairs
/// (t, 2y - t).
ScoreMeanEstimate score_mean(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om,
                             std::size_t n_samples, std::uint64_t seed, bool antithetic = false);

}  // namespace natgrad
