#pragma once

// Optimizers: minibatch SGD, natural gradient descent (truncated-Newton
// solve of (G + lambda I) x = g, Levenberg-Marquardt damping, optional
// backtracking line search) and natural conjugate gradient (joint search
// over the step along the natural direction and the previous direction).
//
// The step functions work on an abstract Objective and MetricProvider so
// they can be driven by an MLP or by a synthetic quadratic.

#include <functional>
#include <memory>
#include <optional>

#include "natgrad/core.hpp"
#include "natgrad/metric.hpp"
#include "natgrad/model.hpp"
#include "natgrad/solver.hpp"

namespace natgrad {

class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dim() const = 0;
  virtual double value(const ParamVector& theta) const = 0;
  virtual LossAndGradient value_and_gradient(const ParamVector& theta) const = 0;
};

/// Builds (G(theta) + damping I).
class MetricProvider {
 public:
  virtual ~MetricProvider() = default;
  virtual std::unique_ptr<LinearOperator> metric(const ParamVector& theta, double damping) const = 0;
};

/// Mean negative log-likelihood of an MLP on a fixed batch.
class MlpObjective final : public Objective {
 public:
  MlpObjective(Architecture arch, Batch batch, OutputModel om);
  std::size_t dim() const override { return arch_.param_count(); }
  double value(const ParamVector& theta) const override;
  LossAndGradient value_and_gradient(const ParamVector& theta) const override;

 private:
  Architecture arch_;
  Batch batch_;
  OutputModel om_;
};

/// Fisher metric of an MLP over a fixed set of inputs.
class MlpMetric final : public MetricProvider {
 public:
  MlpMetric(Architecture arch, DenseMatrix inputs, OutputModel om);
  std::unique_ptr<LinearOperator> metric(const ParamVector& theta, double damping) const override;

 private:
  Architecture arch_;
  DenseMatrix inputs_;
  OutputModel om_;
};

/// Euclidean metric: (1 + damping) I.
class IdentityMetric final : public MetricProvider {
 public:
  explicit IdentityMetric(std::size_t dim) : dim_(dim) {}
  std::unique_ptr<LinearOperator> metric(const ParamVector& theta, double damping) const override;

 private:
  std::size_t dim_;
};

inline constexpr double kMinDamping = 1e-10;
inline constexpr double kMaxDamping = 1e10;

/// Levenberg-Marquardt rule: rho > 3/4 shrinks lambda by 2/3, rho < 1/4
/// grows it by 3/2; result clamped to [kMinDamping, kMaxDamping].
double lm_update(double lambda, double rho);

/// (f_after - f_before) / (-step * g.x); throws UndefinedRatioError when
/// the denominator is zero.
double reduction_ratio(double f_before, double f_after, const ParamVector& g,
                       const ParamVector& x, double step);

struct LineSearchResult {
  double step = 0.0;  // 0 when no step satisfied the sufficient-decrease test
  double value = 0.0;
  bool found = false;
  int evaluations = 0;
};

inline constexpr double kArmijoC = 1e-4;
inline constexpr int kLineSearchHalvings = 20;

/// Largest step in {step0 * 0.5^k, k = 0..20} with
/// loss(theta - step d) <= loss(theta) - 1e-4 * step * g.d.
LineSearchResult line_search_backtracking(const ParamVector& theta, const ParamVector& direction,
                                          const ParamVector& grad,
                                          const std::function<double(const ParamVector&)>& loss_fn,
                                          double step0);

ParamVector sgd_step(const Objective& obj, const ParamVector& theta, double lr);
ParamVector sgd_step(const Architecture& arch, const ParamVector& theta, const Batch& batch,
                     const OutputModel& om, double lr);

struct CgSummary {
  int iterations = 0;
  double residual_norm = 0.0;
  Termination termination = Termination::Converged;
};

struct StepReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  /// Reduction predicted by the first-order model, the negated denominator of rho.
  double predicted_reduction = 0.0;
  double rho = 0.0;
  bool rho_defined = false;
  CgSummary cg;
  double lambda_after = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;  // gamma for NGD, alpha for NCG
  double beta = 0.0;  // NCG coefficient on the previous direction
  bool accepted = true;
  bool pure_natural = true;
  bool line_search_failed = false;
  int loss_evaluations = 0;
};

struct NgdState {
  ParamVector theta;
  double damping = 1.0;
  ParamVector warm;  // previous solution of the damped system
  double learning_rate = 0.3;
  bool line_search = false;
  double line_search_step0 = 1.0;
  bool adapt_damping = true;
  int step_count = 0;

  static NgdState start(ParamVector theta, double damping, double learning_rate);
};

/// One natural gradient step. `line_search_objective` (default: `obj`)
/// scores the backtracking trials.
std::pair<NgdState, StepReport> ngd_step(NgdState state, const Objective& obj,
                                         const MetricProvider& metric, const SolverConfig& cfg,
                                         const Objective* line_search_objective = nullptr);

std::pair<NgdState, StepReport> ngd_step(const Architecture& arch, NgdState state,
                                         const Batch& grad_batch, const DenseMatrix& metric_inputs,
                                         const OutputModel& om, const SolverConfig& cfg);

enum class SubspaceSearch {
  NelderMead,
  /// Fits a quadratic to loss samples and jumps to its minimizer; exact
  /// when the loss is quadratic along the searched subspace.
  QuadraticModel,
};

struct NcgState {
  ParamVector theta;
  double damping = 1.0;
  ParamVector d_prev;  // empty or zero after a reset
  ParamVector warm;
  int steps_since_reset = 0;
  int reset_period = 30;
  double last_alpha = 0.3;
  double last_beta = 0.0;
  bool adapt_damping = true;
  double line_search_step0 = 1.0;
  SubspaceSearch search = SubspaceSearch::NelderMead;
  int max_search_evals = 40;
  int step_count = 0;

  static NcgState start(ParamVector theta, double damping);
};

struct SearchPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double value = 0.0;
  int evaluations = 0;
  bool finite = false;
};

/// Derivative-free minimization of phi over (alpha, beta), starting from the
/// simplex {(s,0), (2s,0), (s,0.5)}. Non-finite values count as +inf; if the
/// whole simplex is non-finite it is shrunk toward the origin.
SearchPoint nelder_mead_2d(const std::function<double(double, double)>& phi, double scale,
                           int max_evals);

/// Exact minimizer of a 2-D quadratic fitted to six samples of phi around
/// the origin (phi(0,0) = `phi0` is given).
std::optional<SearchPoint> quadratic_model_2d(const std::function<double(double, double)>& phi,
                                              double phi0, double alpha_scale, double beta_scale);

/// Exact minimizer of a 1-D quadratic fitted to phi(-h), phi(0), phi(h).
std::optional<SearchPoint> quadratic_model_1d(const std::function<double(double)>& phi,
                                              double phi0, double h);

std::pair<NcgState, StepReport> ncg_step(NcgState state, const Objective& obj,
                                         const MetricProvider& metric, const SolverConfig& cfg);

std::pair<NcgState, StepReport> ncg_step(const Architecture& arch, NcgState state,
                                         const Batch& grad_batch, const DenseMatrix& metric_inputs,
                                         const OutputModel& om, const SolverConfig& cfg);

}  // namespace natgrad
