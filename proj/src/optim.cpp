#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "natgrad/optim.hpp"

namespace natgrad {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTinyAlpha = 1e-12;

double finite_or_inf(double v) { return std::isfinite(v) ? v : kInf; }

CgSummary summarize(const SolverResult& r) { return {r.iterations, r.residual_norm, r.termination}; }

ParamVector initial_guess(const ParamVector& warm, const ParamVector& like, double scale) {
  if (warm.size() != like.size()) return ParamVector::zeros_like(like);
  return scaled(scale, warm);
}

double raise_damping(double lambda) { return std::min(2.0 * lambda, kMaxDamping); }

}  // namespace

MlpObjective::MlpObjective(Architecture arch, Batch batch, OutputModel om)
    : arch_(std::move(arch)), batch_(std::move(batch)), om_(om) {
  arch_.validate();
  if (!batch_.has_targets()) throw DimensionError("objective batch needs targets");
}

double MlpObjective::value(const ParamVector& theta) const {
  return loss(Mlp(arch_, theta), batch_, om_);
}

LossAndGradient MlpObjective::value_and_gradient(const ParamVector& theta) const {
  return loss_and_gradient(Mlp(arch_, theta), batch_, om_);
}

MlpMetric::MlpMetric(Architecture arch, DenseMatrix inputs, OutputModel om)
    : arch_(std::move(arch)), inputs_(std::move(inputs)), om_(om) {}

std::unique_ptr<LinearOperator> MlpMetric::metric(const ParamVector& theta, double damping) const {
  return std::make_unique<MetricOperator>(Mlp(arch_, theta), inputs_, om_, damping);
}

std::unique_ptr<LinearOperator> IdentityMetric::metric(const ParamVector&, double damping) const {
  return std::make_unique<ScaledIdentity>(dim_, 1.0 + damping);
}

double lm_update(double lambda, double rho) {
  double next = lambda;
  if (rho > 0.75) {
    next = lambda * (2.0 / 3.0);
  } else if (rho < 0.25) {
    next = lambda * 1.5;
  }
  return std::clamp(next, kMinDamping, kMaxDamping);
}

double reduction_ratio(double f_before, double f_after, const ParamVector& g, const ParamVector& x,
                       double step) {
  const double denom = -step * dot(g, x);
  if (denom == 0.0 || !std::isfinite(denom))
    throw UndefinedRatioError("reduction ratio: predicted reduction is zero");
  return (f_after - f_before) / denom;
}

LineSearchResult line_search_backtracking(const ParamVector& theta, const ParamVector& direction,
                                          const ParamVector& grad,
                                          const std::function<double(const ParamVector&)>& loss_fn,
                                          double step0) {
  LineSearchResult res;
  const double slope = dot(grad, direction);
  if (!(slope > 0.0) || !(step0 > 0.0)) return res;
  const double f0 = loss_fn(theta);
  res.evaluations = 1;
  res.value = f0;
  if (!std::isfinite(f0)) return res;
  double step = step0;
  for (int k = 0; k <= kLineSearchHalvings; ++k, step *= 0.5) {
    const double f = loss_fn(axpy(-step, direction, theta));
    ++res.evaluations;
    if (std::isfinite(f) && f <= f0 - kArmijoC * step * slope) {
      res.step = step;
      res.value = f;
      res.found = true;
      return res;
    }
  }
  return res;
}

ParamVector sgd_step(const Objective& obj, const ParamVector& theta, double lr) {
  const LossAndGradient lg = obj.value_and_gradient(theta);
  return axpy(-lr, lg.gradient, theta);
}

ParamVector sgd_step(const Architecture& arch, const ParamVector& theta, const Batch& batch,
                     const OutputModel& om, double lr) {
  return sgd_step(MlpObjective(arch, batch, om), theta, lr);
}

NgdState NgdState::start(ParamVector theta, double damping, double learning_rate) {
  NgdState s;
  s.warm = ParamVector::zeros_like(theta);
  s.theta = std::move(theta);
  s.damping = damping;
  s.learning_rate = learning_rate;
  return s;
}

std::pair<NgdState, StepReport> ngd_step(NgdState state, const Objective& obj,
                                         const MetricProvider& metric, const SolverConfig& cfg,
                                         const Objective* line_search_objective) {
  if (!(state.damping > 0.0)) throw ConfigError("NGD damping must be > 0");
  StepReport rep;
  rep.pure_natural = true;
  const LossAndGradient lg = obj.value_and_gradient(state.theta);
  if (!std::isfinite(lg.loss) || !lg.gradient.all_finite())
    throw NumericError("ngd_step: loss or gradient is not finite at the current point");
  rep.loss_before = lg.loss;
  rep.loss_after = lg.loss;
  rep.grad_norm = norm2(lg.gradient);
  rep.loss_evaluations = 1;

  const auto op = metric.metric(state.theta, state.damping);
  const SolverResult sol =
      cg_solve(*op, lg.gradient, initial_guess(state.warm, state.theta, cfg.warm_start_scale), cfg);
  rep.cg = summarize(sol);
  const ParamVector& x = sol.x;

  double step = state.learning_rate;
  if (state.line_search) {
    const Objective& ls_obj = line_search_objective ? *line_search_objective : obj;
    const LineSearchResult ls = line_search_backtracking(
        state.theta, x, lg.gradient, [&](const ParamVector& t) { return ls_obj.value(t); },
        state.line_search_step0);
    rep.loss_evaluations += ls.evaluations;
    step = ls.step;
    rep.line_search_failed = !ls.found;
  }
  rep.step = step;

  if (step == 0.0) {
    rep.accepted = false;
    if (state.adapt_damping) state.damping = lm_update(state.damping, 0.0);
    state.warm = x;
    ++state.step_count;
    rep.lambda_after = state.damping;
    return {std::move(state), rep};
  }

  ParamVector next = axpy(-step, x, state.theta);
  const double f_after = obj.value(next);
  ++rep.loss_evaluations;
  rep.predicted_reduction = step * dot(lg.gradient, x);
  if (!std::isfinite(f_after) || !next.all_finite()) {
    rep.accepted = false;
    state.damping = raise_damping(state.damping);
    ++state.step_count;
    rep.lambda_after = state.damping;
    return {std::move(state), rep};
  }
  rep.loss_after = f_after;
  try {
    rep.rho = reduction_ratio(lg.loss, f_after, lg.gradient, x, step);
    rep.rho_defined = true;
    if (state.adapt_damping) state.damping = lm_update(state.damping, rep.rho);
  } catch (const UndefinedRatioError&) {
    rep.rho = 0.0;
  }
  state.theta = std::move(next);
  state.warm = x;
  ++state.step_count;
  rep.lambda_after = state.damping;
  return {std::move(state), rep};
}

std::pair<NgdState, StepReport> ngd_step(const Architecture& arch, NgdState state,
                                         const Batch& grad_batch, const DenseMatrix& metric_inputs,
                                         const OutputModel& om, const SolverConfig& cfg) {
  const MlpObjective obj(arch, grad_batch, om);
  const MlpMetric met(arch, metric_inputs, om);
  return ngd_step(std::move(state), obj, met, cfg);
}

SearchPoint nelder_mead_2d(const std::function<double(double, double)>& phi, double scale,
                           int max_evals) {
  struct Vertex {
    double a, b, f;
  };
  int evals = 0;
  auto eval = [&](double a, double b) {
    ++evals;
    return Vertex{a, b, finite_or_inf(phi(a, b))};
  };
  std::array<Vertex, 3> v{};
  double s = scale;
  for (;;) {
    v = {eval(s, 0.0), eval(2.0 * s, 0.0), eval(s, 0.5 * s / scale)};
    const bool any_finite = std::any_of(v.begin(), v.end(), [](const Vertex& x) { return x.f < kInf; });
    if (any_finite || evals + 3 > max_evals) break;
    s *= 0.5;
  }
  auto order = [&] { std::sort(v.begin(), v.end(), [](const Vertex& x, const Vertex& y) { return x.f < y.f; }); };
  order();
  while (v[0].f < kInf && evals + 2 <= max_evals) {
    const double ca = 0.5 * (v[0].a + v[1].a), cb = 0.5 * (v[0].b + v[1].b);
    const Vertex& w = v[2];
    const Vertex r = eval(2.0 * ca - w.a, 2.0 * cb - w.b);
    if (r.f < v[0].f) {
      const Vertex e = eval(3.0 * ca - 2.0 * w.a, 3.0 * cb - 2.0 * w.b);
      v[2] = e.f < r.f ? e : r;
    } else if (r.f < v[1].f) {
      v[2] = r;
    } else {
      const Vertex c = r.f < w.f ? eval(ca + 0.5 * (r.a - ca), cb + 0.5 * (r.b - cb))
                                 : eval(ca + 0.5 * (w.a - ca), cb + 0.5 * (w.b - cb));
      if (c.f < std::min(r.f, w.f)) {
        v[2] = c;
      } else {
        if (evals + 2 > max_evals) break;
        v[1] = eval(v[0].a + 0.5 * (v[1].a - v[0].a), v[0].b + 0.5 * (v[1].b - v[0].b));
        v[2] = eval(v[0].a + 0.5 * (v[2].a - v[0].a), v[0].b + 0.5 * (v[2].b - v[0].b));
      }
    }
    order();
  }
  SearchPoint best{v[0].a, v[0].b, v[0].f, evals, v[0].f < kInf};
  return best;
}

std::optional<SearchPoint> quadratic_model_2d(const std::function<double(double, double)>& phi,
                                              double phi0, double alpha_scale, double beta_scale) {
  const double h = alpha_scale, k = beta_scale;
  const double fa_p = phi(h, 0.0), fa_m = phi(-h, 0.0);
  const double fb_p = phi(0.0, k), fb_m = phi(0.0, -k);
  const double fab = phi(h, k);
  for (double f : {phi0, fa_p, fa_m, fb_p, fb_m, fab})
    if (!std::isfinite(f)) return std::nullopt;
  const double haa = (fa_p + fa_m - 2.0 * phi0) / (h * h);
  const double hbb = (fb_p + fb_m - 2.0 * phi0) / (k * k);
  const double ga = (fa_p - fa_m) / (2.0 * h);
  const double gb = (fb_p - fb_m) / (2.0 * k);
  const double hab = (fab - phi0 - ga * h - gb * k - 0.5 * haa * h * h - 0.5 * hbb * k * k) / (h * k);
  const double det = haa * hbb - hab * hab;
  if (!(haa > 0.0) || !(det > 0.0)) return std::nullopt;
  SearchPoint p;
  p.alpha = (-ga * hbb + gb * hab) / det;
  p.beta = (-gb * haa + ga * hab) / det;
  p.value = phi(p.alpha, p.beta);
  p.evaluations = 6;
  p.finite = std::isfinite(p.value);
  if (!p.finite) return std::nullopt;
  return p;
}

std::optional<SearchPoint> quadratic_model_1d(const std::function<double(double)>& phi, double phi0,
                                              double h) {
  const double fp = phi(h), fm = phi(-h);
  if (!std::isfinite(phi0) || !std::isfinite(fp) || !std::isfinite(fm)) return std::nullopt;
  const double curv = (fp + fm - 2.0 * phi0) / (h * h);
  const double slope = (fp - fm) / (2.0 * h);
  if (!(curv > 0.0)) return std::nullopt;
  SearchPoint p;
  p.alpha = -slope / curv;
  p.value = phi(p.alpha);
  p.evaluations = 3;
  p.finite = std::isfinite(p.value);
  if (!p.finite) return std::nullopt;
  return p;
}

NcgState NcgState::start(ParamVector theta, double damping) {
  NcgState s;
  s.warm = ParamVector::zeros_like(theta);
  s.d_prev = ParamVector::zeros_like(theta);
  s.theta = std::move(theta);
  s.damping = damping;
  return s;
}

std::pair<NcgState, StepReport> ncg_step(NcgState state, const Objective& obj,
                                         const MetricProvider& metric, const SolverConfig& cfg) {
  if (!(state.damping > 0.0)) throw ConfigError("NCG damping must be > 0");
  if (state.reset_period < 1) throw ConfigError("NCG reset period must be >= 1");
  StepReport rep;
  const LossAndGradient lg = obj.value_and_gradient(state.theta);
  if (!std::isfinite(lg.loss) || !lg.gradient.all_finite())
    throw NumericError("ncg_step: loss or gradient is not finite at the current point");
  const double f0 = lg.loss;
  const ParamVector& g = lg.gradient;
  rep.loss_before = f0;
  rep.loss_after = f0;
  rep.grad_norm = norm2(g);
  rep.loss_evaluations = 1;

  const auto op = metric.metric(state.theta, state.damping);
  const SolverResult sol = cg_solve(*op, g, initial_guess(state.warm, state.theta, cfg.warm_start_scale), cfg);
  rep.cg = summarize(sol);
  const ParamVector& x = sol.x;
  state.warm = x;
  ++state.step_count;

  const bool history = state.d_prev.size() == x.size() && !state.d_prev.is_zero();
  bool pure = !history;
  if (++state.steps_since_reset >= state.reset_period) {
    pure = true;
    state.steps_since_reset = 0;
  }
  rep.pure_natural = pure;
  const ParamVector d = history ? state.d_prev : ParamVector::zeros_like(x);

  auto phi = [&](double a, double b) {
    ParamVector t = axpy(-a, x, state.theta);
    if (b != 0.0) axpy_inplace(-b, d, t);
    return obj.value(t);
  };

  auto reject = [&](bool non_finite) {
    rep.accepted = false;
    state.d_prev = ParamVector::zeros_like(x);
    if (non_finite) {
      state.damping = raise_damping(state.damping);
    } else if (state.adapt_damping) {
      state.damping = lm_update(state.damping, 0.0);
    }
    rep.lambda_after = state.damping;
    return std::pair<NcgState, StepReport>{std::move(state), rep};
  };

  double alpha = 0.0, beta = 0.0, f_after = f0;
  if (pure) {
    std::optional<SearchPoint> q;
    if (state.search == SubspaceSearch::QuadraticModel) {
      q = quadratic_model_1d([&](double a) { return phi(a, 0.0); }, f0, state.last_alpha);
      if (q) rep.loss_evaluations += q->evaluations;
    }
    if (q) {
      alpha = q->alpha;
      f_after = q->value;
    } else {
      const LineSearchResult ls = line_search_backtracking(
          state.theta, x, g, [&](const ParamVector& t) { return obj.value(t); }, state.line_search_step0);
      rep.loss_evaluations += ls.evaluations;
      if (!ls.found) {
        rep.line_search_failed = true;
        return reject(false);
      }
      alpha = ls.step;
      f_after = ls.value;
    }
  } else {
    std::optional<SearchPoint> sp;
    if (state.search == SubspaceSearch::QuadraticModel)
      sp = quadratic_model_2d(phi, f0, state.last_alpha, 0.5);
    if (!sp) sp = nelder_mead_2d(phi, state.last_alpha, state.max_search_evals);
    rep.loss_evaluations += sp->evaluations;
    if (!sp->finite) return reject(true);
    if (!(sp->value < f0)) return reject(false);
    alpha = sp->alpha;
    beta = sp->beta;
    f_after = sp->value;
  }

  ParamVector next = axpy(-alpha, x, state.theta);
  if (beta != 0.0) axpy_inplace(-beta, d, next);
  if (!std::isfinite(f_after) || !next.all_finite()) return reject(true);

  ParamVector dir = x;
  if (std::abs(alpha) >= kTinyAlpha && beta != 0.0) axpy_inplace(beta / alpha, d, dir);

  rep.step = alpha;
  rep.beta = beta;
  rep.loss_after = f_after;
  rep.predicted_reduction = alpha * dot(g, x) + beta * dot(g, d);
  if (rep.predicted_reduction != 0.0 && std::isfinite(rep.predicted_reduction)) {
    rep.rho = (f_after - f0) / -rep.predicted_reduction;
    rep.rho_defined = true;
    if (state.adapt_damping) state.damping = lm_update(state.damping, rep.rho);
  }
  if (std::abs(alpha) > 1e-8) state.last_alpha = std::abs(alpha);
  state.last_beta = beta;
  state.theta = std::move(next);
  state.d_prev = std::move(dir);
  rep.lambda_after = state.damping;
  return {std::move(state), rep};
}

std::pair<NcgState, StepReport> ncg_step(const Architecture& arch, NcgState state,
                                         const Batch& grad_batch, const DenseMatrix& metric_inputs,
                                         const OutputModel& om, const SolverConfig& cfg) {
  const MlpObjective obj(arch, grad_batch, om);
  const MlpMetric met(arch, metric_inputs, om);
  return ncg_step(std::move(state), obj, met, cfg);
}

}  // namespace natgrad
