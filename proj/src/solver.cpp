#include <cmath>
#include <string>

#include "natgrad/solver.hpp"

namespace natgrad {
namespace {

constexpr int kResidualRefreshPeriod = 10;

ParamVector residual(const LinearOperator& a, const ParamVector& b, const ParamVector& x) {
  return subtract(b, a(x));
}

void require_finite(const ParamVector& v, const char* what, int iter) {
  if (!v.all_finite())
    throw NumericError(std::string("cg_solve: non-finite ") + what + " at iteration " +
                       std::to_string(iter));
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iters < 1) throw ConfigError("solver.max_iters must be >= 1");
  if (!(rtol > 0.0 && rtol < 1.0)) throw ConfigError("solver.rtol must lie in (0, 1)");
  if (!(warm_start_scale >= 0.0 && warm_start_scale <= 1.0))
    throw ConfigError("solver.warm_scale must lie in [0, 1]");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIters: return "max_iters";
    case Termination::Breakdown: return "breakdown";
  }
  return "?";
}

SolverResult cg_solve(const LinearOperator& a, const ParamVector& b, const ParamVector& x0,
                      const SolverConfig& cfg, const CgObserver& observer) {
  cfg.validate();
  require_same_size(b.size(), a.dim(), "cg_solve (rhs)");
  require_same_size(x0.size(), a.dim(), "cg_solve (initial guess)");
  require_finite(b, "right-hand side", 0);
  require_finite(x0, "initial guess", 0);

  SolverResult res;
  const double b_norm = norm2(b);
  if (b_norm == 0.0) {
    // A is positive definite by contract, so the solution is exactly zero.
    res.x = ParamVector::zeros_like(b);
    res.termination = Termination::Converged;
    return res;
  }
  const double target = cfg.rtol * b_norm;

  ParamVector x = x0;
  ParamVector r = residual(a, b, x);
  double rr = dot(r, r);
  if (std::sqrt(rr) <= target) {
    res.x = std::move(x);
    res.residual_norm = std::sqrt(rr);
    res.termination = Termination::Converged;
    return res;
  }

  ParamVector p = r;
  res.termination = Termination::MaxIters;
  int k = 0;
  while (k < cfg.max_iters) {
    const ParamVector ap = a(p);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) throw NumericError("cg_solve: non-finite curvature");
    if (pap <= 0.0) {
      res.termination = Termination::Breakdown;
      break;
    }
    const double alpha = rr / pap;
    axpy_inplace(alpha, p, x);
    ++k;
    require_finite(x, "iterate", k);
    if (k % kResidualRefreshPeriod == 0) {
      r = residual(a, b, x);
    } else {
      axpy_inplace(-alpha, ap, r);
    }
    const double rr_new = dot(r, r);
    if (observer) observer(k, x);
    if (std::sqrt(rr_new) <= target) {
      res.termination = Termination::Converged;
      rr = rr_new;
      break;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    // p <- r + beta p
    ParamVector next = r;
    axpy_inplace(beta, p, next);
    p = std::move(next);
  }
  res.iterations = k;
  res.residual_norm = norm2(residual(a, b, x));
  res.x = std::move(x);
  return res;
}

}  // namespace natgrad
