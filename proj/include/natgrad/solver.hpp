#pragma once

#include <functional>
#include <string>

#include "natgrad/core.hpp"

namespace natgrad {

struct SolverConfig {
  int max_iters = 20;
  double rtol = 1e-4;
  /// Fraction of the previous solution used as the next initial guess.
  double warm_start_scale = 0.6;

  void validate() const;
};

enum class Termination { Converged, MaxIters, Breakdown };

std::string to_string(Termination t);

struct SolverResult {
  ParamVector x;
  int iterations = 0;
  /// |b - A x| recomputed from scratch for the returned x.
  double residual_norm = 0.0;
  Termination termination = Termination::MaxIters;
};

/// Called after every iteration with the iteration count and current iterate.
using CgObserver = std::function<void(int, const ParamVector&)>;

/// Truncated linear conjugate gradient for A x = b starting from x0.
/// Stops when |r|/|b| <= rtol or after max_iters iterations. Non-positive
/// curvature p^T A p <= 0 ends the solve with Breakdown and the last iterate.
/// The recursive residual is refreshed from b - A x every 10 iterations.
SolverResult cg_solve(const LinearOperator& a, const ParamVector& b, const ParamVector& x0,
                      const SolverConfig& cfg, const CgObserver& observer = {});

}  // namespace natgrad
