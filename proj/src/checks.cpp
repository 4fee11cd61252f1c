#include <algorithm>
#include <cmath>
#include <cstdio>

#include "natgrad/checks.hpp"
#include "natgrad/error.hpp"
#include "natgrad/metric.hpp"
#include "natgrad/solver.hpp"

namespace natgrad {
namespace {

constexpr int kNets = 20;
const OutputKind kKinds[3] = {OutputKind::LinearGaussian, OutputKind::SigmoidBernoulli,
                              OutputKind::SoftmaxMultinomial};

OutputModel model_for(OutputKind k) {
  switch (k) {
    case OutputKind::LinearGaussian: return OutputModel::linear_gaussian(0.7);
    case OutputKind::SigmoidBernoulli: return OutputModel::sigmoid_bernoulli();
    case OutputKind::SoftmaxMultinomial: return OutputModel::softmax_multinomial();
  }
  return OutputModel::sigmoid_bernoulli();
}

ParamVector random_vector(Rng& rng, std::size_t n) {
  ParamVector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

DenseMatrix random_targets(Rng& rng, const Mlp& m, const DenseMatrix& x, const OutputModel& om) {
  const DenseMatrix y = forward(m, x).output();
  return sample_targets(y, om, rng);
}

std::string label(const char* what, int net, OutputKind k) {
  return std::string(what) + " net " + std::to_string(net) + " " + to_string(k);
}

double max_abs_diff_scaled(std::span<const double> a, std::span<const double> b) {
  double ref = 1.0, err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ref = std::max(ref, std::abs(b[i]));
    err = std::max(err, std::abs(a[i] - b[i]));
  }
  return err / ref;
}

CheckReport suite_grad(Rng& rng) {
  CheckReport rep{"grad", {}};
  const double h = 1e-5;
  for (int net = 0; net < kNets; ++net) {
    for (OutputKind k : kKinds) {
      const Mlp m = random_net(rng, k);
      const OutputModel om = model_for(k);
      const DenseMatrix x = random_inputs(rng, 7, m.input_dim());
      const Batch batch{x, random_targets(rng, m, x, om)};
      const ParamVector g = gradient(m, batch, om);
      ParamVector fd(g.size());
      for (std::size_t j = 0; j < g.size(); ++j) {
        ParamVector p = m.params(), q = m.params();
        p[j] += h;
        q[j] -= h;
        fd[j] = (loss(m.with_params(p), batch, om) - loss(m.with_params(q), batch, om)) / (2 * h);
      }
      rep.cases.push_back({label("gradient", net, k), max_abs_diff_scaled(g.span(), fd.span()), 1e-6});
    }
  }
  return rep;
}

CheckReport suite_rop(Rng& rng) {
  CheckReport rep{"rop", {}};
  const double h = 1e-5;
  for (int net = 0; net < kNets; ++net) {
    for (OutputKind k : kKinds) {
      const Mlp m = random_net(rng, k);
      const DenseMatrix x = random_inputs(rng, 5, m.input_dim());
      const ParamVector v = random_vector(rng, m.param_count());
      const ForwardTrace tr = forward(m, x);
      for (bool pre : {false, true}) {
        const DenseMatrix jv = pre ? rop_preactivation(m, tr, v) : rop_output(m, tr, v);
        const ForwardTrace up = forward(m.with_params(axpy(h, v, m.params())), x);
        const ForwardTrace dn = forward(m.with_params(axpy(-h, v, m.params())), x);
        const DenseMatrix& yu = pre ? up.output_preactivation() : up.output();
        const DenseMatrix& yd = pre ? dn.output_preactivation() : dn.output();
        std::vector<double> fd(jv.size());
        for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = (yu.data()[i] - yd.data()[i]) / (2 * h);
        rep.cases.push_back({label(pre ? "R-op preact" : "R-op output", net, k),
                             max_abs_diff_scaled(jv.values(), fd), 1e-6});

        DenseMatrix u(jv.rows(), jv.cols());
        for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
        const ParamVector jtu = pre ? lop_preactivation(m, tr, u) : lop_output(m, tr, u);
        const double lhs = frobenius_inner(u, jv), rhs = dot(jtu, v);
        const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
        rep.cases.push_back({label(pre ? "adjoint preact" : "adjoint output", net, k),
                             std::abs(lhs - rhs) / scale, 1e-10});
      }
    }
  }
  return rep;
}

CheckReport suite_fisher(Rng& rng) {
  CheckReport rep{"fisher", {}};
  for (int net = 0; net < kNets; ++net) {
    for (OutputKind k : kKinds) {
      const Mlp m = random_net(rng, k);
      const OutputModel om = model_for(k);
      const DenseMatrix x = random_inputs(rng, 6, m.input_dim());
      const ParamVector v = random_vector(rng, m.param_count());
      const MetricOperator op(m, x, om, 0.0);
      const ParamVector gv = metric_vec(op, v);
      const ParamVector dense = matvec(explicit_fisher(m, x, om), v);
      rep.cases.push_back({label("matrix-free vs dense", net, k), relative_error(gv.span(), dense.span()), 1e-8});
    }
  }
  return rep;
}

CheckReport suite_gn_equiv(Rng& rng) {
  CheckReport rep{"gn-equiv", {}};
  for (int net = 0; net < kNets; ++net) {
    for (OutputKind k : kKinds) {
      const Mlp m = random_net(rng, k);
      const OutputModel om = model_for(k);
      const DenseMatrix x = random_inputs(rng, 6, m.input_dim());
      const ParamVector v = random_vector(rng, m.param_count());
      const ParamVector fisher = metric_vec(MetricOperator(m, x, om, 0.0), v);
      const ParamVector gn = gn_vec_preactivation(m, x, om, v);
      rep.cases.push_back({label("fisher vs gauss-newton", net, k), relative_error(fisher.span(), gn.span()), 1e-9});
    }
  }
  return rep;
}

// Gaussian elimination with partial pivoting.
std::vector<double> direct_solve(DenseMatrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

// A = M^T M + shift I. With shift = n the spectrum is tight and CG ends
// within n+2 iterations; with a small shift rounding stretches the
// iteration count past n, so only the solution is compared.
DenseMatrix random_spd(Rng& rng, std::size_t n, double shift) {
  DenseMatrix q(n, n);
  for (auto* p = q.data(); p != q.data() + q.size(); ++p) *p = rng.normal();
  DenseMatrix a = matmul(q.transposed(), q);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += shift;
  return a;
}

CheckReport suite_cg(Rng& rng) {
  CheckReport rep{"cg", {}};
  const std::size_t n = 30;
  for (int trial = 0; trial < 15; ++trial) {
    const bool well = trial < 10;
    const DenseMatrix a = random_spd(rng, n, well ? static_cast<double>(n) : 0.5);
    const ParamVector b = random_vector(rng, n);
    SolverConfig cfg;
    cfg.max_iters = 10 * static_cast<int>(n);
    cfg.rtol = 1e-12;
    const SolverResult r = cg_solve(DenseOperator(a), b, ParamVector(n), cfg);
    const std::vector<double> x = direct_solve(a, b.values());
    const std::string tag = std::string(well ? "spd" : "ill-conditioned spd") + " 30x30 #" + std::to_string(trial);
    rep.cases.push_back({tag + " vs direct solve", relative_error(r.x.span(), x), 1e-8});
    if (well)
      rep.cases.push_back({tag + " iterations", static_cast<double>(r.iterations), static_cast<double>(n + 2)});
  }
  return rep;
}

CheckReport suite_score_mean(Rng& rng) {
  CheckReport rep{"score-mean", {}};
  for (OutputKind k : kKinds) {
    const Mlp m = random_net(rng, k, 30);
    const DenseMatrix x = random_inputs(rng, 4, m.input_dim());
    const ScoreMeanEstimate est = score_mean(m, x, model_for(k), 100000, rng.next_u64());
    double worst = 0.0;
    for (std::size_t j = 0; j < est.mean.size(); ++j)
      worst = std::max(worst, std::abs(est.mean[j]) / std::max(est.std_error[j], 1e-300));
    rep.cases.push_back({std::string("max |mean|/SE ") + to_string(k), worst, 4.0});
  }
  return rep;
}

}  // namespace

bool CheckReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const CheckCase& c) { return c.passed(); });
}

void CheckReport::print(std::ostream& os) const {
  char buf[64];
  for (const auto& c : cases) {
    std::snprintf(buf, sizeof buf, "%.3e <= %.1e", c.error, c.tolerance);
    os << (c.passed() ? "PASS " : "FAIL ") << suite << ": " << c.label << "  " << buf << '\n';
  }
  const auto fails = std::count_if(cases.begin(), cases.end(), [](const CheckCase& c) { return !c.passed(); });
  os << suite << ": " << cases.size() - static_cast<std::size_t>(fails) << "/" << cases.size() << " passed\n";
}

std::vector<std::string> check_suites() { return {"grad", "rop", "fisher", "gn-equiv", "cg", "score-mean"}; }

CheckReport run_check(const std::string& suite, std::uint64_t seed) {
  Rng rng(seed);
  if (suite == "grad") return suite_grad(rng);
  if (suite == "rop") return suite_rop(rng);
  if (suite == "fisher") return suite_fisher(rng);
  if (suite == "gn-equiv") return suite_gn_equiv(rng);
  if (suite == "cg") return suite_cg(rng);
  if (suite == "score-mean") return suite_score_mean(rng);
  throw ConfigError("unknown check suite '" + suite + "'");
}

Mlp random_net(Rng& rng, OutputKind kind, std::size_t max_params) {
  const Activation hidden[3] = {Activation::Sigmoid, Activation::Tanh, Activation::Linear};
  for (;;) {
    Architecture arch;
    const std::size_t layers = 1 + rng.below(3);
    arch.dims.push_back(1 + rng.below(4));
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      arch.dims.push_back(1 + rng.below(5));
      arch.acts.push_back(hidden[rng.below(3)]);
    }
    const std::size_t out = kind == OutputKind::SoftmaxMultinomial ? 2 + rng.below(3) : 1 + rng.below(3);
    arch.dims.push_back(out);
    arch.acts.push_back(kind == OutputKind::LinearGaussian     ? Activation::Linear
                        : kind == OutputKind::SigmoidBernoulli ? Activation::Sigmoid
                                                               : Activation::Softmax);
    if (arch.param_count() > max_params) continue;
    ParamVector p(arch.param_count());
    for (auto& v : p) v = 0.5 * rng.normal();
    return Mlp(arch, std::move(p));
  }
}

DenseMatrix random_inputs(Rng& rng, std::size_t n, std::size_t d) {
  DenseMatrix x(n, d);
  for (auto* p = x.data(); p != x.data() + x.size(); ++p) *p = rng.normal();
  return x;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "relative_error");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace natgrad
