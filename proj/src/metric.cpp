#include <algorithm>
#include <cmath>
#include <string>

#include "natgrad/kernels.hpp"
#include "natgrad/metric.hpp"

namespace natgrad {
namespace {

const char* weight_name(OutputKind kind) {
  switch (kind) {
    case OutputKind::LinearGaussian: return "1/beta^2";
    case OutputKind::SigmoidBernoulli: return "1/(y(1-y))";
    case OutputKind::SoftmaxMultinomial: return "1/y";
  }
  return "?";
}

void require_dense_scale(const Mlp& m) {
  if (m.param_count() > kDenseOracleMaxParams)
    throw DimensionError("dense metric oracle limited to " + std::to_string(kDenseOracleMaxParams) +
                         " parameters, model has " + std::to_string(m.param_count()));
}

ParamVector unit_vector(const Mlp& m, std::size_t p) {
  ParamVector e(std::vector<double>(m.param_count(), 0.0), parameter_segments(m.architecture()));
  e[p] = 1.0;
  return e;
}

}  // namespace

DenseMatrix fisher_output_weights(const DenseMatrix& y, const OutputModel& om) {
  om.validate();
  DenseMatrix w(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t k = 0; k < y.cols(); ++k) {
      const double yk = y(i, k);
      double v = 0.0;
      switch (om.kind) {
        case OutputKind::LinearGaussian:
          // Fisher of N(y, beta^2): the noise precision.
          v = 1.0 / (om.noise_std * om.noise_std);
          break;
        case OutputKind::SigmoidBernoulli:
          v = 1.0 / std::max(yk * (1.0 - yk), kMetricWeightFloor);
          break;
        case OutputKind::SoftmaxMultinomial:
          v = 1.0 / std::max(yk, kMetricWeightFloor);
          break;
      }
      if (!std::isfinite(v))
        throw NumericError(std::string("Fisher weight ") + weight_name(om.kind) + " at example " +
                           std::to_string(i) + ", output " + std::to_string(k) +
                           " is not finite (y = " + std::to_string(yk) + ")");
      w(i, k) = v;
    }
  }
  return w;
}

MetricOperator::MetricOperator(Mlp model, DenseMatrix metric_inputs, OutputModel om, double damping)
    : model_(std::move(model)), om_(om), damping_(damping) {
  if (!(damping_ >= 0.0) || !std::isfinite(damping_))
    throw ConfigError("metric damping must be finite and >= 0");
  if (metric_inputs.rows() == 0) throw DimensionError("metric batch is empty");
  require_matching_output(model_, om_);
  trace_ = forward(model_, metric_inputs);
  weights_ = fisher_output_weights(trace_.output(), om_);
  kernels::active().scale(weights_.size(), 1.0 / static_cast<double>(trace_.batch_size()),
                          weights_.data());
}

void MetricOperator::apply(std::span<const double> in, std::span<double> out) const {
  require_same_size(in.size(), dim(), "metric_vec");
  require_same_size(out.size(), dim(), "metric_vec");
  const ParamVector v(std::vector<double>(in.begin(), in.end()), model_.params().segments());
  DenseMatrix u = rop_output(model_, trace_, v);
  for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] *= weights_.data()[i];
  const ParamVector gv = lop_output(model_, trace_, u);
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = gv[p] + damping_ * in[p];
    if (!std::isfinite(out[p]))
      throw NumericError("metric-vector product is not finite at parameter " + std::to_string(p));
  }
}

ParamVector metric_vec(const MetricOperator& op, const ParamVector& v) { return op(v); }

ParamVector gn_vec_preactivation(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om,
                                 const ParamVector& v) {
  require_matching_output(m, om);
  require_same_size(v.size(), m.param_count(), "gn_vec_preactivation");
  const ForwardTrace t = forward(m, inputs);
  const DenseMatrix& y = t.output();
  DenseMatrix dr = rop_preactivation(m, t, v);
  const double inv_n = 1.0 / static_cast<double>(t.batch_size());
  for (std::size_t i = 0; i < dr.rows(); ++i) {
    auto d = dr.row(i);
    auto yi = y.row(i);
    switch (om.kind) {
      case OutputKind::LinearGaussian: {
        const double h = 1.0 / (om.noise_std * om.noise_std);
        for (double& x : d) x *= h;
        break;
      }
      case OutputKind::SigmoidBernoulli:
        for (std::size_t k = 0; k < d.size(); ++k) d[k] *= yi[k] * (1.0 - yi[k]);
        break;
      case OutputKind::SoftmaxMultinomial: {
        double s = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) s += yi[k] * d[k];
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = yi[k] * d[k] - yi[k] * s;
        break;
      }
    }
    for (double& x : d) x *= inv_n;
  }
  return lop_preactivation(m, t, dr);
}

DenseMatrix explicit_fisher(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om) {
  require_dense_scale(m);
  require_matching_output(m, om);
  const std::size_t p_count = m.param_count();
  const ForwardTrace t = forward(m, inputs);
  const std::size_t n = t.batch_size(), o = m.output_dim();
  const DenseMatrix w = fisher_output_weights(t.output(), om);

  // jac[(i*o + k) * P + p] = d y_ik / d theta_p
  std::vector<double> jac(n * o * p_count);
  for (std::size_t p = 0; p < p_count; ++p) {
    const DenseMatrix col = rop_output(m, t, unit_vector(m, p));
    for (std::size_t ik = 0; ik < n * o; ++ik) jac[ik * p_count + p] = col.data()[ik];
  }
  DenseMatrix g(p_count, p_count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < o; ++k) {
      const double* jr = jac.data() + (i * o + k) * p_count;
      const double wk = w(i, k) / static_cast<double>(n);
      for (std::size_t a = 0; a < p_count; ++a) {
        const double s = wk * jr[a];
        for (std::size_t b = 0; b < p_count; ++b) g(a, b) += s * jr[b];
      }
    }
  }
  for (std::size_t a = 0; a < p_count; ++a) {
    for (std::size_t b = a + 1; b < p_count; ++b) {
      const double s = 0.5 * (g(a, b) + g(b, a));
      g(a, b) = s;
      g(b, a) = s;
    }
  }
  return g;
}

DenseMatrix sample_targets(const DenseMatrix& y, const OutputModel& om, Rng& rng) {
  DenseMatrix t(y.rows(), y.cols());
  switch (om.kind) {
    case OutputKind::LinearGaussian:
      for (std::size_t i = 0; i < y.size(); ++i) t.data()[i] = y.data()[i] + om.noise_std * rng.normal();
      break;
    case OutputKind::SigmoidBernoulli:
      for (std::size_t i = 0; i < y.size(); ++i) t.data()[i] = rng.bernoulli(y.data()[i]) ? 1.0 : 0.0;
      break;
    case OutputKind::SoftmaxMultinomial:
      for (std::size_t i = 0; i < y.rows(); ++i) t(i, rng.categorical(y.row(i))) = 1.0;
      break;
  }
  return t;
}

DenseMatrix mc_fisher(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om,
                      std::size_t n_samples, std::uint64_t seed) {
  require_dense_scale(m);
  require_matching_output(m, om);
  if (n_samples == 0) throw ConfigError("mc_fisher needs at least one sample");
  const std::size_t p_count = m.param_count();
  const std::size_t n = inputs.rows();
  Rng rng(seed);
  std::vector<Batch> singles;
  std::vector<DenseMatrix> outputs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx[] = {i};
    singles.push_back(Batch{inputs.select_rows(idx), std::nullopt});
    outputs.push_back(forward(m, singles.back().inputs).output());
  }
  DenseMatrix g(p_count, p_count);
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      singles[i].targets = sample_targets(outputs[i], om, rng);
      const ParamVector score = gradient(m, singles[i], om);
      for (std::size_t a = 0; a < p_count; ++a)
        for (std::size_t b = 0; b < p_count; ++b) g(a, b) += score[a] * score[b];
    }
  }
  kernels::active().scale(g.size(), 1.0 / static_cast<double>(n_samples * n), g.data());
  return g;
}

ScoreMeanEstimate score_mean(const Mlp& m, const DenseMatrix& inputs, const OutputModel& om,
                             std::size_t n_samples, std::uint64_t seed, bool antithetic) {
  require_matching_output(m, om);
  if (n_samples == 0) throw ConfigError("score_mean needs at least one sample");
  if (antithetic && om.kind != OutputKind::LinearGaussian)
    throw ConfigError("antithetic sampling is only defined for LinearGaussian");
  const std::size_t p_count = m.param_count();
  const DenseMatrix y = forward(m, inputs).output();
  Rng rng(seed);
  std::vector<double> sum(p_count, 0.0), sum_sq(p_count, 0.0);
  Batch batch{inputs, std::nullopt};
  std::size_t drawn = 0;
  auto accumulate = [&](const DenseMatrix& t) {
    batch.targets = t;
    const ParamVector grad = gradient(m, batch, om);
    for (std::size_t p = 0; p < p_count; ++p) {
      const double sc = -grad[p];
      sum[p] += sc;
      sum_sq[p] += sc * sc;
    }
    ++drawn;
  };
  while (drawn < n_samples) {
    const DenseMatrix t = sample_targets(y, om, rng);
    accumulate(t);
    if (antithetic && drawn < n_samples) {
      DenseMatrix mirror(t.rows(), t.cols());
      for (std::size_t i = 0; i < t.size(); ++i) mirror.data()[i] = 2.0 * y.data()[i] - t.data()[i];
      accumulate(mirror);
    }
  }
  ScoreMeanEstimate est;
  est.samples = drawn;
  est.mean = ParamVector(p_count);
  est.std_error = ParamVector(p_count);
  const double s = static_cast<double>(drawn);
  for (std::size_t p = 0; p < p_count; ++p) {
    const double mean = sum[p] / s;
    const double var = drawn > 1 ? std::max(0.0, (sum_sq[p] - s * mean * mean) / (s - 1.0)) : 0.0;
    est.mean[p] = mean;
    est.std_error[p] = std::sqrt(var / s);
  }
  return est;
}

}  // namespace natgrad
