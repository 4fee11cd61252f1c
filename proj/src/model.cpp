#include <algorithm>
#include <cmath>
#include <string>

#include "natgrad/kernels.hpp"
#include "natgrad/model.hpp"
#include "natgrad/rng.hpp"

namespace natgrad {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void activate(Activation act, const DenseMatrix& pre, DenseMatrix& post) {
  const std::size_t n = pre.rows(), o = pre.cols();
  switch (act) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < pre.size(); ++i) post.data()[i] = sigmoid(pre.data()[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < pre.size(); ++i) post.data()[i] = std::tanh(pre.data()[i]);
      break;
    case Activation::Linear:
      post = pre;
      break;
    case Activation::Softmax:
      for (std::size_t i = 0; i < n; ++i) {
        auto r = pre.row(i);
        auto y = post.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (std::size_t k = 0; k < o; ++k) {
          y[k] = std::exp(r[k] - mx);
          z += y[k];
        }
        for (std::size_t k = 0; k < o; ++k) y[k] /= z;
      }
      break;
  }
}

// In-place: delta <- (d act / d r)^T delta, given the activation output y.
// All supported Jacobians are symmetric, so the same routine serves the
// tangent (R-op) and adjoint (L-op) directions.
void apply_activation_jacobian(Activation act, const DenseMatrix& y, DenseMatrix& delta) {
  switch (act) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = y.data()[i];
        delta.data()[i] *= a * (1.0 - a);
      }
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = y.data()[i];
        delta.data()[i] *= 1.0 - a * a;
      }
      break;
    case Activation::Linear:
      break;
    case Activation::Softmax:
      for (std::size_t i = 0; i < y.rows(); ++i) {
        auto yi = y.row(i);
        auto di = delta.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < yi.size(); ++k) s += yi[k] * di[k];
        for (std::size_t k = 0; k < yi.size(); ++k) di[k] = yi[k] * (di[k] - s);
      }
      break;
  }
}

const DenseMatrix& layer_input(const ForwardTrace& t, std::size_t k) {
  return k == 0 ? t.input : t.post[k - 1];
}

void check_trace(const Mlp& m, const ForwardTrace& t) {
  if (t.pre.size() != m.layer_count() || t.input.cols() != m.input_dim())
    throw DimensionError("trace does not belong to this model");
}

// Tangent of the final pre-activation (and optionally of the activation).
DenseMatrix rop_impl(const Mlp& m, const ForwardTrace& t, const ParamVector& v, bool through_output) {
  check_trace(m, t);
  require_same_size(v.size(), m.param_count(), "rop");
  const auto& kern = kernels::active();
  const std::size_t n = t.batch_size();
  const auto& dims = m.architecture().dims;
  DenseMatrix d_in;  // tangent of the current layer input; empty == 0
  DenseMatrix dr;
  for (std::size_t k = 0; k < m.layer_count(); ++k) {
    const std::size_t in = dims[k], out = dims[k + 1];
    const double* dw = v.data() + m.weight_offset(k);
    const double* db = v.data() + m.bias_offset(k);
    dr = DenseMatrix(n, out);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(db, out, dr.data() + i * out);
    kern.gemm_nt(n, out, in, layer_input(t, k).data(), dw, dr.data());
    if (k > 0) kern.gemm_nt(n, out, in, d_in.data(), m.weights(k).data(), dr.data());
    if (k + 1 < m.layer_count() || through_output) {
      d_in = dr;
      apply_activation_jacobian(m.activation(k), t.post[k], d_in);
    }
  }
  return through_output ? d_in : dr;
}

// Reverse sweep seeded with the adjoint of the final pre-activation.
ParamVector backprop(const Mlp& m, const ForwardTrace& t, DenseMatrix delta) {
  const auto& kern = kernels::active();
  const std::size_t n = t.batch_size();
  const auto& dims = m.architecture().dims;
  ParamVector grad(std::vector<double>(m.param_count(), 0.0), parameter_segments(m.architecture()));
  for (std::size_t k = m.layer_count(); k-- > 0;) {
    const std::size_t in = dims[k], out = dims[k + 1];
    kern.gemm_tn(out, in, n, delta.data(), layer_input(t, k).data(), grad.data() + m.weight_offset(k));
    double* gb = grad.data() + m.bias_offset(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double* di = delta.data() + i * out;
      for (std::size_t j = 0; j < out; ++j) gb[j] += di[j];
    }
    if (k > 0) {
      DenseMatrix prev(n, in);
      kern.gemm_nn(n, in, out, delta.data(), m.weights(k).data(), prev.data());
      apply_activation_jacobian(m.activation(k - 1), t.post[k - 1], prev);
      delta = std::move(prev);
    }
  }
  return grad;
}

void check_adjoint(const Mlp& m, const ForwardTrace& t, const DenseMatrix& u) {
  check_trace(m, t);
  if (u.rows() != t.batch_size() || u.cols() != m.output_dim())
    throw DimensionError("lop: adjoint shape does not match the outputs");
}

void check_targets(const ForwardTrace& t, const DenseMatrix& targets, const OutputModel& om) {
  const DenseMatrix& y = t.output();
  if (targets.rows() != y.rows() || targets.cols() != y.cols())
    throw DimensionError("targets shape does not match the outputs");
  if (om.kind == OutputKind::SigmoidBernoulli) {
    for (double v : targets.values())
      if (!(v >= 0.0 && v <= 1.0)) throw DimensionError("Bernoulli targets must lie in [0,1]");
  } else if (om.kind == OutputKind::SoftmaxMultinomial) {
    for (std::size_t i = 0; i < targets.rows(); ++i) {
      double s = 0.0;
      for (double v : targets.row(i)) {
        if (!(v >= 0.0)) throw DimensionError("multinomial targets must be non-negative");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) throw DimensionError("multinomial target rows must sum to 1");
    }
  }
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  if (name == "softmax") return Activation::Softmax;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t Architecture::param_count() const {
  std::size_t p = 0;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) p += dims[k] * dims[k + 1] + dims[k + 1];
  return p;
}

void Architecture::validate() const {
  if (dims.size() < 2) throw DimensionError("architecture needs at least one layer");
  if (acts.size() + 1 != dims.size())
    throw DimensionError("architecture: " + std::to_string(acts.size()) + " activations for " +
                         std::to_string(dims.size() - 1) + " layers");
  for (std::size_t d : dims)
    if (d == 0) throw DimensionError("architecture: zero-width layer");
  for (std::size_t k = 0; k + 1 < acts.size(); ++k)
    if (acts[k] == Activation::Softmax) throw DimensionError("softmax is only allowed on the final layer");
}

std::vector<Segment> parameter_segments(const Architecture& arch) {
  std::vector<Segment> segs;
  std::size_t off = 0;
  for (std::size_t k = 0; k + 1 < arch.dims.size(); ++k) {
    segs.push_back({off, arch.dims[k + 1], arch.dims[k]});
    off += arch.dims[k + 1] * arch.dims[k];
    segs.push_back({off, arch.dims[k + 1], 1});
    off += arch.dims[k + 1];
  }
  return segs;
}

Mlp::Mlp(Architecture arch, ParamVector params) : arch_(std::move(arch)) {
  arch_.validate();
  require_same_size(params.size(), arch_.param_count(), "Mlp parameters");
  params_ = ParamVector(params.values(), parameter_segments(arch_));
  std::size_t off = 0;
  for (std::size_t k = 0; k < arch_.layer_count(); ++k) {
    offsets_.push_back(off);
    off += arch_.dims[k] * arch_.dims[k + 1] + arch_.dims[k + 1];
  }
}

Mlp Mlp::init(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  std::vector<double> p;
  p.reserve(arch.param_count());
  for (std::size_t k = 0; k < arch.layer_count(); ++k) {
    const std::size_t in = arch.dims[k], out = arch.dims[k + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < in * out; ++i) p.push_back(rng.uniform(-s, s));
    p.insert(p.end(), out, 0.0);
  }
  return Mlp(arch, ParamVector(std::move(p)));
}

Mlp Mlp::with_params(ParamVector params) const { return Mlp(arch_, std::move(params)); }

std::span<const double> Mlp::weights(std::size_t layer) const {
  return {params_.data() + weight_offset(layer), arch_.dims[layer] * arch_.dims[layer + 1]};
}

std::span<const double> Mlp::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), arch_.dims[layer + 1]};
}

ParamVector flatten(const Mlp& m) { return m.params(); }

Mlp unflatten(const Architecture& arch, const ParamVector& params) { return Mlp(arch, params); }

Batch Batch::select(std::span<const std::size_t> indices) const {
  Batch b{inputs.select_rows(indices), std::nullopt};
  if (targets) b.targets = targets->select_rows(indices);
  return b;
}

ForwardTrace forward(const Mlp& m, const DenseMatrix& inputs) {
  if (inputs.cols() != m.input_dim())
    throw DimensionError("forward: input has " + std::to_string(inputs.cols()) +
                         " columns, model expects " + std::to_string(m.input_dim()));
  const auto& kern = kernels::active();
  const std::size_t n = inputs.rows();
  const auto& dims = m.architecture().dims;
  ForwardTrace t;
  t.input = inputs;
  for (std::size_t k = 0; k < m.layer_count(); ++k) {
    const std::size_t in = dims[k], out = dims[k + 1];
    DenseMatrix r(n, out);
    const auto b = m.bias(k);
    for (std::size_t i = 0; i < n; ++i) std::copy(b.begin(), b.end(), r.data() + i * out);
    kern.gemm_nt(n, out, in, layer_input(t, k).data(), m.weights(k).data(), r.data());
    DenseMatrix a(n, out);
    activate(m.activation(k), r, a);
    t.pre.push_back(std::move(r));
    t.post.push_back(std::move(a));
  }
  return t;
}

void OutputModel::validate() const {
  if (kind == OutputKind::LinearGaussian && !(noise_std > 0.0))
    throw ConfigError("LinearGaussian noise_std must be > 0");
}

std::string to_string(OutputKind kind) {
  switch (kind) {
    case OutputKind::LinearGaussian: return "linear-gaussian";
    case OutputKind::SigmoidBernoulli: return "sigmoid-bernoulli";
    case OutputKind::SoftmaxMultinomial: return "softmax-multinomial";
  }
  return "?";
}

OutputKind parse_output_kind(std::string_view name) {
  if (name == "linear-gaussian") return OutputKind::LinearGaussian;
  if (name == "sigmoid-bernoulli") return OutputKind::SigmoidBernoulli;
  if (name == "softmax-multinomial") return OutputKind::SoftmaxMultinomial;
  throw ConfigError("unknown output model '" + std::string(name) + "'");
}

void require_matching_output(const Mlp& m, const OutputModel& om) {
  om.validate();
  const Activation last = m.activation(m.layer_count() - 1);
  const bool ok = (om.kind == OutputKind::LinearGaussian && last == Activation::Linear) ||
                  (om.kind == OutputKind::SigmoidBernoulli && last == Activation::Sigmoid) ||
                  (om.kind == OutputKind::SoftmaxMultinomial && last == Activation::Softmax);
  if (!ok)
    throw DimensionError("output activation '" + to_string(last) + "' does not match output model '" +
                         to_string(om.kind) + "'");
}

double loss(const ForwardTrace& t, const DenseMatrix& targets, const OutputModel& om) {
  check_targets(t, targets, om);
  const DenseMatrix& y = t.output();
  const DenseMatrix& r = t.output_preactivation();
  const std::size_t n = y.rows(), o = y.cols();
  double total = 0.0;
  switch (om.kind) {
    case OutputKind::LinearGaussian: {
      const double inv = 1.0 / (2.0 * om.noise_std * om.noise_std);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = targets.data()[i] - y.data()[i];
        total += e * e * inv;
      }
      break;
    }
    case OutputKind::SigmoidBernoulli:
      // -t log s(r) - (1-t) log(1-s(r)) == softplus(r) - t r
      for (std::size_t i = 0; i < r.size(); ++i)
        total += softplus(r.data()[i]) - targets.data()[i] * r.data()[i];
      break;
    case OutputKind::SoftmaxMultinomial:
      for (std::size_t i = 0; i < n; ++i) {
        auto ri = r.row(i);
        auto ti = targets.row(i);
        const double mx = *std::max_element(ri.begin(), ri.end());
        double z = 0.0;
        for (std::size_t k = 0; k < o; ++k) z += std::exp(ri[k] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t k = 0; k < o; ++k)
          if (ti[k] != 0.0) total -= ti[k] * (ri[k] - lse);
      }
      break;
  }
  return total / static_cast<double>(n);
}

double loss(const Mlp& m, const Batch& batch, const OutputModel& om) {
  if (!batch.has_targets()) throw DimensionError("loss: batch has no targets");
  require_matching_output(m, om);
  return loss(forward(m, batch.inputs), *batch.targets, om);
}

DenseMatrix output_residual(const ForwardTrace& t, const DenseMatrix& targets, const OutputModel& om) {
  check_targets(t, targets, om);
  const DenseMatrix& y = t.output();
  DenseMatrix d(y.rows(), y.cols());
  switch (om.kind) {
    case OutputKind::LinearGaussian: {
      const double inv = 1.0 / (om.noise_std * om.noise_std);
      for (std::size_t i = 0; i < y.size(); ++i) d.data()[i] = (y.data()[i] - targets.data()[i]) * inv;
      break;
    }
    case OutputKind::SigmoidBernoulli:
      for (std::size_t i = 0; i < y.size(); ++i) d.data()[i] = y.data()[i] - targets.data()[i];
      break;
    case OutputKind::SoftmaxMultinomial:
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double s = 0.0;
        for (double v : targets.row(i)) s += v;
        for (std::size_t k = 0; k < y.cols(); ++k) d(i, k) = y(i, k) * s - targets(i, k);
      }
      break;
  }
  return d;
}

LossAndGradient loss_and_gradient(const Mlp& m, const Batch& batch, const OutputModel& om) {
  if (!batch.has_targets()) throw DimensionError("gradient: batch has no targets");
  require_matching_output(m, om);
  ForwardTrace t = forward(m, batch.inputs);
  LossAndGradient out;
  out.loss = loss(t, *batch.targets, om);
  DenseMatrix delta = output_residual(t, *batch.targets, om);
  kernels::active().scale(delta.size(), 1.0 / static_cast<double>(batch.size()), delta.data());
  out.gradient = backprop(m, t, std::move(delta));
  return out;
}

ParamVector gradient(const Mlp& m, const Batch& batch, const OutputModel& om) {
  return loss_and_gradient(m, batch, om).gradient;
}

DenseMatrix rop_output(const Mlp& m, const ForwardTrace& t, const ParamVector& v) {
  return rop_impl(m, t, v, true);
}
DenseMatrix rop_output(const Mlp& m, const DenseMatrix& inputs, const ParamVector& v) {
  return rop_impl(m, forward(m, inputs), v, true);
}
DenseMatrix rop_preactivation(const Mlp& m, const ForwardTrace& t, const ParamVector& v) {
  return rop_impl(m, t, v, false);
}
DenseMatrix rop_preactivation(const Mlp& m, const DenseMatrix& inputs, const ParamVector& v) {
  return rop_impl(m, forward(m, inputs), v, false);
}

ParamVector lop_output(const Mlp& m, const ForwardTrace& t, const DenseMatrix& adjoint) {
  check_adjoint(m, t, adjoint);
  DenseMatrix delta = adjoint;
  apply_activation_jacobian(m.activation(m.layer_count() - 1), t.output(), delta);
  return backprop(m, t, std::move(delta));
}
ParamVector lop_output(const Mlp& m, const DenseMatrix& inputs, const DenseMatrix& adjoint) {
  return lop_output(m, forward(m, inputs), adjoint);
}
ParamVector lop_preactivation(const Mlp& m, const ForwardTrace& t, const DenseMatrix& adjoint) {
  check_adjoint(m, t, adjoint);
  return backprop(m, t, adjoint);
}
ParamVector lop_preactivation(const Mlp& m, const DenseMatrix& inputs, const DenseMatrix& adjoint) {
  return lop_preactivation(m, forward(m, inputs), adjoint);
}

}  // namespace natgrad
