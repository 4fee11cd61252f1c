#pragma once

// Feed-forward multilayer perceptron: forward pass, loss, reverse-mode
// gradient, and the two Jacobian products used to build metric-vector
// products without forming the Jacobian:
//
//   R-op: v  -> J v      (forward mode, tangents carried through a trace)
//   L-op: U  -> J^T U    (reverse mode, U seeded as the output adjoint)
//
// J is taken either w.r.t. the network output y ("output") or the final
// pre-activation r ("preactivation").

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "natgrad/core.hpp"
#include "natgrad/output_model.hpp"

namespace natgrad {

enum class Activation { Sigmoid, Tanh, Linear, Softmax };

std::string to_string(Activation act);
Activation parse_activation(std::string_view name);

/// Layer widths and activations; `dims` has one more entry than `acts`.
struct Architecture {
  std::vector<std::size_t> dims;
  std::vector<Activation> acts;

  std::size_t layer_count() const { return acts.size(); }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
  std::size_t param_count() const;
  /// Throws DimensionError on a broken chain or a non-final softmax.
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

/// Parameters are stored flat: for each layer the weight matrix W
/// (n_out x n_in, row-major) followed by the bias b (n_out).
class Mlp {
 public:
  Mlp(Architecture arch, ParamVector params);

  /// Glorot-uniform weights, zero biases; deterministic in `seed`.
  static Mlp init(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::size_t layer_count() const { return arch_.layer_count(); }
  std::size_t param_count() const { return params_.size(); }
  std::size_t input_dim() const { return arch_.input_dim(); }
  std::size_t output_dim() const { return arch_.output_dim(); }
  Activation activation(std::size_t layer) const { return arch_.acts[layer]; }

  const ParamVector& params() const { return params_; }
  /// Same architecture, new parameters.
  Mlp with_params(ParamVector params) const;

  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + arch_.dims[layer] * arch_.dims[layer + 1];
  }

  bool operator==(const Mlp& other) const {
    return arch_ == other.arch_ && params_ == other.params_;
  }

 private:
  Architecture arch_;
  ParamVector params_;
  std::vector<std::size_t> offsets_;
};

/// Segment map for an architecture: W then b per layer.
std::vector<Segment> parameter_segments(const Architecture& arch);

ParamVector flatten(const Mlp& m);
Mlp unflatten(const Architecture& arch, const ParamVector& params);

/// Inputs with optional targets (a metric batch has none).
struct Batch {
  DenseMatrix inputs;
  std::optional<DenseMatrix> targets;

  std::size_t size() const { return inputs.rows(); }
  bool has_targets() const { return targets.has_value(); }
  /// Subset in the given order.
  Batch select(std::span<const std::size_t> indices) const;
};

/// Cached per-layer pre-activations r_k and activations a_k.
struct ForwardTrace {
  DenseMatrix input;
  std::vector<DenseMatrix> pre;
  std::vector<DenseMatrix> post;

  const DenseMatrix& output() const { return post.back(); }
  const DenseMatrix& output_preactivation() const { return pre.back(); }
  std::size_t batch_size() const { return input.rows(); }
};

ForwardTrace forward(const Mlp& m, const DenseMatrix& inputs);

/// Throws when the final activation does not match the density family.
void require_matching_output(const Mlp& m, const OutputModel& om);

/// Mean negative log-likelihood, constants dropped.
double loss(const Mlp& m, const Batch& batch, const OutputModel& om);
double loss(const ForwardTrace& trace, const DenseMatrix& targets, const OutputModel& om);

struct LossAndGradient {
  double loss = 0.0;
  ParamVector gradient;
};

ParamVector gradient(const Mlp& m, const Batch& batch, const OutputModel& om);
LossAndGradient loss_and_gradient(const Mlp& m, const Batch& batch, const OutputModel& om);

/// d(loss)/d(r) per example for the matching density, without the 1/n.
DenseMatrix output_residual(const ForwardTrace& trace, const DenseMatrix& targets,
                            const OutputModel& om);

// n x o directional derivatives along v.
DenseMatrix rop_output(const Mlp& m, const ForwardTrace& trace, const ParamVector& v);
DenseMatrix rop_output(const Mlp& m, const DenseMatrix& inputs, const ParamVector& v);
DenseMatrix rop_preactivation(const Mlp& m, const ForwardTrace& trace, const ParamVector& v);
DenseMatrix rop_preactivation(const Mlp& m, const DenseMatrix& inputs, const ParamVector& v);

// Sum over examples of J^T u_i.
ParamVector lop_output(const Mlp& m, const ForwardTrace& trace, const DenseMatrix& adjoint);
ParamVector lop_output(const Mlp& m, const DenseMatrix& inputs, const DenseMatrix& adjoint);
ParamVector lop_preactivation(const Mlp& m, const ForwardTrace& trace, const DenseMatrix& adjoint);
ParamVector lop_preactivation(const Mlp& m, const DenseMatrix& inputs, const DenseMatrix& adjoint);

// Checkpoint text format:
//   NGMLP 1
//   <dims separated by spaces>
//   <activation names>
//   <P parameters, %.17g, whitespace separated>
void save_checkpoint(const Mlp& m, const std::string& path);
Mlp load_checkpoint(const std::string& path);
std::string checkpoint_to_string(const Mlp& m);
Mlp checkpoint_from_string(const std::string& text);

}  // namespace natgrad
