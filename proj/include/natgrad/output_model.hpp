#pragma once

#include <string>
#include <string_view>

namespace natgrad {

enum class OutputKind { LinearGaussian, SigmoidBernoulli, SoftmaxMultinomial };

/// The conditional density p(t | x) attached to the network output.
struct OutputModel {
  OutputKind kind = OutputKind::SigmoidBernoulli;
  /// Standard deviation of the Gaussian noise (LinearGaussian only).
  double noise_std = 1.0;

  static OutputModel linear_gaussian(double noise_std = 1.0) {
    return {OutputKind::LinearGaussian, noise_std};
  }
  static OutputModel sigmoid_bernoulli() { return {OutputKind::SigmoidBernoulli, 1.0}; }
  static OutputModel softmax_multinomial() { return {OutputKind::SoftmaxMultinomial, 1.0}; }

  /// Throws ConfigError when noise_std <= 0 for LinearGaussian.
  void validate() const;
};

std::string to_string(OutputKind kind);
OutputKind parse_output_kind(std::string_view name);

}  // namespace natgrad
