#pragma once

// Randomized property suites behind `natgrad check <suite>`.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "natgrad/model.hpp"
#include "natgrad/rng.hpp"

namespace natgrad {

struct CheckCase {
  std::string label;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return error <= tolerance; }
};

struct CheckReport {
  std::string suite;
  std::vector<CheckCase> cases;
  bool passed() const;
  void print(std::ostream& os) const;
};

/// grad, rop, fisher, gn-equiv, cg, score-mean.
std::vector<std::string> check_suites();
/// Throws ConfigError for an unknown suite.
CheckReport run_check(const std::string& suite, std::uint64_t seed = 1);

/// Random small network (at most `max_params` parameters) whose output
/// layer matches `kind`, with N(0, 0.5^2) parameters.
Mlp random_net(Rng& rng, OutputKind kind, std::size_t max_params = 60);
DenseMatrix random_inputs(Rng& rng, std::size_t n, std::size_t d);
/// |a - b| / max(|b|, 1e-300) in the Euclidean norm.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace natgrad
