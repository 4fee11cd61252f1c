#pragma once

// Flat key=value run configuration.
//
//   # comment
//   optimizer.kind = ngd
//
// Unknown keys and malformed values throw ConfigError naming the key.
// Missing keys keep their defaults. to_text() writes every key in a fixed
// order and parse_config(to_text(c)) reproduces c exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "natgrad/model.hpp"
#include "natgrad/optim.hpp"
#include "natgrad/output_model.hpp"
#include "natgrad/solver.hpp"

namespace natgrad {

enum class DatasetKind { Autoencoder, Classification };
enum class OptimizerKind { Sgd, Ngd, Ncg };
/// Where the metric batch comes from.
enum class MetricSource { Same, Disjoint, Unlabeled };

std::string to_string(DatasetKind k);
std::string to_string(OptimizerKind k);
std::string to_string(MetricSource s);
std::string to_string(SubspaceSearch s);

struct RunConfig {
  struct Dataset {
    DatasetKind kind = DatasetKind::Autoencoder;
    std::uint64_t seed = 1;
    std::size_t n = 1000;
    std::size_t n_valid = 200;
    std::size_t n_test = 200;
    std::size_t n_unlabeled = 1000;
    std::size_t dim = 20;       // classification only
    std::size_t classes = 4;    // classification only
    double separation = 2.0;    // classification only
  } dataset;

  struct Model {
    Architecture arch{{64, 32, 16, 8, 16, 32, 64},
                      {Activation::Sigmoid, Activation::Sigmoid, Activation::Sigmoid,
                       Activation::Sigmoid, Activation::Sigmoid, Activation::Sigmoid}};
    std::uint64_t init_seed = 1;
  } model;

  struct Optimizer {
    OptimizerKind kind = OptimizerKind::Ngd;
    double lr = 0.3;
    std::size_t batch_size = 1000;
    double lambda0 = 1.0;
    bool adapt_damping = true;
    int reset_period = 30;
    bool line_search = false;
    double line_search_step0 = 1.0;
    SubspaceSearch search = SubspaceSearch::NelderMead;
    int max_search_evals = 40;
  } optimizer;

  SolverConfig solver;

  struct Metric {
    MetricSource source = MetricSource::Same;
    std::size_t batch_size = 500;
    double beta = 1.0;  // LinearGaussian noise std
  } metric;

  struct Run {
    int steps = 200;
    int eval_every = 10;
    std::string out_dir = "out";
    std::uint64_t run_seed = 1;
  } run;

  struct Experiment {
    int seeds = 5;
    double sgd_lr = 0.1;
    std::size_t sgd_batch = 100;
  } experiment;

  struct Robustness {
    std::size_t segment_size = 1000;
    std::size_t segments = 10;
    std::size_t chunk2 = 10000;
    std::size_t heldout = 1000;
    int runs_per_segment = 5;
    bool match = true;
    double match_tol = 0.01;
  } robustness;

  /// Output density implied by the final activation.
  OutputModel output_model() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  std::string to_text() const;
  bool operator==(const RunConfig& other) const { return to_text() == other.to_text(); }
};

/// Parses on top of `base` (defaults when omitted).
RunConfig parse_config(const std::string& text, const RunConfig& base = RunConfig{});
RunConfig load_config(const std::string& path, const RunConfig& base = RunConfig{});
/// Applies a single key=value override.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

}  // namespace natgrad
