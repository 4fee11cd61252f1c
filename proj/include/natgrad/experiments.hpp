#pragma once

// Synthetic datasets, the training loop with CSV logging, and the three
// desk-scale protocols (optimizer benchmark, metric-batch source,
// robustness to early examples).

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "natgrad/config.hpp"
#include "natgrad/model.hpp"

namespace natgrad {

struct DatasetBundle {
  Batch train;
  Batch valid;
  Batch test;
  DenseMatrix unlabeled;  // inputs only
  std::uint64_t seed = 0;
};

/// n 8x8 images (64 values in [0,1]) of random sinusoid strokes; targets
/// equal inputs. Requires n >= 200.
DatasetBundle gen_autoencoder_task(std::uint64_t seed, std::size_t n, std::size_t n_valid = 200,
                                   std::size_t n_test = 200, std::size_t n_unlabeled = 0);

struct ClassificationSpec {
  std::size_t n = 1000;
  std::size_t n_valid = 200;
  std::size_t n_test = 200;
  std::size_t n_unlabeled = 1000;
  std::size_t dim = 20;
  std::size_t classes = 4;
  /// Cluster means lie at distance `separation` from the origin; inputs
  /// add unit-variance isotropic noise. 0 makes the classes indistinguishable.
  double separation = 2.0;
};

/// Gaussian mixture with one-hot targets and an unlabeled pool.
DatasetBundle gen_classification_task(std::uint64_t seed, const ClassificationSpec& spec);
DatasetBundle gen_classification_task(std::uint64_t seed, std::size_t n, std::size_t d,
                                      std::size_t k);

/// Fresh examples from the mixture defined by `mixture_seed`, drawn with `draw_seed`.
Batch sample_classification(std::uint64_t mixture_seed, std::uint64_t draw_seed, std::size_t n,
                            std::size_t d, std::size_t k, double separation);

DatasetBundle make_dataset(const RunConfig& cfg);

/// Fraction of rows whose argmax output matches the argmax target.
double accuracy(const Mlp& m, const Batch& batch);

struct TrainRecord {
  int step = 0;
  std::int64_t wall_ms = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  int cg_iters = 0;
  double cg_residual = 0.0;
  double rho = 0.0;
  double lambda = 0.0;
  double grad_norm = 0.0;

  bool operator==(const TrainRecord&) const = default;
};

inline constexpr const char* kLogHeader =
    "step,wall_ms,train_loss,valid_loss,cg_iters,cg_residual,rho,lambda,grad_norm";

std::string format_record(const TrainRecord& r);
/// Throws ConfigError on a malformed row.
TrainRecord parse_record(const std::string& line);
std::vector<TrainRecord> read_log(const std::string& path);

struct TrainResult {
  std::vector<TrainRecord> records;
  ParamVector theta;
  bool failed = false;
  std::string failure;
};

/// Runs cfg.run.steps optimizer steps. The training loss is measured on the
/// whole train split after every step; the validation loss every
/// cfg.run.eval_every steps (carried forward in between). A numeric failure
/// writes a final row with NaN losses and stops the run. When `csv` is given
/// the log is streamed to it.
TrainResult run_training(const RunConfig& cfg, const DatasetBundle& data, std::ostream* csv = nullptr);
TrainResult run_training(const RunConfig& cfg, const std::string& csv_path);

/// Runs task(0..n-1) on up to `threads` workers. Exceptions are rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& task);
/// NATGRAD_THREADS, default 1.
std::size_t worker_threads();

// -- benchmark ----------------------------------------------------------------

struct BenchSeedResult {
  std::uint64_t seed = 0;
  TrainResult sgd, ngd, ncg;
  /// First step where NCG's train loss is at or below NGD's final loss; -1 if never.
  int ncg_steps_to_ngd = -1;
};

struct BenchResult {
  std::vector<BenchSeedResult> seeds;
  double median_sgd_final = 0.0;
  double median_ngd_final = 0.0;
  double median_ncg_steps = 0.0;  // +inf when the median run never gets there
};

/// Defaults for the autoencoder comparison.
RunConfig bench_defaults();
/// `cfg` describes the NGD run; SGD uses experiment.sgd_lr / sgd_batch and
/// NCG the NGD batches. Seeds run_seed, run_seed+1, ... shift every seed.
BenchResult benchmark(const RunConfig& cfg, const std::string& out_dir = {});

// -- metric source ------------------------------------------------------------

struct MetricSourceSeedResult {
  std::uint64_t seed = 0;
  TrainResult same, disjoint, unlabeled;
  double final_valid_same = 0.0, final_valid_disjoint = 0.0, final_valid_unlabeled = 0.0;
};

struct MetricSourceResult {
  std::vector<MetricSourceSeedResult> seeds;
  double median_valid_same = 0.0, median_valid_disjoint = 0.0, median_valid_unlabeled = 0.0;
  double median_train_same = 0.0, median_train_disjoint = 0.0, median_train_unlabeled = 0.0;
};

RunConfig metric_source_defaults();
/// Three runs per seed: same-batch metric (metric batch = gradient batch),
/// disjoint train batch of metric.batch_size, unlabeled batch of
/// metric.batch_size. Final held-out loss is measured on the valid split.
MetricSourceResult metric_source_experiment(const RunConfig& cfg, const std::string& out_dir = {});

// -- robustness ---------------------------------------------------------------

struct VarianceCurve {
  std::vector<double> variance;  // one per segment
  std::size_t segment_size = 0;
  int runs_per_segment = 0;
};

/// Mean over held-out examples and output units of the population variance
/// across models of the post-activation outputs.
double prediction_variance(const std::vector<Mlp>& models, const DenseMatrix& heldout);

struct RobustnessResult {
  VarianceCurve sgd, ngd;
  double sgd_lr = 0.0;
  double valid_error_sgd = 0.0, valid_error_ngd = 0.0;
  bool matched = false;
  /// Training examples consumed by each run (all equal to the stream length).
  std::vector<std::size_t> examples_consumed;
  int segments_ngd_below = 0;
};

RunConfig robustness_defaults();
/// Online single pass over a stream of segments*segment_size + chunk2
/// examples in order, batches of optimizer.batch_size. For each segment,
/// runs_per_segment runs resample that segment only; all runs share the
/// initialization. NGD uses optimizer.lr with fixed damping lambda0 and the
/// gradient batch as metric batch; SGD uses experiment.sgd_lr, retuned to
/// match validation error within match_tol when robustness.match is set.
RobustnessResult robustness_protocol(const RunConfig& cfg, const std::string& out_dir = {});

/// Writes `segment,optimizer,mean_variance` rows.
void write_variance_csv(const std::string& path, const std::string& optimizer, const VarianceCurve& c);

double median(std::vector<double> v);

}  // namespace natgrad
