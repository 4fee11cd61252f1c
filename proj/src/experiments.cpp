#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "natgrad/error.hpp"
#include "natgrad/experiments.hpp"
#include "natgrad/optim.hpp"
#include "natgrad/rng.hpp"

namespace natgrad {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<std::size_t> slice(const std::vector<std::size_t>& v, std::size_t b, std::size_t e) {
  return {v.begin() + static_cast<std::ptrdiff_t>(b), v.begin() + static_cast<std::ptrdiff_t>(e)};
}

std::ofstream open_csv(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  return f;
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

// Per-step draws of gradient batch and metric inputs.
struct BatchPlan {
  Batch grad;
  DenseMatrix metric;
};

BatchPlan draw_batches(const RunConfig& cfg, const DatasetBundle& data, Rng& rng) {
  const std::size_t n = data.train.size();
  const std::size_t b = cfg.optimizer.batch_size;
  const std::size_t m = cfg.metric.batch_size;
  const bool needs_metric = cfg.optimizer.kind != OptimizerKind::Sgd;
  const bool disjoint = needs_metric && cfg.metric.source == MetricSource::Disjoint;
  std::vector<std::size_t> idx;
  if (disjoint) {
    idx = rng.sample_without_replacement(n, b + m);
  } else {
    idx = b == n ? iota(n) : rng.sample_without_replacement(n, b);
  }
  BatchPlan plan;
  plan.grad = data.train.select(slice(idx, 0, b));
  if (!needs_metric) return plan;
  switch (cfg.metric.source) {
    case MetricSource::Same:
      plan.metric = m == b ? plan.grad.inputs
                           : plan.grad.inputs.select_rows(rng.sample_without_replacement(b, m));
      break;
    case MetricSource::Disjoint:
      plan.metric = data.train.inputs.select_rows(slice(idx, b, b + m));
      break;
    case MetricSource::Unlabeled:
      plan.metric = data.unlabeled.select_rows(rng.sample_without_replacement(data.unlabeled.rows(), m));
      break;
  }
  return plan;
}

void check_dataset(const RunConfig& cfg, const DatasetBundle& data) {
  const auto& arch = cfg.model.arch;
  if (data.train.inputs.cols() != arch.input_dim() || !data.train.has_targets() ||
      data.train.targets->cols() != arch.output_dim())
    throw ConfigError("config key 'model.dims': architecture does not match the dataset");
  if (data.train.size() < cfg.optimizer.batch_size)
    throw ConfigError("config key 'optimizer.batch_size': exceeds the train split");
  if (cfg.optimizer.kind != OptimizerKind::Sgd && cfg.metric.source == MetricSource::Unlabeled &&
      data.unlabeled.rows() < cfg.metric.batch_size)
    throw ConfigError("config key 'metric.batch_size': exceeds the unlabeled pool");
}

RunConfig with_seed_offset(RunConfig cfg, std::uint64_t k) {
  cfg.dataset.seed += k;
  cfg.model.init_seed += k;
  cfg.run.run_seed += k;
  return cfg;
}

}  // namespace

// -- CSV -----------------------------------------------------------------------

std::string format_record(const TrainRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%" PRId64 ",%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g", r.step,
                r.wall_ms, r.train_loss, r.valid_loss, r.cg_iters, r.cg_residual, r.rho, r.lambda,
                r.grad_norm);
  return buf;
}

TrainRecord parse_record(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) f.push_back(item);
  if (f.size() != 9) throw ConfigError("log row has " + std::to_string(f.size()) + " fields, expected 9");
  auto num = [&](std::size_t k) {
    char* end = nullptr;
    const double v = std::strtod(f[k].c_str(), &end);
    if (f[k].empty() || *end != '\0') throw ConfigError("log row: bad number '" + f[k] + "'");
    return v;
  };
  auto integer = [&](std::size_t k) {
    char* end = nullptr;
    const long long v = std::strtoll(f[k].c_str(), &end, 10);
    if (f[k].empty() || *end != '\0') throw ConfigError("log row: bad integer '" + f[k] + "'");
    return v;
  };
  TrainRecord r;
  r.step = static_cast<int>(integer(0));
  r.wall_ms = integer(1);
  r.train_loss = num(2);
  r.valid_loss = num(3);
  r.cg_iters = static_cast<int>(integer(4));
  r.cg_residual = num(5);
  r.rho = num(6);
  r.lambda = num(7);
  r.grad_norm = num(8);
  return r;
}

std::vector<TrainRecord> read_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line != kLogHeader) throw ConfigError("'" + path + "': bad header");
  std::vector<TrainRecord> out;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(parse_record(line));
  return out;
}

// -- training loop -------------------------------------------------------------

TrainResult run_training(const RunConfig& cfg, const DatasetBundle& data, std::ostream* csv) {
  cfg.validate();
  check_dataset(cfg, data);
  const OutputModel om = cfg.output_model();
  const Architecture& arch = cfg.model.arch;
  const MlpObjective train_obj(arch, data.train, om);
  Rng rng = Rng::derive(cfg.run.run_seed, 1);

  TrainResult res;
  ParamVector theta = Mlp::init(arch, cfg.model.init_seed).params();
  NgdState ngd;
  NcgState ncg;
  if (cfg.optimizer.kind == OptimizerKind::Ngd) {
    ngd = NgdState::start(theta, cfg.optimizer.lambda0, cfg.optimizer.lr);
    ngd.line_search = cfg.optimizer.line_search;
    ngd.line_search_step0 = cfg.optimizer.line_search_step0;
    ngd.adapt_damping = cfg.optimizer.adapt_damping;
  } else if (cfg.optimizer.kind == OptimizerKind::Ncg) {
    ncg = NcgState::start(theta, cfg.optimizer.lambda0);
    ncg.reset_period = cfg.optimizer.reset_period;
    ncg.adapt_damping = cfg.optimizer.adapt_damping;
    ncg.line_search_step0 = cfg.optimizer.line_search_step0;
    ncg.search = cfg.optimizer.search;
    ncg.max_search_evals = cfg.optimizer.max_search_evals;
  }

  if (csv) *csv << kLogHeader << '\n';
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  double valid_loss = loss(Mlp(arch, theta), data.valid, om);

  for (int step = 1; step <= cfg.run.steps; ++step) {
    TrainRecord rec;
    rec.step = step;
    try {
      BatchPlan plan = draw_batches(cfg, data, rng);
      switch (cfg.optimizer.kind) {
        case OptimizerKind::Sgd: {
          const LossAndGradient lg = loss_and_gradient(Mlp(arch, theta), plan.grad, om);
          if (!lg.gradient.all_finite()) throw NumericError("sgd: gradient is not finite");
          rec.grad_norm = norm2(lg.gradient);
          axpy_inplace(-cfg.optimizer.lr, lg.gradient, theta);
          break;
        }
        case OptimizerKind::Ngd: {
          StepReport rep;
          std::tie(ngd, rep) = ngd_step(arch, std::move(ngd), plan.grad, plan.metric, om, cfg.solver);
          theta = ngd.theta;
          rec.cg_iters = rep.cg.iterations;
          rec.cg_residual = rep.cg.residual_norm;
          rec.rho = rep.rho_defined ? rep.rho : 0.0;
          rec.lambda = ngd.damping;
          rec.grad_norm = rep.grad_norm;
          break;
        }
        case OptimizerKind::Ncg: {
          StepReport rep;
          std::tie(ncg, rep) = ncg_step(arch, std::move(ncg), plan.grad, plan.metric, om, cfg.solver);
          theta = ncg.theta;
          rec.cg_iters = rep.cg.iterations;
          rec.cg_residual = rep.cg.residual_norm;
          rec.rho = rep.rho_defined ? rep.rho : 0.0;
          rec.lambda = ncg.damping;
          rec.grad_norm = rep.grad_norm;
          break;
        }
      }
      const Mlp model(arch, theta);
      rec.train_loss = train_obj.value(theta);
      if (!std::isfinite(rec.train_loss)) throw NumericError("training loss is not finite");
      if (step % cfg.run.eval_every == 0 || step == cfg.run.steps) {
        valid_loss = loss(model, data.valid, om);
        if (!std::isfinite(valid_loss)) throw NumericError("validation loss is not finite");
      }
      rec.valid_loss = valid_loss;
      rec.wall_ms = elapsed_ms();
    } catch (const NumericError& e) {
      rec.train_loss = rec.valid_loss = rec.grad_norm = kNaN;
      rec.wall_ms = elapsed_ms();
      res.failed = true;
      res.failure = "step " + std::to_string(step) + ": " + e.what();
    }
    res.records.push_back(rec);
    if (csv) *csv << format_record(rec) << '\n' << std::flush;
    if (res.failed) break;
  }
  res.theta = std::move(theta);
  return res;
}

TrainResult run_training(const RunConfig& cfg, const std::string& csv_path) {
  cfg.validate();
  const DatasetBundle data = make_dataset(cfg);
  if (csv_path.empty()) return run_training(cfg, data, nullptr);
  std::ofstream f = open_csv(csv_path);
  return run_training(cfg, data, &f);
}

// -- workers -------------------------------------------------------------------

std::size_t worker_threads() {
  const char* env = std::getenv("NATGRAD_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("NATGRAD_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& task) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// -- benchmark -----------------------------------------------------------------

RunConfig bench_defaults() {
  RunConfig c;
  c.dataset.kind = DatasetKind::Autoencoder;
  c.dataset.n = 1000;
  c.dataset.n_valid = 200;
  c.dataset.n_test = 200;
  c.dataset.n_unlabeled = 0;
  c.optimizer.kind = OptimizerKind::Ngd;
  c.optimizer.lr = 0.3;
  c.optimizer.batch_size = 1000;
  c.optimizer.lambda0 = 1.0;
  c.metric.source = MetricSource::Same;
  c.metric.batch_size = 500;
  c.run.steps = 200;
  c.run.eval_every = 10;
  c.experiment.seeds = 5;
  c.experiment.sgd_lr = 0.1;
  c.experiment.sgd_batch = 100;
  return c;
}

BenchResult benchmark(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const auto seeds = static_cast<std::size_t>(cfg.experiment.seeds);
  BenchResult res;
  res.seeds.resize(seeds);
  std::vector<DatasetBundle> data(seeds);
  for (std::size_t s = 0; s < seeds; ++s) {
    data[s] = make_dataset(with_seed_offset(cfg, s));
    res.seeds[s].seed = cfg.run.run_seed + s;
  }
  const OptimizerKind kinds[3] = {OptimizerKind::Sgd, OptimizerKind::Ngd, OptimizerKind::Ncg};
  parallel_for(3 * seeds, worker_threads(), [&](std::size_t task) {
    const std::size_t s = task / 3;
    RunConfig c = with_seed_offset(cfg, s);
    c.optimizer.kind = kinds[task % 3];
    if (c.optimizer.kind == OptimizerKind::Sgd) {
      c.optimizer.lr = cfg.experiment.sgd_lr;
      c.optimizer.batch_size = cfg.experiment.sgd_batch;
    }
    std::optional<std::ofstream> f;
    if (!out_dir.empty())
      f = open_csv(join(out_dir, "bench_seed" + std::to_string(s) + "_" + to_string(c.optimizer.kind) + ".csv"));
    TrainResult r = run_training(c, data[s], f ? &*f : nullptr);
    auto& slot = res.seeds[s];
    (c.optimizer.kind == OptimizerKind::Sgd ? slot.sgd : c.optimizer.kind == OptimizerKind::Ngd ? slot.ngd : slot.ncg) =
        std::move(r);
  });
  std::vector<double> sgd_final, ngd_final, ncg_steps;
  for (auto& s : res.seeds) {
    const double target = s.ngd.records.empty() ? kNaN : s.ngd.records.back().train_loss;
    for (const auto& rec : s.ncg.records) {
      if (rec.train_loss <= target) {
        s.ncg_steps_to_ngd = rec.step;
        break;
      }
    }
    sgd_final.push_back(s.sgd.records.empty() ? kNaN : s.sgd.records.back().train_loss);
    ngd_final.push_back(target);
    ncg_steps.push_back(s.ncg_steps_to_ngd < 0 ? kInf : s.ncg_steps_to_ngd);
  }
  res.median_sgd_final = median(sgd_final);
  res.median_ngd_final = median(ngd_final);
  res.median_ncg_steps = median(ncg_steps);
  return res;
}

// -- metric source ---------------------------------------------------------------

RunConfig metric_source_defaults() {
  RunConfig c;
  c.dataset.kind = DatasetKind::Classification;
  c.dataset.n = 2000;
  c.dataset.n_valid = 1000;
  c.dataset.n_test = 1000;
  c.dataset.n_unlabeled = 5000;
  c.dataset.dim = 30;
  c.dataset.classes = 5;
  c.dataset.separation = 2.5;
  c.model.arch = {{30, 64, 5}, {Activation::Tanh, Activation::Softmax}};
  c.optimizer.kind = OptimizerKind::Ngd;
  c.optimizer.lr = 0.2;
  c.optimizer.batch_size = 256;
  c.optimizer.lambda0 = 5.0;
  c.solver.max_iters = 50;
  c.metric.source = MetricSource::Disjoint;
  c.metric.batch_size = 384;
  c.run.steps = 100;
  c.run.eval_every = 5;
  c.experiment.seeds = 5;
  return c;
}

MetricSourceResult metric_source_experiment(const RunConfig& cfg, const std::string& out_dir) {
  const auto seeds = static_cast<std::size_t>(cfg.experiment.seeds);
  MetricSourceResult res;
  res.seeds.resize(seeds);
  std::vector<DatasetBundle> data(seeds);
  for (std::size_t s = 0; s < seeds; ++s) {
    data[s] = make_dataset(with_seed_offset(cfg, s));
    res.seeds[s].seed = cfg.run.run_seed + s;
  }
  const MetricSource sources[3] = {MetricSource::Same, MetricSource::Disjoint, MetricSource::Unlabeled};
  parallel_for(3 * seeds, worker_threads(), [&](std::size_t task) {
    const std::size_t s = task / 3;
    RunConfig c = with_seed_offset(cfg, s);
    c.optimizer.kind = OptimizerKind::Ngd;
    c.metric.source = sources[task % 3];
    if (c.metric.source == MetricSource::Same) c.metric.batch_size = c.optimizer.batch_size;
    std::optional<std::ofstream> f;
    if (!out_dir.empty())
      f = open_csv(join(out_dir, "metric_seed" + std::to_string(s) + "_" + to_string(c.metric.source) + ".csv"));
    TrainResult r = run_training(c, data[s], f ? &*f : nullptr);
    auto& slot = res.seeds[s];
    (c.metric.source == MetricSource::Same       ? slot.same
     : c.metric.source == MetricSource::Disjoint ? slot.disjoint
                                                 : slot.unlabeled) = std::move(r);
  });
  std::vector<double> vs, vd, vu, ts, td, tu;
  auto last = [](const TrainResult& r, bool valid) {
    if (r.records.empty()) return kNaN;
    return valid ? r.records.back().valid_loss : r.records.back().train_loss;
  };
  for (auto& s : res.seeds) {
    s.final_valid_same = last(s.same, true);
    s.final_valid_disjoint = last(s.disjoint, true);
    s.final_valid_unlabeled = last(s.unlabeled, true);
    vs.push_back(s.final_valid_same);
    vd.push_back(s.final_valid_disjoint);
    vu.push_back(s.final_valid_unlabeled);
    ts.push_back(last(s.same, false));
    td.push_back(last(s.disjoint, false));
    tu.push_back(last(s.unlabeled, false));
  }
  res.median_valid_same = median(vs);
  res.median_valid_disjoint = median(vd);
  res.median_valid_unlabeled = median(vu);
  res.median_train_same = median(ts);
  res.median_train_disjoint = median(td);
  res.median_train_unlabeled = median(tu);
  return res;
}

// -- robustness ------------------------------------------------------------------

double prediction_variance(const std::vector<Mlp>& models, const DenseMatrix& heldout) {
  if (models.empty()) throw DimensionError("prediction_variance: no models");
  for (const auto& m : models)
    if (!(m.architecture() == models.front().architecture()))
      throw DimensionError("prediction_variance: models differ in architecture");
  std::vector<DenseMatrix> outs;
  outs.reserve(models.size());
  for (const auto& m : models) outs.push_back(forward(m, heldout).output());
  const std::size_t cells = outs.front().size();
  if (cells == 0) return 0.0;
  const double k = static_cast<double>(models.size());
  double total = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    // Shifted by the first model's output, so identical outputs give exactly 0.
    const double ref = outs.front().data()[c];
    double mean = 0.0;
    for (const auto& o : outs) mean += o.data()[c] - ref;
    mean /= k;
    double var = 0.0;
    for (const auto& o : outs) {
      const double d = o.data()[c] - ref - mean;
      var += d * d;
    }
    total += var / k;
  }
  return total / static_cast<double>(cells);
}

RunConfig robustness_defaults() {
  RunConfig c;
  c.dataset.kind = DatasetKind::Classification;
  c.dataset.n = 20000;
  c.dataset.n_valid = 1000;
  c.dataset.n_test = 1000;
  c.dataset.n_unlabeled = 0;
  c.dataset.dim = 20;
  c.dataset.classes = 10;
  c.dataset.separation = 3.0;
  c.model.arch = {{20, 50, 10}, {Activation::Tanh, Activation::Softmax}};
  c.optimizer.kind = OptimizerKind::Ngd;
  c.optimizer.lr = 0.2;
  c.optimizer.batch_size = 512;
  c.optimizer.lambda0 = 3.0;
  c.optimizer.adapt_damping = false;
  c.metric.source = MetricSource::Same;
  c.metric.batch_size = 512;
  c.experiment.seeds = 3;
  c.experiment.sgd_lr = 0.1;
  c.experiment.sgd_batch = 512;
  return c;
}

namespace {

struct OnlineRun {
  Mlp model;
  std::size_t consumed = 0;
};

OnlineRun train_online(const RunConfig& cfg, OptimizerKind kind, double lr, const Batch& stream) {
  const Architecture& arch = cfg.model.arch;
  const OutputModel om = cfg.output_model();
  const std::size_t b = cfg.optimizer.batch_size;
  ParamVector theta = Mlp::init(arch, cfg.model.init_seed).params();
  NgdState st = NgdState::start(theta, cfg.optimizer.lambda0, lr);
  st.adapt_damping = false;
  std::size_t consumed = 0;
  for (std::size_t lo = 0; lo < stream.size(); lo += b) {
    const std::size_t hi = std::min(stream.size(), lo + b);
    std::vector<std::size_t> rows(hi - lo);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = lo + i;
    const Batch batch = stream.select(rows);
    consumed += batch.size();
    if (kind == OptimizerKind::Sgd) {
      theta = sgd_step(arch, theta, batch, om, lr);
    } else {
      st = ngd_step(arch, std::move(st), batch, batch.inputs, om, cfg.solver).first;
    }
  }
  if (kind != OptimizerKind::Sgd) theta = st.theta;
  return {Mlp(arch, std::move(theta)), consumed};
}

Batch resample_segment(const Batch& base, const RunConfig& cfg, std::size_t segment, std::uint64_t draw_seed) {
  const auto& d = cfg.dataset;
  const std::size_t len = cfg.robustness.segment_size;
  const Batch fresh = sample_classification(d.seed, draw_seed, len, d.dim, d.classes, d.separation);
  Batch out = base;
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t row = segment * len + i;
    std::copy(fresh.inputs.row(i).begin(), fresh.inputs.row(i).end(), out.inputs.row(row).begin());
    std::copy(fresh.targets->row(i).begin(), fresh.targets->row(i).end(), out.targets->row(row).begin());
  }
  return out;
}

}  // namespace

RobustnessResult robustness_protocol(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (cfg.dataset.kind != DatasetKind::Classification)
    throw ConfigError("config key 'dataset.kind': robustness protocol needs the classification task");
  const auto& d = cfg.dataset;
  const auto& rb = cfg.robustness;
  const std::size_t stream_len = rb.segments * rb.segment_size + rb.chunk2;
  const std::uint64_t seed = cfg.run.run_seed;
  const Batch base = sample_classification(d.seed, Rng::derive(seed, 100).next_u64(), stream_len, d.dim,
                                           d.classes, d.separation);
  const Batch heldout = sample_classification(d.seed, Rng::derive(seed, 200).next_u64(), rb.heldout,
                                              d.dim, d.classes, d.separation);
  const Batch valid = sample_classification(d.seed, Rng::derive(seed, 300).next_u64(), d.n_valid, d.dim,
                                            d.classes, d.separation);

  RobustnessResult res;
  auto valid_error = [&](OptimizerKind kind, double lr) {
    return 1.0 - accuracy(train_online(cfg, kind, lr, base).model, valid);
  };
  res.valid_error_ngd = valid_error(OptimizerKind::Ngd, cfg.optimizer.lr);
  res.sgd_lr = cfg.experiment.sgd_lr;
  res.valid_error_sgd = valid_error(OptimizerKind::Sgd, res.sgd_lr);
  if (rb.match && std::abs(res.valid_error_sgd - res.valid_error_ngd) > rb.match_tol) {
    // Log-spaced scan of the SGD rate, then bisection on a bracketing pair.
    std::vector<double> lrs(13);
    for (std::size_t k = 0; k < lrs.size(); ++k)
      lrs[k] = cfg.experiment.sgd_lr * std::pow(2.0, (static_cast<double>(k) - 6.0) / 2.0);
    std::vector<double> errs(lrs.size());
    parallel_for(lrs.size(), worker_threads(),
                 [&](std::size_t k) { errs[k] = valid_error(OptimizerKind::Sgd, lrs[k]) - res.valid_error_ngd; });
    std::size_t best = 0;
    for (std::size_t k = 1; k < lrs.size(); ++k)
      if (std::abs(errs[k]) < std::abs(errs[best])) best = k;
    res.sgd_lr = lrs[best];
    res.valid_error_sgd = errs[best] + res.valid_error_ngd;
    for (std::size_t k = 0; k + 1 < lrs.size() && std::abs(errs[best]) > rb.match_tol; ++k) {
      if ((errs[k] > 0) == (errs[k + 1] > 0)) continue;
      double lo = lrs[k], hi = lrs[k + 1], elo = errs[k];
      for (int it = 0; it < 8; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double e = valid_error(OptimizerKind::Sgd, mid) - res.valid_error_ngd;
        if (std::abs(e) < std::abs(res.valid_error_sgd - res.valid_error_ngd)) {
          res.sgd_lr = mid;
          res.valid_error_sgd = e + res.valid_error_ngd;
        }
        if (std::abs(e) <= rb.match_tol) break;
        if ((e > 0) == (elo > 0)) {
          lo = mid;
          elo = e;
        } else {
          hi = mid;
        }
      }
      break;
    }
  }
  res.matched = std::abs(res.valid_error_sgd - res.valid_error_ngd) <= rb.match_tol;

  const auto runs = static_cast<std::size_t>(rb.runs_per_segment);
  const std::size_t per_opt = rb.segments * runs;
  std::vector<Mlp> models;
  models.reserve(2 * per_opt);
  const Mlp placeholder = Mlp::init(cfg.model.arch, cfg.model.init_seed);
  models.assign(2 * per_opt, placeholder);
  res.examples_consumed.assign(2 * per_opt, 0);
  parallel_for(2 * per_opt, worker_threads(), [&](std::size_t task) {
    const bool is_ngd = task >= per_opt;
    const std::size_t k = task % per_opt;
    const std::size_t segment = k / runs, r = k % runs;
    const std::uint64_t draw = Rng::derive(seed, 1000 + segment * runs + r).next_u64();
    const Batch stream = resample_segment(base, cfg, segment, draw);
    OnlineRun run = is_ngd ? train_online(cfg, OptimizerKind::Ngd, cfg.optimizer.lr, stream)
                           : train_online(cfg, OptimizerKind::Sgd, res.sgd_lr, stream);
    models[task] = std::move(run.model);
    res.examples_consumed[task] = run.consumed;
  });
  for (VarianceCurve* c : {&res.sgd, &res.ngd}) {
    c->segment_size = rb.segment_size;
    c->runs_per_segment = rb.runs_per_segment;
  }
  for (std::size_t s = 0; s < rb.segments; ++s) {
    auto group = [&](std::size_t first) {
      return std::vector<Mlp>(models.begin() + static_cast<std::ptrdiff_t>(first + s * runs),
                              models.begin() + static_cast<std::ptrdiff_t>(first + (s + 1) * runs));
    };
    res.sgd.variance.push_back(prediction_variance(group(0), heldout.inputs));
    res.ngd.variance.push_back(prediction_variance(group(per_opt), heldout.inputs));
    res.segments_ngd_below += res.ngd.variance.back() < res.sgd.variance.back();
  }
  if (!out_dir.empty()) {
    write_variance_csv(join(out_dir, "variance_sgd.csv"), "sgd", res.sgd);
    write_variance_csv(join(out_dir, "variance_ngd.csv"), "ngd", res.ngd);
  }
  return res;
}

void write_variance_csv(const std::string& path, const std::string& optimizer, const VarianceCurve& c) {
  std::ofstream f = open_csv(path);
  f << "segment,optimizer,mean_variance\n";
  char buf[64];
  for (std::size_t s = 0; s < c.variance.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.17g", c.variance[s]);
    f << s + 1 << ',' << optimizer << ',' << buf << '\n';
  }
}

}  // namespace natgrad
