#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "natgrad/config.hpp"
#include "natgrad/error.hpp"

namespace natgrad {
namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': invalid value '" + value + "' (expected " + expected + ")");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d))
    bad_value(key, v, "a finite number");
  return d;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Entry {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define NG_DOUBLE(name, field)                                                          \
  Entry {                                                                               \
    name, [](const RunConfig& c) { return fmt_double(c.field); },                       \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(name, v); }     \
  }
#define NG_SIZE(name, field)                                                            \
  Entry {                                                                               \
    name, [](const RunConfig& c) { return std::to_string(c.field); },                   \
        [](RunConfig& c, const std::string& v) { c.field = parse_u64(name, v); }        \
  }
#define NG_INT(name, field)                                                             \
  Entry {                                                                               \
    name, [](const RunConfig& c) { return std::to_string(c.field); },                   \
        [](RunConfig& c, const std::string& v) { c.field = parse_int(name, v); }        \
  }
#define NG_BOOL(name, field)                                                            \
  Entry {                                                                               \
    name, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); },   \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }       \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"dataset.kind", [](const RunConfig& c) { return to_string(c.dataset.kind); },
            [](RunConfig& c, const std::string& v) {
              if (v == "autoencoder") c.dataset.kind = DatasetKind::Autoencoder;
              else if (v == "classification") c.dataset.kind = DatasetKind::Classification;
              else bad_value("dataset.kind", v, "autoencoder or classification");
            }},
      NG_SIZE("dataset.seed", dataset.seed),
      NG_SIZE("dataset.n", dataset.n),
      NG_SIZE("dataset.n_valid", dataset.n_valid),
      NG_SIZE("dataset.n_test", dataset.n_test),
      NG_SIZE("dataset.n_unlabeled", dataset.n_unlabeled),
      NG_SIZE("dataset.dim", dataset.dim),
      NG_SIZE("dataset.classes", dataset.classes),
      NG_DOUBLE("dataset.separation", dataset.separation),
      Entry{"model.dims",
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.model.arch.dims.size(); ++i)
                s += (i ? "," : "") + std::to_string(c.model.arch.dims[i]);
              return s;
            },
            [](RunConfig& c, const std::string& v) {
              std::vector<std::size_t> dims;
              for (const auto& item : split_list(v)) {
                const auto d = parse_u64("model.dims", item);
                if (d == 0) bad_value("model.dims", v, "positive layer widths");
                dims.push_back(d);
              }
              if (dims.size() < 2) bad_value("model.dims", v, "at least two widths");
              c.model.arch.dims = std::move(dims);
            }},
      Entry{"model.acts",
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.model.arch.acts.size(); ++i)
                s += (i ? "," : "") + to_string(c.model.arch.acts[i]);
              return s;
            },
            [](RunConfig& c, const std::string& v) {
              std::vector<Activation> acts;
              for (const auto& item : split_list(v)) {
                try {
                  acts.push_back(parse_activation(item));
                } catch (const std::exception&) {
                  bad_value("model.acts", v, "sigmoid, tanh, linear or softmax");
                }
              }
              c.model.arch.acts = std::move(acts);
            }},
      NG_SIZE("model.init_seed", model.init_seed),
      Entry{"optimizer.kind", [](const RunConfig& c) { return to_string(c.optimizer.kind); },
            [](RunConfig& c, const std::string& v) {
              if (v == "sgd") c.optimizer.kind = OptimizerKind::Sgd;
              else if (v == "ngd") c.optimizer.kind = OptimizerKind::Ngd;
              else if (v == "ncg") c.optimizer.kind = OptimizerKind::Ncg;
              else bad_value("optimizer.kind", v, "sgd, ngd or ncg");
            }},
      NG_DOUBLE("optimizer.lr", optimizer.lr),
      NG_SIZE("optimizer.batch_size", optimizer.batch_size),
      NG_DOUBLE("optimizer.lambda0", optimizer.lambda0),
      NG_BOOL("optimizer.adapt_damping", optimizer.adapt_damping),
      NG_INT("optimizer.reset_period", optimizer.reset_period),
      NG_BOOL("optimizer.line_search", optimizer.line_search),
      NG_DOUBLE("optimizer.line_search_step0", optimizer.line_search_step0),
      Entry{"optimizer.search", [](const RunConfig& c) { return to_string(c.optimizer.search); },
            [](RunConfig& c, const std::string& v) {
              if (v == "nelder-mead") c.optimizer.search = SubspaceSearch::NelderMead;
              else if (v == "quadratic") c.optimizer.search = SubspaceSearch::QuadraticModel;
              else bad_value("optimizer.search", v, "nelder-mead or quadratic");
            }},
      NG_INT("optimizer.max_search_evals", optimizer.max_search_evals),
      NG_INT("solver.max_iters", solver.max_iters),
      NG_DOUBLE("solver.rtol", solver.rtol),
      NG_DOUBLE("solver.warm_scale", solver.warm_start_scale),
      Entry{"metric.source", [](const RunConfig& c) { return to_string(c.metric.source); },
            [](RunConfig& c, const std::string& v) {
              if (v == "same") c.metric.source = MetricSource::Same;
              else if (v == "disjoint") c.metric.source = MetricSource::Disjoint;
              else if (v == "unlabeled") c.metric.source = MetricSource::Unlabeled;
              else bad_value("metric.source", v, "same, disjoint or unlabeled");
            }},
      NG_SIZE("metric.batch_size", metric.batch_size),
      NG_DOUBLE("metric.beta", metric.beta),
      NG_INT("run.steps", run.steps),
      NG_INT("run.eval_every", run.eval_every),
      Entry{"run.out_dir", [](const RunConfig& c) { return c.run.out_dir; },
            [](RunConfig& c, const std::string& v) {
              if (v.empty()) bad_value("run.out_dir", v, "a directory path");
              c.run.out_dir = v;
            }},
      NG_SIZE("run.run_seed", run.run_seed),
      NG_INT("experiment.seeds", experiment.seeds),
      NG_DOUBLE("experiment.sgd_lr", experiment.sgd_lr),
      NG_SIZE("experiment.sgd_batch", experiment.sgd_batch),
      NG_SIZE("robustness.segment_size", robustness.segment_size),
      NG_SIZE("robustness.segments", robustness.segments),
      NG_SIZE("robustness.chunk2", robustness.chunk2),
      NG_SIZE("robustness.heldout", robustness.heldout),
      NG_INT("robustness.runs_per_segment", robustness.runs_per_segment),
      NG_BOOL("robustness.match", robustness.match),
      NG_DOUBLE("robustness.match_tol", robustness.match_tol),
  };
  return table;
}

#undef NG_DOUBLE
#undef NG_SIZE
#undef NG_INT
#undef NG_BOOL

}  // namespace

std::string to_string(DatasetKind k) {
  return k == DatasetKind::Autoencoder ? "autoencoder" : "classification";
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Ngd: return "ngd";
    case OptimizerKind::Ncg: return "ncg";
  }
  return "?";
}

std::string to_string(MetricSource s) {
  switch (s) {
    case MetricSource::Same: return "same";
    case MetricSource::Disjoint: return "disjoint";
    case MetricSource::Unlabeled: return "unlabeled";
  }
  return "?";
}

std::string to_string(SubspaceSearch s) {
  return s == SubspaceSearch::NelderMead ? "nelder-mead" : "quadratic";
}

OutputModel RunConfig::output_model() const {
  switch (model.arch.acts.back()) {
    case Activation::Sigmoid: return OutputModel::sigmoid_bernoulli();
    case Activation::Softmax: return OutputModel::softmax_multinomial();
    case Activation::Linear: return OutputModel::linear_gaussian(metric.beta);
    case Activation::Tanh: break;
  }
  throw ConfigError("config key 'model.acts': final activation must be sigmoid, softmax or linear");
}

void RunConfig::validate() const {
  auto fail = [](const char* key, const std::string& why) {
    throw ConfigError(std::string("config key '") + key + "': " + why);
  };
  if (model.arch.dims.size() != model.arch.acts.size() + 1)
    fail("model.acts", "need exactly one activation per layer");
  try {
    model.arch.validate();
  } catch (const DimensionError& e) {
    fail("model.dims", e.what());
  }
  (void)output_model();
  if (!(metric.beta > 0.0)) fail("metric.beta", "must be > 0");
  if (dataset.n == 0) fail("dataset.n", "must be > 0");
  if (dataset.n_valid == 0) fail("dataset.n_valid", "must be > 0");
  if (dataset.kind == DatasetKind::Autoencoder) {
    if (dataset.n < 200) fail("dataset.n", "autoencoder task needs n >= 200");
    if (model.arch.input_dim() != 64 || model.arch.output_dim() != 64)
      fail("model.dims", "autoencoder task needs 64 inputs and 64 outputs");
    if (model.arch.acts.back() != Activation::Sigmoid)
      fail("model.acts", "autoencoder task needs a sigmoid output");
  } else {
    if (dataset.classes < 2) fail("dataset.classes", "must be >= 2");
    if (dataset.dim == 0) fail("dataset.dim", "must be > 0");
    if (!(dataset.separation >= 0.0)) fail("dataset.separation", "must be >= 0");
    if (model.arch.input_dim() != dataset.dim) fail("model.dims", "input width must equal dataset.dim");
    if (model.arch.output_dim() != dataset.classes)
      fail("model.dims", "output width must equal dataset.classes");
    if (model.arch.acts.back() != Activation::Softmax)
      fail("model.acts", "classification task needs a softmax output");
  }
  if (!(optimizer.lr >= 0.0)) fail("optimizer.lr", "must be >= 0");
  if (optimizer.batch_size == 0) fail("optimizer.batch_size", "must be > 0");
  if (optimizer.batch_size > dataset.n) fail("optimizer.batch_size", "exceeds dataset.n");
  if (!(optimizer.lambda0 > 0.0)) fail("optimizer.lambda0", "must be > 0");
  if (optimizer.reset_period < 1) fail("optimizer.reset_period", "must be >= 1");
  if (!(optimizer.line_search_step0 > 0.0)) fail("optimizer.line_search_step0", "must be > 0");
  if (optimizer.max_search_evals < 3) fail("optimizer.max_search_evals", "must be >= 3");
  if (solver.max_iters < 1) fail("solver.max_iters", "must be >= 1");
  if (!(solver.rtol >= 0.0)) fail("solver.rtol", "must be >= 0");
  if (!(solver.warm_start_scale >= 0.0)) fail("solver.warm_scale", "must be >= 0");
  if (metric.batch_size == 0) fail("metric.batch_size", "must be > 0");
  if (optimizer.kind != OptimizerKind::Sgd) {
    switch (metric.source) {
      case MetricSource::Same:
        if (metric.batch_size > optimizer.batch_size)
          fail("metric.batch_size", "same-batch metric cannot exceed optimizer.batch_size");
        break;
      case MetricSource::Disjoint:
        if (metric.batch_size + optimizer.batch_size > dataset.n)
          fail("metric.batch_size", "disjoint metric batch plus gradient batch exceeds dataset.n");
        break;
      case MetricSource::Unlabeled:
        if (metric.batch_size > dataset.n_unlabeled)
          fail("metric.batch_size", "exceeds dataset.n_unlabeled");
        break;
    }
  }
  if (run.steps < 0) fail("run.steps", "must be >= 0");
  if (run.eval_every < 1) fail("run.eval_every", "must be >= 1");
  if (experiment.seeds < 1) fail("experiment.seeds", "must be >= 1");
  if (!(experiment.sgd_lr >= 0.0)) fail("experiment.sgd_lr", "must be >= 0");
  if (experiment.sgd_batch == 0) fail("experiment.sgd_batch", "must be > 0");
  if (robustness.segments == 0) fail("robustness.segments", "must be > 0");
  if (robustness.segment_size == 0) fail("robustness.segment_size", "must be > 0");
  if (robustness.heldout == 0) fail("robustness.heldout", "must be > 0");
  if (robustness.runs_per_segment < 2) fail("robustness.runs_per_segment", "must be >= 2");
  if (!(robustness.match_tol > 0.0)) fail("robustness.match_tol", "must be > 0");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(*this) + "\n";
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), base);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.emplace_back(e.key);
  return keys;
}

}  // namespace natgrad
