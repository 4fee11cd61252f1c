#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "natgrad/checks.hpp"
#include "natgrad/config.hpp"
#include "natgrad/error.hpp"
#include "natgrad/experiments.hpp"

namespace natgrad::cli {
namespace {

namespace fs = std::filesystem;

RunConfig resolve(const RunConfig& base, const std::string& config_path, const std::string& out_dir,
                  const std::string& seed) {
  RunConfig cfg = config_path.empty() ? base : load_config(config_path, base);
  if (!out_dir.empty()) set_config_value(cfg, "run.out_dir", out_dir);
  if (!seed.empty()) set_config_value(cfg, "run.run_seed", seed);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

void prepare_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.run.out_dir, ec);
  if (ec) throw ConfigError("config key 'run.out_dir': cannot create '" + cfg.run.out_dir + "'");
  write_text(fs::path(cfg.run.out_dir) / "config.resolved", cfg.to_text());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  }
}

}  // namespace

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& seed,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (config_path.empty()) throw ConfigError("train needs --config");
    const RunConfig cfg = resolve(RunConfig{}, config_path, out_dir, seed);
    prepare_out_dir(cfg);
    const fs::path dir(cfg.run.out_dir);
    const TrainResult res = run_training(cfg, (dir / "log.csv").string());
    save_checkpoint(Mlp(cfg.model.arch, res.theta), (dir / "model.ngmlp").string());
    if (res.failed) {
      err << "numeric failure: " << res.failure << '\n';
      return kNumericError;
    }
    const auto& last = res.records.empty() ? TrainRecord{} : res.records.back();
    out << "trained " << res.records.size() << " steps; train_loss " << fmt(last.train_loss)
        << " valid_loss " << fmt(last.valid_loss) << "; wrote " << dir.string() << '\n';
    return kOk;
  });
}

int cmd_check(const std::string& suite, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CheckReport rep = run_check(suite, seed);
    rep.print(out);
    return rep.passed() ? kOk : kNumericError;
  });
}

int cmd_experiment(const std::string& name, const std::string& config_path, const std::string& out_dir,
                   const std::string& seed, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (name == "bench") {
      const RunConfig cfg = resolve(bench_defaults(), config_path, out_dir, seed);
      prepare_out_dir(cfg);
      const BenchResult r = benchmark(cfg, cfg.run.out_dir);
      std::string summary = "seed,sgd_final,ngd_final,ncg_final,ncg_steps_to_ngd\n";
      for (const auto& s : r.seeds)
        summary += std::to_string(s.seed) + "," + fmt(s.sgd.records.back().train_loss) + "," +
                   fmt(s.ngd.records.back().train_loss) + "," + fmt(s.ncg.records.back().train_loss) + "," +
                   std::to_string(s.ncg_steps_to_ngd) + "\n";
      write_text(fs::path(cfg.run.out_dir) / "bench_summary.csv", summary);
      out << summary << "median final train loss: sgd " << fmt(r.median_sgd_final) << ", ngd "
          << fmt(r.median_ngd_final) << "; median ncg steps to ngd's final loss "
          << fmt(r.median_ncg_steps) << '\n';
      return kOk;
    }
    if (name == "metric-source") {
      const RunConfig cfg = resolve(metric_source_defaults(), config_path, out_dir, seed);
      prepare_out_dir(cfg);
      const MetricSourceResult r = metric_source_experiment(cfg, cfg.run.out_dir);
      std::string summary = "seed,valid_same,valid_disjoint,valid_unlabeled\n";
      for (const auto& s : r.seeds)
        summary += std::to_string(s.seed) + "," + fmt(s.final_valid_same) + "," + fmt(s.final_valid_disjoint) +
                   "," + fmt(s.final_valid_unlabeled) + "\n";
      write_text(fs::path(cfg.run.out_dir) / "metric_source_summary.csv", summary);
      out << summary << "median held-out loss: same " << fmt(r.median_valid_same) << ", disjoint "
          << fmt(r.median_valid_disjoint) << ", unlabeled " << fmt(r.median_valid_unlabeled) << '\n';
      return kOk;
    }
    if (name == "robustness") {
      const RunConfig cfg = resolve(robustness_defaults(), config_path, out_dir, seed);
      prepare_out_dir(cfg);
      const RobustnessResult r = robustness_protocol(cfg, cfg.run.out_dir);
      out << "validation error: ngd " << fmt(r.valid_error_ngd) << ", sgd " << fmt(r.valid_error_sgd)
          << " (sgd lr " << fmt(r.sgd_lr) << (r.matched ? ", matched" : ", NOT matched") << ")\n";
      for (std::size_t s = 0; s < r.sgd.variance.size(); ++s)
        out << "segment " << s + 1 << ": sgd " << fmt(r.sgd.variance[s]) << "  ngd " << fmt(r.ngd.variance[s])
            << '\n';
      out << "ngd below sgd on " << r.segments_ngd_below << "/" << r.sgd.variance.size() << " segments\n";
      return kOk;
    }
    throw ConfigError("unknown experiment '" + name + "' (expected bench, metric-source or robustness)");
  });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"natgrad: matrix-free natural gradient training"};
  app.require_subcommand(1);
  std::string config, out_dir, seed, suite, name;

  auto* train = app.add_subcommand("train", "train one model from a config file");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--out", out_dir, "output directory (overrides run.out_dir)");
  train->add_option("--seed", seed, "run seed (overrides run.run_seed)");

  auto* check = app.add_subcommand("check", "run a property suite");
  check->add_option("suite", suite, "grad, rop, fisher, gn-equiv, cg or score-mean")->required();
  std::uint64_t check_seed = 1;
  check->add_option("--seed", check_seed, "seed for the random instances");

  auto* exp = app.add_subcommand("experiment", "run a protocol: bench, metric-source, robustness");
  exp->add_option("name", name, "experiment name")->required();
  exp->add_option("--config", config, "config overrides on top of the experiment defaults");
  exp->add_option("--out", out_dir, "output directory (overrides run.out_dir)");
  exp->add_option("--seed", seed, "run seed (overrides run.run_seed)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return kConfigError;
  }
  if (*train) return cmd_train(config, out_dir, seed, out, err);
  if (*check) return cmd_check(suite, check_seed, out, err);
  return cmd_experiment(name, config, out_dir, seed, out, err);
}

}  // namespace natgrad::cli
