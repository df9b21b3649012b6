#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "paramcrop/config.hpp"
#include "paramcrop/errors.hpp"
#include "paramcrop/gradcheck.hpp"
#include "paramcrop/plot.hpp"
#include "paramcrop/simulator.hpp"

namespace fs = std::filesystem;
using namespace paramcrop;

namespace {

enum Exit { kOk = 0, kConfigExit = 2, kNumericExit = 3, kIoExit = 4 };

struct RunOptions {
  std::string config_path;
  std::string manifest_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // key=value
  std::string out_dir = ".";
  bool plot = false;
  bool print_config = false;
};

std::string command_line;

TrainConfig resolve_config(const RunOptions& o) {
  if (!o.config_path.empty() && !o.manifest_path.empty()) {
    throw ConfigError("config", "--config and --from-manifest are mutually exclusive");
  }
  TrainConfig cfg;
  if (!o.manifest_path.empty()) {
    cfg = read_manifest(o.manifest_path).config;
  } else if (!o.config_path.empty()) {
    cfg = load_config(o.config_path);
  }
  std::map<std::string, std::string> kv;
  for (const auto& s : o.overrides) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(s, "override must look like key=value");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  cfg = apply_config(kv, cfg);
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw IoError("write failed: " + p.string());
}

std::size_t thread_cap() {
  const char* env = std::getenv("PARAMCROP_THREADS");
  if (!env || !*env) return 1;
  try {
    const long n = std::stol(env);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("PARAMCROP_THREADS", std::string("not an integer: ") + env);
  }
}

// Runs every config independently; results keep the input order.
std::vector<MetricsLog> run_all(const std::vector<TrainConfig>& configs) {
  std::vector<MetricsLog> logs(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        logs[i] = run_training(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(thread_cap(), configs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return logs;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::size_t last_tenth_start(std::size_t steps) { return steps - std::max<std::size_t>(1, steps / 10); }

int cmd_gradcheck(std::uint64_t seed, double tolerance, std::size_t trials) {
  GradcheckConfig cfg;
  cfg.seed = seed;
  cfg.tolerance = tolerance;
  cfg.trials = trials;
  const GradcheckReport report = run_gradcheck(cfg);
  std::cout << report.to_text();
  return report.passed() ? kOk : kNumericExit;
}

int cmd_train(const RunOptions& o) {
  const TrainConfig cfg = resolve_config(o);
  if (o.print_config) {
    std::cout << config_to_text(cfg);
    return kOk;
  }
  const fs::path dir = prepare_out_dir(o.out_dir);
  RunManifest m;
  m.command = command_line;
  m.seed = cfg.seed;
  m.config = cfg;
  m.outputs.emplace_back("metrics", (dir / "metrics.csv").string());
  if (o.plot) m.outputs.emplace_back("plot", (dir / "metrics.svg").string());
  const bool learned = cfg.strategy == Strategy::paramcrop;
  if (learned) m.outputs.emplace_back("checkpoints", dir.string());
  write_manifest(dir / "manifest.txt", m);

  Trainer trainer(cfg);
  MetricsLog log;
  log.initial_probe = trainer.probe(cfg.probe_samples);
  for (std::size_t s = 0; s < cfg.steps; ++s) log.records.push_back(trainer.train_step());

  auto csv = open_out(dir / "metrics.csv");
  write_metrics_csv(csv, log);
  close_out(csv, dir / "metrics.csv");
  if (o.plot) {
    auto svg = open_out(dir / "metrics.svg");
    write_metrics_svg(svg, log, cfg.steps, "strategy " + to_string(cfg.strategy) + ", seed " + std::to_string(cfg.seed));
    close_out(svg, dir / "metrics.svg");
  }
  if (learned) {
    for (std::size_t b = 0; b < 2; ++b) save_checkpoint(dir, "cropper" + std::to_string(b), trainer.cropper(b), cfg.seed);
  }
  std::cout << "probe iou " << fmt(log.initial_probe.iou) << " dist_norm " << fmt(log.initial_probe.dist_norm) << '\n';
  if (!log.records.empty()) {
    const std::size_t from = last_tenth_start(log.records.size());
    std::cout << "last10 iou " << fmt(mean_over(log, &StepRecord::iou, from, log.records.size())) << " dist_norm "
              << fmt(mean_over(log, &StepRecord::dist_norm, from, log.records.size())) << '\n';
  }
  std::cout << "wrote " << (dir / "metrics.csv").string() << '\n';
  return kOk;
}

int cmd_compare(const RunOptions& o, const std::vector<std::string>& names) {
  if (names.size() < 2) throw ConfigError("strategies", "compare needs at least two strategies");
  const TrainConfig base = resolve_config(o);
  std::vector<TrainConfig> configs;
  for (const auto& n : names) {
    TrainConfig c = base;
    c.strategy = parse_strategy(n);
    configs.push_back(c);
  }
  if (o.print_config) {
    std::cout << config_to_text(base);
    return kOk;
  }
  const fs::path dir = prepare_out_dir(o.out_dir);
  RunManifest m;
  m.command = command_line;
  m.seed = base.seed;
  m.config = base;
  m.outputs.emplace_back("compare", (dir / "compare.csv").string());
  write_manifest(dir / "manifest.txt", m);

  const std::vector<MetricsLog> logs = run_all(configs);
  auto csv = open_out(dir / "compare.csv");
  csv << "strategy," << kMetricsCsvHeader << '\n';
  for (std::size_t i = 0; i < logs.size(); ++i) {
    for (const auto& r : logs[i].records) csv << to_string(configs[i].strategy) << ',' << format_record(r) << '\n';
  }
  close_out(csv, dir / "compare.csv");
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& log = logs[i];
    if (log.records.empty()) continue;
    const std::size_t from = last_tenth_start(log.records.size());
    std::cout << to_string(configs[i].strategy) << ": last10 iou "
              << fmt(mean_over(log, &StepRecord::iou, from, log.records.size())) << " dist_norm "
              << fmt(mean_over(log, &StepRecord::dist_norm, from, log.records.size())) << '\n';
  }
  std::cout << "wrote " << (dir / "compare.csv").string() << '\n';
  return kOk;
}

int cmd_sweep(const RunOptions& o, const std::vector<double>& bounds) {
  if (bounds.empty()) throw ConfigError("bounds", "sweep-detach needs at least one bound");
  const TrainConfig base = resolve_config(o);
  std::vector<TrainConfig> configs;
  for (double b : bounds) {
    if (!(b >= 0.0 && b <= 0.5)) throw ConfigError("detach_bound", "bound " + fmt(b) + " outside [0, 0.5]");
    TrainConfig c = base;
    c.bounds.detach_bound = b;
    c.validate();
    configs.push_back(c);
  }
  if (o.print_config) {
    std::cout << config_to_text(base);
    return kOk;
  }
  if (base.steps == 0) throw ConfigError("steps", "sweep-detach needs at least one step");
  const fs::path dir = prepare_out_dir(o.out_dir);
  RunManifest m;
  m.command = command_line;
  m.seed = base.seed;
  m.config = base;
  m.outputs.emplace_back("sweep", (dir / "sweep.csv").string());
  write_manifest(dir / "manifest.txt", m);

  const std::vector<MetricsLog> logs = run_all(configs);
  auto csv = open_out(dir / "sweep.csv");
  csv << "detach_bound,last10_iou,last10_dist_norm,probe_iou,probe_dist_norm\n";
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& log = logs[i];
    const std::size_t from = last_tenth_start(log.records.size());
    const std::string row = fmt(bounds[i]) + ',' + fmt(mean_over(log, &StepRecord::iou, from, log.records.size())) +
                            ',' + fmt(mean_over(log, &StepRecord::dist_norm, from, log.records.size())) + ',' +
                            fmt(log.initial_probe.iou) + ',' + fmt(log.initial_probe.dist_norm);
    csv << row << '\n';
    std::cout << row << '\n';
  }
  close_out(csv, dir / "sweep.csv");
  return kOk;
}

void add_run_options(CLI::App* app, RunOptions& o) {
  app->add_option("--config", o.config_path, "key = value config file");
  app->add_option("--from-manifest", o.manifest_path, "rerun the config recorded in a manifest");
  app->add_option("--seed", o.seed, "override the config seed");
  app->add_option("--set", o.overrides, "override a config key (key=value), repeatable");
  app->add_option("--out", o.out_dir, "output directory");
  app->add_flag("--print-config", o.print_config, "print the effective config and exit");
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Learned parametric cube cropping for contrastive video learning (desk-scale simulator)"};
  app.require_subcommand(0, 1);
  bool print_defaults = false;
  app.add_flag("--print-config", print_defaults, "print the default config and exit");

  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-5;
  std::size_t gc_trials = 20;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every backward pass");
  gradcheck->add_option("--seed", gc_seed, "seed for the random instances");
  gradcheck->add_option("--tolerance", gc_tol, "max relative error allowed");
  gradcheck->add_option("--trials", gc_trials, "instances per check")->check(CLI::PositiveNumber);

  RunOptions train_opts;
  auto* train = app.add_subcommand("train", "train one run, write metrics CSV and manifest");
  add_run_options(train, train_opts);
  train->add_flag("--plot", train_opts.plot, "also write metrics.svg");

  RunOptions compare_opts;
  std::vector<std::string> strategies;
  auto* compare = app.add_subcommand("compare", "one run per strategy, merged CSV");
  add_run_options(compare, compare_opts);
  compare->add_option("--strategies", strategies, "paramcrop, random, simple, hard, manual")->required()->delimiter(',');

  RunOptions sweep_opts;
  std::vector<double> bounds;
  auto* sweep = app.add_subcommand("sweep-detach", "final-phase statistics per detach bound");
  add_run_options(sweep, sweep_opts);
  sweep->add_option("--bounds", bounds, "detach bounds in [0, 0.5]")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    if (print_defaults) {
      std::cout << config_to_text(TrainConfig{});
      return kOk;
    }
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_tol, gc_trials);
    if (*train) return cmd_train(train_opts);
    if (*compare) return cmd_compare(compare_opts, strategies);
    if (*sweep) return cmd_sweep(sweep_opts, bounds);
    std::cout << app.help();
    return kConfigExit;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoExit;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return kNumericExit;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericExit;
  }
}
