// Command-line front end: generate synthetic data, train single runs, run
// comparison suites, and recompute the dominance / noise / learning-rate
// diagnostics from saved runs. Exit codes: 0 success, 1 usage or
// configuration error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtlopt/harness.hpp"

namespace fs = std::filesystem;
using namespace mtlopt;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required = false) {
  auto* copt = cmd->add_option("--config", a.config, "experiment config file");
  if (config_required) copt->required();
  cmd->add_option("--seed", a.seed, "master seed (overrides the config)");
  cmd->add_option("--out", a.out, "output directory (overrides out.dir)");
  cmd->add_option("--set", a.sets, "key=value override, repeatable");
}

void apply_overrides(ExperimentConfig& cfg, const CLI::App* cmd, const CommonArgs& a) {
  for (const std::string& kv : a.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
  }
  if (cmd->count("--seed") > 0) cfg.seed = a.seed;
  if (!a.out.empty()) cfg.out_dir = a.out;
}

ExperimentConfig build_config(const CLI::App* cmd, const CommonArgs& a) {
  ExperimentConfig cfg;
  if (!a.config.empty()) cfg = ExperimentConfig::from_file(a.config);
  apply_overrides(cfg, cmd, a);
  cfg.validate();
  return cfg;
}

void require_out_dir(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty())
    throw ConfigError("no output directory: set out.dir in the config or pass --out");
}

int cmd_generate(const CLI::App* cmd, const CommonArgs& a) {
  ExperimentConfig cfg = build_config(cmd, a);
  require_out_dir(cfg);
  if (cfg.data.kind != "synthetic") throw ConfigError("generate requires data.kind = synthetic");
  Rng data_rng = Rng(cfg.seed).derive("data");
  const SyntheticSpec spec =
      make_synthetic_spec(data_rng, cfg.data.d_in, cfg.data.d_out, cfg.data.noise_std);
  const Dataset d = generate(spec, data_rng, cfg.data.samples);
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/dataset.csv";
  write_file(path, dataset_csv_text(d, cfg.hash()));
  std::cout << "wrote " << d.size() << " samples to " << path << "\n";
  return 0;
}

int cmd_train(const CLI::App* cmd, const CommonArgs& a, bool lr_trace) {
  ExperimentConfig cfg = build_config(cmd, a);
  require_out_dir(cfg);
  RunOptions opts;
  opts.lr_trace = lr_trace;
  const RunResult r = run_training(cfg, opts);
  std::cout << "run " << r.config_hash << " finished after " << cfg.steps << " steps\n";
  for (std::size_t k = 0; k < r.report.task_rmse.size(); ++k)
    std::cout << "  task " << task_name(k) << ": rmse " << format_double(r.report.task_rmse[k])
              << ", normalized " << format_double(r.report.normalized[k]) << "\n";
  std::cout << "  average normalized rmse " << format_double(r.report.average) << "\n";
  std::cout << "artifacts in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_dominance(const CLI::App* cmd, const CommonArgs& a) {
  ExperimentConfig cfg = build_config(cmd, a);
  require_out_dir(cfg);
  // Deterministic replay of the saved run with the tracker forced on.
  cfg.tracker_enabled = true;
  const RunResult r = run_training(cfg, {});
  std::cout << "recomputed " << r.snapshots.size() << " dominance snapshots in " << cfg.out_dir
            << "\n";
  return 0;
}

int cmd_noise(const CLI::App* cmd, const CommonArgs& a, const std::string& checkpoint) {
  LoadedCheckpoint lc = load_run_checkpoint(checkpoint);
  if (!lc.tracker)
    throw ConfigError("checkpoint carries no tracker state; train with tracker.enabled = true");
  ExperimentConfig cfg = lc.config;
  apply_overrides(cfg, cmd, a);
  cfg.validate();
  std::string out_dir = cfg.out_dir;
  if (out_dir.empty()) out_dir = fs::path(checkpoint).parent_path().string();
  if (out_dir.empty()) out_dir = ".";

  Rng root(cfg.seed);
  Dataset eval_data;
  if (cfg.data.kind == "synthetic") {
    Rng data_rng = root.derive("data");
    const SyntheticSpec spec =
        make_synthetic_spec(data_rng, cfg.data.d_in, cfg.data.d_out, cfg.data.noise_std);
    Rng eval_rng = root.derive("eval");
    eval_data = generate(spec, eval_rng, cfg.noise.eval_samples, cfg.noise.clean_targets);
  } else {
    eval_data = read_dataset_csv(cfg.data.csv_path);
  }
  Rng noise_rng = root.derive("noise");
  std::vector<std::string> warnings;
  const std::size_t rank_task = lc.model->num_tasks() - 1;  // the dominant task
  const auto rows = noise_injection_experiment(*lc.model, *lc.tracker, rank_task, eval_data,
                                               cfg.noise.variances, cfg.noise.top_percents,
                                               cfg.noise.seeds, noise_rng, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  fs::create_directories(out_dir);
  const std::string path = out_dir + "/noise.csv";
  write_file(path, noise_csv_text(rows, cfg.hash()));
  std::cout << "wrote " << rows.size() << " rows to " << path << "\n";
  return 0;
}

int cmd_suite(const CLI::App* cmd, const CommonArgs& a) {
  SuiteConfig suite = SuiteConfig::from_file(a.config);
  apply_overrides(suite.base, cmd, a);
  std::string out_dir = !a.out.empty() ? a.out : suite.base.out_dir;
  if (out_dir.empty())
    throw ConfigError("no output directory: set out.dir in the config or pass --out");
  const std::string stem = fs::path(a.config).stem().string();
  const SuiteResult res = run_suite(suite, out_dir, stem.empty() ? "suite" : stem);
  for (const SuiteRow& row : res.rows) {
    if (row.ok)
      std::cout << row.name << ": avg normalized rmse " << format_double(row.report.average) << "\n";
    else
      std::cout << row.name << ": FAILED (" << row.error << ")\n";
  }
  std::cout << "table in " << out_dir << "\n";
  return res.all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task learning optimization lab"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, suite_args, dom_args, noise_args, trace_args;
  std::string checkpoint;

  CLI::App* gen = app.add_subcommand("generate", "write the synthetic dataset as CSV");
  add_common(gen, gen_args);
  CLI::App* train = app.add_subcommand("train", "run one training experiment");
  add_common(train, train_args);
  CLI::App* suite = app.add_subcommand("suite", "run a multi-method comparison");
  add_common(suite, suite_args, /*config_required=*/true);
  CLI::App* dom = app.add_subcommand("dominance", "recompute dominance snapshots from a saved run");
  add_common(dom, dom_args);
  CLI::App* noise = app.add_subcommand("noise", "noise-injection validation on a checkpoint");
  noise->add_option("--checkpoint", checkpoint, "path to final.ckpt")->required();
  add_common(noise, noise_args);
  CLI::App* trace = app.add_subcommand("lrtrace", "train while tracing effective learning rates");
  add_common(trace, trace_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen, gen_args);
    if (train->parsed()) return cmd_train(train, train_args, false);
    if (suite->parsed()) return cmd_suite(suite, suite_args);
    if (dom->parsed()) return cmd_dominance(dom, dom_args);
    if (noise->parsed()) return cmd_noise(noise, noise_args, checkpoint);
    if (trace->parsed()) return cmd_train(trace, trace_args, true);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
