#pragma once

// Experiment harness: wires data, model, balancer, optimizer, tracker and
// metrics into a deterministic training run and writes the run's artifacts.
// One RNG stream per concern (data, init, balancer shuffling, lr-trace
// sampling, noise injection), all derived from the master seed by fixed
// labels, so toggling one feature never perturbs another.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtlopt/balance.hpp"
#include "mtlopt/config.hpp"
#include "mtlopt/dominance.hpp"
#include "mtlopt/errors.hpp"
#include "mtlopt/io.hpp"
#include "mtlopt/metrics.hpp"
#include "mtlopt/model.hpp"
#include "mtlopt/optim.hpp"
#include "mtlopt/serialize.hpp"
#include "mtlopt/synthdata.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

// ---------------------------------------------------------------------------
// dataset CSV: header x_0..x_{d-1},yA_0..,yB_0.., one row per sample

inline std::string dataset_csv_text(const Dataset& d, const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n";
  const std::size_t d_in = d.x.shape()[1];
  for (std::size_t c = 0; c < d_in; ++c) out += (c ? ",x_" : "x_") + std::to_string(c);
  for (std::size_t k = 0; k < d.num_tasks(); ++k)
    for (std::size_t c = 0; c < d.y[k].shape()[1]; ++c)
      out += ",y" + task_name(k) + "_" + std::to_string(c);
  out += "\n";
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d_in; ++c) {
      if (c) out += ",";
      out += format_double(d.x.at(r, c));
    }
    for (std::size_t k = 0; k < d.num_tasks(); ++k)
      for (std::size_t c = 0; c < d.y[k].shape()[1]; ++c)
        out += "," + format_double(d.y[k].at(r, c));
    out += "\n";
  }
  return out;
}

inline Dataset read_dataset_csv(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::string> lines = split(text, '\n');
  std::size_t li = 0;
  while (li < lines.size() && (trim(lines[li]).empty() || trim(lines[li]).front() == '#')) ++li;
  if (li == lines.size()) throw IoError("dataset csv: no header in " + path);
  const std::vector<std::string> header = split(std::string(trim(lines[li])), ',');
  std::size_t d_in = 0;
  std::vector<std::size_t> task_width;
  for (const std::string& col : header) {
    if (col.starts_with("x_")) {
      ++d_in;
    } else if (col.size() > 2 && col[0] == 'y' && col.find('_') != std::string::npos) {
      const std::size_t k = static_cast<std::size_t>(col[1] - 'A');
      if (task_width.size() <= k) task_width.resize(k + 1, 0);
      ++task_width[k];
    } else {
      throw IoError("dataset csv: unexpected column '" + col + "'");
    }
  }
  if (d_in == 0 || task_width.empty()) throw IoError("dataset csv: malformed header");
  std::vector<std::vector<double>> rows;
  for (++li; li < lines.size(); ++li) {
    const std::string_view line = trim(lines[li]);
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(std::string(line), ',');
    if (cells.size() != header.size())
      throw IoError("dataset csv: row with " + std::to_string(cells.size()) + " cells, expected " +
                    std::to_string(header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_double(trim(cells[c]));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("dataset csv: no data rows");
  Dataset d;
  d.x = Tensor({rows.size(), d_in});
  for (std::size_t k = 0; k < task_width.size(); ++k)
    d.y.push_back(Tensor({rows.size(), task_width[k]}));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < d_in; ++i) d.x.at(r, i) = rows[r][c++];
    for (std::size_t k = 0; k < task_width.size(); ++k)
      for (std::size_t i = 0; i < task_width[k]; ++i) d.y[k].at(r, i) = rows[r][c++];
  }
  return d;
}

// ---------------------------------------------------------------------------
// run results

struct MetricsRow {
  std::size_t step = 0;
  std::vector<double> loss;     // per-task batch MSE
  std::vector<double> rmse;     // sqrt of the above
  std::vector<double> weights;  // balancer weights, when the balancer has them
};

struct RunResult {
  ExperimentConfig config;
  std::string config_hash;
  EvalReport report;                       // on the full training set
  std::vector<double> target_rms;          // per-task RMS of the targets
  std::vector<MetricsRow> metrics_rows;
  std::vector<DominanceSnapshot> snapshots;
  std::vector<LrTraceRow> lr_rows;
  std::uint64_t param_checksum = 0;
  std::size_t steps_per_epoch = 0;

  std::shared_ptr<MtlModel> model;
  std::shared_ptr<Optimizer> optimizer;
  std::shared_ptr<DominanceTracker> tracker;
  std::shared_ptr<Dataset> train_data;
  std::shared_ptr<SyntheticSpec> spec;  // null for csv datasets
};

struct RunOptions {
  bool write_files = true;
  bool lr_trace = false;
  std::string artifacts_dir;   // defaults to config out.dir
  std::string norm_cache_dir;  // defaults to <artifacts_dir>/norm_cache
};

inline std::uint64_t param_checksum(const std::vector<Tensor>& params) {
  BinaryWriter w;
  for (const Tensor& t : params) w.put_tensor(t);
  return detail::fnv1a64(w.buffer());
}

// ---------------------------------------------------------------------------
// normalizers

inline std::string normalizer_cache_key(const ExperimentConfig& cfg, std::size_t task) {
  static const char* kKeys[] = {
      "seed", "data.kind", "data.samples", "data.d_in", "data.d_out", "data.noise_std",
      "data.csv_path", "model.widths", "model.activation", "optimizer.kind", "optimizer.lr",
      "optimizer.eps", "optimizer.gamma", "optimizer.gamma1", "optimizer.gamma2",
      "train.steps", "train.batch"};
  std::string key;
  for (const char* k : kKeys) key += std::string(k) + "=" + cfg.get(k) + "\n";
  key += "task=" + std::to_string(task) + "\n";
  return hash_hex(key);
}

// Trains a single-task model of identical architecture on one task with the
// same base optimizer (standard mode) and returns its final training RMSE.
inline double train_single_task_reference(const ExperimentConfig& cfg, const Dataset& data,
                                          std::size_t task) {
  Rng root(cfg.seed);
  Rng init_rng = root.derive("init");
  MtlModel model(data.x.shape()[1], cfg.model.widths, data.y[task].shape()[1], 1);
  model.init_params(init_rng);
  OptimizerSettings os = cfg.optimizer;
  os.mode = OptMode::Standard;
  Optimizer opt(os, model.meta(), model.params(), 1, model.num_layers(), false);
  const std::size_t n = data.size();
  const std::size_t b = cfg.batch == 0 ? n : cfg.batch;
  Dataset single;
  single.x = data.x;
  single.y = {data.y[task]};
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const Dataset* batch = &single;
    Dataset storage;
    if (b != n) {
      storage = single.slice(((t - 1) * b) % n, b);
      batch = &storage;
    }
    const auto f = model.forward(batch->x);
    auto [losses, grads] = model.backward_per_task(f, batch->y);
    opt.step(model.params(), grads);
  }
  const auto f = model.forward(single.x);
  return rmse(f.y[0], single.y[0]);
}

inline std::vector<double> resolve_normalizers(const ExperimentConfig& cfg, const Dataset& data,
                                               const std::string& cache_dir) {
  std::vector<double> out(data.num_tasks());
  if (cfg.metrics.normalizer == "target_rms") {
    for (std::size_t k = 0; k < data.num_tasks(); ++k) out[k] = root_mean_square(data.y[k]);
    return out;
  }
  namespace fs = std::filesystem;
  if (!cache_dir.empty()) fs::create_directories(cache_dir);
  for (std::size_t k = 0; k < data.num_tasks(); ++k) {
    const std::string path =
        cache_dir.empty() ? "" : cache_dir + "/st_" + normalizer_cache_key(cfg, k) + ".json";
    if (!path.empty() && fs::exists(path)) {
      const auto j = nlohmann::json::parse(read_file(path));
      out[k] = j.at("normalizer").get<double>();
      continue;
    }
    out[k] = train_single_task_reference(cfg, data, k);
    if (!path.empty()) {
      nlohmann::json j;
      j["normalizer"] = out[k];
      j["task"] = task_name(k);
      write_file(path, j.dump(2) + "\n");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// artifact text

inline std::string metrics_csv_text(const RunResult& r) {
  const std::size_t K = r.report.task_rmse.size();
  const bool weights = !r.metrics_rows.empty() && !r.metrics_rows.front().weights.empty();
  std::string out = "# config_hash=" + r.config_hash + "\n";
  out += "step";
  for (std::size_t k = 0; k < K; ++k) out += ",task" + task_name(k) + "_loss";
  for (std::size_t k = 0; k < K; ++k) out += ",task" + task_name(k) + "_rmse";
  if (weights)
    for (std::size_t k = 0; k < K; ++k) out += ",weight_" + task_name(k);
  out += "\n";
  for (const MetricsRow& row : r.metrics_rows) {
    out += std::to_string(row.step);
    for (double v : row.loss) out += "," + format_double(v);
    for (double v : row.rmse) out += "," + format_double(v);
    if (weights)
      for (double v : row.weights) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

// step,layer,task,bucket_low,bucket_high,fraction; layer 0 carries the
// all-layer aggregate, layers 1..L the per-layer breakdown.
inline std::string snapshots_csv_text(const std::vector<DominanceSnapshot>& snaps,
                                      const std::string& config_hash) {
  static const int edges[kNumBuckets + 1] = {0, 20, 40, 60, 80, 100};
  std::string out = "# config_hash=" + config_hash + "\n";
  out += "step,layer,task,bucket_low,bucket_high,fraction\n";
  for (const DominanceSnapshot& s : snaps) {
    const std::size_t K = s.fractions.size();
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t b = 0; b < kNumBuckets; ++b)
        out += std::to_string(s.step) + ",0," + task_name(k) + "," + std::to_string(edges[b]) +
               "," + std::to_string(edges[b + 1]) + "," + format_double(s.fractions[k][b]) + "\n";
    for (std::size_t l = 0; l < s.layer_fractions.size(); ++l)
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t b = 0; b < kNumBuckets; ++b)
          out += std::to_string(s.step) + "," + std::to_string(l + 1) + "," + task_name(k) + "," +
                 std::to_string(edges[b]) + "," + std::to_string(edges[b + 1]) + "," +
                 format_double(s.layer_fractions[l][k][b]) + "\n";
  }
  return out;
}

inline std::string noise_csv_text(const std::vector<NoiseTableRow>& rows,
                                  const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n";
  out += "variant,sigma2,top_pct,task,rel_rmse_increase\n";
  for (const NoiseTableRow& r : rows)
    out += r.variant + "," + format_double(r.sigma2) + "," + format_double(r.top_pct) + "," +
           task_name(r.task) + "," + format_double(r.rel_rmse_increase) + "\n";
  return out;
}

inline std::string lrtrace_csv_text(const std::vector<LrTraceRow>& rows,
                                    const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n";
  out += "step,layer,series,value\n";
  for (const LrTraceRow& r : rows)
    out += std::to_string(r.step) + "," + std::to_string(r.layer) + "," + r.series + "," +
           format_double(r.value) + "\n";
  return out;
}

inline nlohmann::json snapshot_json(const DominanceSnapshot& s) {
  nlohmann::json j;
  j["step"] = s.step;
  j["epoch"] = s.epoch;
  j["tracked"] = s.tracked;
  j["excluded"] = s.excluded;
  j["balanced_fraction"] = s.balanced_fraction;
  for (std::size_t k = 0; k < s.fractions.size(); ++k) {
    const std::string t = task_name(k);
    j["dominated_fraction"][t] = s.dominated_fraction[k];
    j["buckets"][t] = s.fractions[k];
  }
  for (std::size_t l = 0; l < s.layer_fractions.size(); ++l) {
    nlohmann::json lj;
    lj["layer"] = l + 1;
    lj["balanced_fraction"] = s.layer_balanced[l];
    for (std::size_t k = 0; k < s.fractions.size(); ++k)
      lj["dominated_fraction"][task_name(k)] = s.layer_dominated[l][k];
    j["layers"].push_back(lj);
  }
  return j;
}

inline std::string summary_json_text(const RunResult& r) {
  nlohmann::json j;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.config.seed;
  j["steps"] = r.config.steps;
  j["steps_per_epoch"] = r.steps_per_epoch;
  j["param_checksum"] = r.param_checksum;
  for (std::size_t k = 0; k < r.report.task_rmse.size(); ++k) {
    const std::string t = task_name(k);
    j["eval"]["rmse"][t] = r.report.task_rmse[k];
    j["eval"]["normalizer"][t] = r.report.normalizer[k];
    j["eval"]["normalized_rmse"][t] = r.report.normalized[k];
    j["eval"]["target_rms"][t] = r.target_rms[k];
  }
  j["eval"]["average_normalized_rmse"] = r.report.average;
  if (!r.snapshots.empty()) j["dominance"] = snapshot_json(r.snapshots.back());
  if (!r.metrics_rows.empty() && !r.metrics_rows.back().weights.empty()) {
    for (std::size_t k = 0; k < r.metrics_rows.back().weights.size(); ++k)
      j["balancer_final_weights"][task_name(k)] = r.metrics_rows.back().weights[k];
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// checkpoints

inline void save_run_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                                const MtlModel& model, const Optimizer& opt,
                                const DominanceTracker* tracker) {
  CheckpointSections cs;
  cs.add("config", cfg.canonical_text());
  BinaryWriter mw;
  mw.put_u64(model.params().size());
  for (const Tensor& t : model.params()) mw.put_tensor(t);
  cs.add("model", mw.take());
  BinaryWriter ow;
  opt.save(ow);
  cs.add("optim", ow.take());
  if (tracker) {
    BinaryWriter tw;
    tracker->save(tw);
    cs.add("tracker", tw.take());
  }
  write_file(path, cs.encode());
}

struct LoadedCheckpoint {
  ExperimentConfig config;
  std::shared_ptr<MtlModel> model;
  std::shared_ptr<Optimizer> optimizer;
  std::shared_ptr<DominanceTracker> tracker;  // null when absent
};

inline LoadedCheckpoint load_run_checkpoint(const std::string& path, std::size_t num_tasks = 2) {
  const CheckpointSections cs = CheckpointSections::decode(read_file(path));
  LoadedCheckpoint lc;
  lc.config = ExperimentConfig::from_text(cs.require("config"));
  lc.model = std::make_shared<MtlModel>(lc.config.data.d_in, lc.config.model.widths,
                                        lc.config.data.d_out, num_tasks);
  {
    BinaryReader r(cs.require("model"));
    const std::uint64_t n = r.u64();
    if (n != lc.model->params().size()) throw IoError("checkpoint: parameter count mismatch");
    for (Tensor& t : lc.model->params()) {
      Tensor loaded = r.tensor();
      if (loaded.shape() != t.shape()) throw IoError("checkpoint: parameter shape mismatch");
      t = std::move(loaded);
    }
  }
  {
    lc.optimizer = std::make_shared<Optimizer>(lc.config.optimizer, lc.model->meta(),
                                               lc.model->params(), num_tasks,
                                               lc.model->num_layers(), true);
    BinaryReader r(cs.require("optim"));
    lc.optimizer->load(r);
  }
  if (const std::string* blob = cs.find("tracker")) {
    lc.tracker = std::make_shared<DominanceTracker>(lc.model->meta(), lc.model->params(),
                                                    num_tasks, lc.config.tracker);
    BinaryReader r(*blob);
    lc.tracker->load(r);
  }
  return lc;
}

// ---------------------------------------------------------------------------
// training

inline RunResult run_training(const ExperimentConfig& cfg, RunOptions opts = {}) {
  cfg.validate();
  namespace fs = std::filesystem;
  const std::string out_dir = opts.artifacts_dir.empty() ? cfg.out_dir : opts.artifacts_dir;
  if (opts.write_files && out_dir.empty())
    throw ConfigError("run: no output directory (set out.dir or pass --out)");
  const std::string cache_dir =
      opts.norm_cache_dir.empty() ? (out_dir.empty() ? "" : out_dir + "/norm_cache")
                                  : opts.norm_cache_dir;

  RunResult r;
  r.config = cfg;
  r.config_hash = cfg.hash();

  Rng root(cfg.seed);
  Rng data_rng = root.derive("data");
  Rng init_rng = root.derive("init");
  Rng bal_rng = root.derive("balancer");
  Rng trace_rng = root.derive("lrtrace");

  if (cfg.data.kind == "synthetic") {
    r.spec = std::make_shared<SyntheticSpec>(
        make_synthetic_spec(data_rng, cfg.data.d_in, cfg.data.d_out, cfg.data.noise_std));
    r.train_data = std::make_shared<Dataset>(generate(*r.spec, data_rng, cfg.data.samples));
  } else {
    r.train_data = std::make_shared<Dataset>(read_dataset_csv(cfg.data.csv_path));
    if (r.train_data->x.shape()[1] != cfg.data.d_in)
      throw ConfigError("csv dataset width does not match data.d_in");
  }
  const Dataset& data = *r.train_data;
  const std::size_t K = data.num_tasks();
  const std::size_t n = data.size();
  const std::size_t b = cfg.batch == 0 ? n : cfg.batch;
  r.steps_per_epoch = (n + b - 1) / b;

  r.model = std::make_shared<MtlModel>(cfg.data.d_in, cfg.model.widths, cfg.data.d_out, K);
  r.model->init_params(init_rng);
  const bool diagnostics = cfg.tracker_enabled || opts.lr_trace;
  r.optimizer = std::make_shared<Optimizer>(cfg.optimizer, r.model->meta(), r.model->params(), K,
                                            r.model->num_layers(), diagnostics);
  OptimizerSettings uw_opt = cfg.optimizer;
  uw_opt.mode = OptMode::Standard;
  Balancer balancer(cfg.balancer, r.model->meta(), K, uw_opt);
  if (cfg.tracker_enabled)
    r.tracker = std::make_shared<DominanceTracker>(r.model->meta(), r.model->params(), K, cfg.tracker);

  auto layout = std::make_shared<SharedLayout>(r.model->meta(), r.model->params());
  std::optional<LrTracer> tracer;
  if (opts.lr_trace) tracer.emplace(*layout, cfg.lrtrace.per_layer, trace_rng);

  const bool log_weights = cfg.balancer.kind == BalancerKind::Uw ||
                           cfg.balancer.kind == BalancerKind::GradNorm ||
                           cfg.balancer.kind == BalancerKind::CaGrad;

  auto write_common = [&]() {
    fs::create_directories(out_dir);
    write_file(out_dir + "/config_echo.cfg",
               "# config_hash=" + r.config_hash + "\n" + cfg.canonical_text());
    write_file(out_dir + "/metrics.csv", metrics_csv_text(r));
    if (!r.snapshots.empty())
      write_file(out_dir + "/dominance_snapshots.csv",
                 snapshots_csv_text(r.snapshots, r.config_hash));
    if (tracer) write_file(out_dir + "/lrtrace.csv", lrtrace_csv_text(r.lr_rows, r.config_hash));
  };

  std::size_t completed = 0;
  try {
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
      const Dataset* batch = &data;
      Dataset storage;
      if (b != n) {
        storage = data.slice(((t - 1) * b) % n, b);
        batch = &storage;
      }
      const auto f = r.model->forward(batch->x);
      auto [losses, grads] = r.model->backward_per_task(f, batch->y);
      BalanceResult br = balancer.transform(std::move(grads), losses, bal_rng);
      const UpdateRecord rec = r.optimizer->step(r.model->params(), br.grads);
      if (r.tracker) r.tracker->record(rec);
      if (tracer && (t % cfg.lrtrace.stride == 0 || t == cfg.steps)) tracer->record(*r.optimizer, t);
      if (t % cfg.metrics.stride == 0 || t == cfg.steps) {
        MetricsRow row;
        row.step = t;
        row.loss = losses;
        row.rmse.resize(K);
        for (std::size_t k = 0; k < K; ++k) row.rmse[k] = std::sqrt(losses[k]);
        if (log_weights) row.weights = br.log_weights;
        r.metrics_rows.push_back(std::move(row));
      }
      if (r.tracker && (t % cfg.tracker.stride == 0 || t == cfg.steps))
        r.snapshots.push_back(r.tracker->snapshot(t, t * b / n));
      completed = t;
    }
  } catch (const NumericError& e) {
    // divergence: record the last good step, keep whatever was logged
    if (tracer) r.lr_rows = tracer->rows();
    if (opts.write_files) {
      write_common();
      nlohmann::json j;
      j["config_hash"] = r.config_hash;
      j["aborted_at_step"] = completed;
      j["error"] = e.what();
      write_file(out_dir + "/summary.json", j.dump(2) + "\n");
    }
    throw NumericError(std::string(e.what()) + " (diverged after step " +
                       std::to_string(completed) + ")");
  }

  {
    const auto f = r.model->forward(data.x);
    std::vector<double> task_rmse(K);
    for (std::size_t k = 0; k < K; ++k) task_rmse[k] = rmse(f.y[k], data.y[k]);
    r.target_rms.resize(K);
    for (std::size_t k = 0; k < K; ++k) r.target_rms[k] = root_mean_square(data.y[k]);
    r.report = make_report(task_rmse, resolve_normalizers(cfg, data, cache_dir));
  }
  if (tracer) r.lr_rows = tracer->rows();
  r.param_checksum = param_checksum(r.model->params());
  if (opts.write_files) {
    write_common();
    write_file(out_dir + "/summary.json", summary_json_text(r));
    if (cfg.write_checkpoint)
      save_run_checkpoint(out_dir + "/final.ckpt", cfg, *r.model, *r.optimizer, r.tracker.get());
  }
  return r;
}

// ---------------------------------------------------------------------------
// suite

struct SuiteRow {
  std::string name;
  bool ok = false;
  std::string error;
  EvalReport report;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  std::string table_csv;
  bool all_ok = true;
};

inline SuiteResult run_suite(const SuiteConfig& suite, const std::string& out_dir,
                             const std::string& table_name = "suite") {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  SuiteResult res;
  for (const auto& [name, overrides] : suite.runs) {
    SuiteRow row;
    row.name = name;
    try {
      ExperimentConfig cfg = suite.resolve(name);
      RunOptions opts;
      opts.artifacts_dir = out_dir + "/" + name;
      opts.norm_cache_dir = out_dir + "/norm_cache";
      RunResult rr = run_training(cfg, opts);
      row.ok = true;
      row.report = rr.report;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      res.all_ok = false;
    }
    res.rows.push_back(std::move(row));
  }

  const SuiteRow* baseline = nullptr;
  for (const SuiteRow& row : res.rows)
    if (row.name == suite.baseline && row.ok) baseline = &row;

  std::size_t K = 2;
  for (const SuiteRow& row : res.rows)
    if (row.ok) K = row.report.normalized.size();

  std::string csv = "# config_hash=" + hash_hex(suite.base.canonical_text()) + "\n";
  csv += "method";
  for (std::size_t k = 0; k < K; ++k) csv += ",task" + task_name(k) + "_nrmse";
  csv += ",avg_nrmse,delta_p\n";
  for (const SuiteRow& row : res.rows) {
    csv += row.name;
    if (!row.ok) {
      for (std::size_t k = 0; k < K + 2; ++k) csv += ",nan";
      csv += "\n";
      continue;
    }
    for (double v : row.report.normalized) csv += "," + format_double(v);
    csv += "," + format_double(row.report.average);
    if (baseline) {
      std::vector<MetricValue> m, base;
      for (std::size_t k = 0; k < K; ++k) {
        m.push_back({"task" + task_name(k) + "_nrmse", row.report.normalized[k], false});
        base.push_back({"task" + task_name(k) + "_nrmse", baseline->report.normalized[k], false});
      }
      csv += "," + format_double(delta_p(m, base));
    } else {
      csv += ",nan";
    }
    csv += "\n";
  }
  res.table_csv = csv;
  write_file(out_dir + "/" + table_name + ".csv", csv);
  if (!res.all_ok) {
    std::string log;
    for (const SuiteRow& row : res.rows)
      if (!row.ok) log += row.name + ": " + row.error + "\n";
    write_file(out_dir + "/" + table_name + "_errors.log", log);
  }
  return res;
}

}  // namespace mtlopt
