#pragma once

// Declarative experiment description. The on-disk format is flat
// `key = value` text with dotted sections, `#` comments, and strict parsing:
// any unknown key is rejected. canonical_text() echoes every key in a fixed
// order, and its hash stamps every output file of a run.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtlopt/balance.hpp"
#include "mtlopt/dominance.hpp"
#include "mtlopt/errors.hpp"
#include "mtlopt/io.hpp"
#include "mtlopt/optim.hpp"
#include "mtlopt/serialize.hpp"

namespace mtlopt {

struct DataConfig {
  std::string kind = "synthetic";  // synthetic | csv
  std::size_t samples = 10000;
  std::size_t d_in = 250;
  std::size_t d_out = 100;
  double noise_std = 0.1;
  std::string csv_path;
};

struct ModelConfig {
  std::vector<std::size_t> widths = {100, 100, 100, 100};
  std::string activation = "elu";
};

struct MetricsConfig {
  std::string normalizer = "single_task";  // single_task | target_rms
  std::size_t stride = 10;
};

struct NoiseConfig {
  std::vector<double> variances = {0.01, 0.02, 0.03, 0.04, 0.05};
  std::vector<double> top_percents = {1, 5, 10, 20};
  std::size_t seeds = 5;
  std::size_t eval_samples = 2000;
  bool clean_targets = false;
};

struct LrTraceConfig {
  std::size_t per_layer = 10;
  std::size_t stride = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  ModelConfig model;
  OptimizerSettings optimizer;
  BalancerSettings balancer;
  std::size_t steps = 2000;
  std::size_t batch = 0;  // 0 = full batch
  TrackerSettings tracker;
  bool tracker_enabled = true;
  MetricsConfig metrics;
  NoiseConfig noise;
  LrTraceConfig lrtrace;
  std::string out_dir;
  bool write_checkpoint = true;

  static const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "seed",
        "data.kind", "data.samples", "data.d_in", "data.d_out", "data.noise_std", "data.csv_path",
        "model.widths", "model.activation",
        "optimizer.kind", "optimizer.mode", "optimizer.lr", "optimizer.eps",
        "optimizer.gamma", "optimizer.gamma1", "optimizer.gamma2",
        "balancer.kind", "balancer.gradnorm_alpha", "balancer.gradnorm_lr",
        "balancer.cagrad_c", "balancer.cagrad_iters", "balancer.cagrad_step",
        "train.steps", "train.batch",
        "tracker.enabled", "tracker.gamma", "tracker.stride",
        "metrics.normalizer", "metrics.stride",
        "noise.variances", "noise.top_percents", "noise.seeds", "noise.eval_samples",
        "noise.clean_targets",
        "lrtrace.per_layer", "lrtrace.stride",
        "out.dir", "out.checkpoint",
    };
    return keys;
  }

  void set(const std::string& key, const std::string& raw_value);
  std::string get(const std::string& key) const;

  // Everything that affects results, in fixed order. out.dir is environmental
  // (where artifacts land) and is deliberately left out so that replaying a
  // run into a different directory reproduces identical files.
  std::string canonical_text() const {
    std::string out;
    for (const std::string& key : known_keys()) {
      if (key == "out.dir") continue;
      out += key;
      out += " = ";
      out += get(key);
      out += "\n";
    }
    return out;
  }

  std::string hash() const { return hash_hex(canonical_text()); }

  void validate() const;

  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path) {
    return from_text(read_file(path));
  }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

inline std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  for (const std::string& item : split(v, ','))
    if (!trim(item).empty()) out.push_back(parse_double(trim(item)));
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  for (const std::string& item : split(v, ','))
    if (!trim(item).empty()) out.push_back(parse_u64(trim(item)));
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

inline OptKind parse_opt_kind(const std::string& v) {
  if (v == "sgd") return OptKind::Sgd;
  if (v == "adagrad") return OptKind::AdaGrad;
  if (v == "rmsprop") return OptKind::RmsProp;
  if (v == "adam") return OptKind::Adam;
  throw ConfigError("unknown optimizer kind '" + v + "'");
}

inline OptMode parse_opt_mode(const std::string& v) {
  if (v == "standard") return OptMode::Standard;
  if (v == "adatask") return OptMode::AdaTask;
  if (v == "ladatask") return OptMode::LAdaTask;
  throw ConfigError("unknown optimizer mode '" + v + "'");
}

inline BalancerKind parse_balancer_kind(const std::string& v) {
  if (v == "equalweight") return BalancerKind::EqualWeight;
  if (v == "uw") return BalancerKind::Uw;
  if (v == "gradnorm") return BalancerKind::GradNorm;
  if (v == "pcgrad") return BalancerKind::PcGrad;
  if (v == "cagrad") return BalancerKind::CaGrad;
  throw ConfigError("unknown balancer kind '" + v + "'");
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& raw_value) {
  const std::string v(trim(raw_value));
  if (key == "seed") seed = parse_u64(v);
  else if (key == "data.kind") data.kind = v;
  else if (key == "data.samples") data.samples = parse_u64(v);
  else if (key == "data.d_in") data.d_in = parse_u64(v);
  else if (key == "data.d_out") data.d_out = parse_u64(v);
  else if (key == "data.noise_std") data.noise_std = parse_double(v);
  else if (key == "data.csv_path") data.csv_path = v;
  else if (key == "model.widths") model.widths = detail::parse_size_list(v);
  else if (key == "model.activation") model.activation = v;
  else if (key == "optimizer.kind") optimizer.kind = detail::parse_opt_kind(v);
  else if (key == "optimizer.mode") optimizer.mode = detail::parse_opt_mode(v);
  else if (key == "optimizer.lr") optimizer.lr = parse_double(v);
  else if (key == "optimizer.eps") optimizer.eps = parse_double(v);
  else if (key == "optimizer.gamma") optimizer.gamma = parse_double(v);
  else if (key == "optimizer.gamma1") optimizer.gamma1 = parse_double(v);
  else if (key == "optimizer.gamma2") optimizer.gamma2 = parse_double(v);
  else if (key == "balancer.kind") balancer.kind = detail::parse_balancer_kind(v);
  else if (key == "balancer.gradnorm_alpha") balancer.gradnorm_alpha = parse_double(v);
  else if (key == "balancer.gradnorm_lr") balancer.gradnorm_lr = parse_double(v);
  else if (key == "balancer.cagrad_c") balancer.cagrad_c = parse_double(v);
  else if (key == "balancer.cagrad_iters") balancer.cagrad_iters = parse_u64(v);
  else if (key == "balancer.cagrad_step") balancer.cagrad_step = parse_double(v);
  else if (key == "train.steps") steps = parse_u64(v);
  else if (key == "train.batch") batch = parse_u64(v);
  else if (key == "tracker.enabled") tracker_enabled = detail::parse_bool(v);
  else if (key == "tracker.gamma") tracker.gamma = parse_double(v);
  else if (key == "tracker.stride") tracker.stride = parse_u64(v);
  else if (key == "metrics.normalizer") metrics.normalizer = v;
  else if (key == "metrics.stride") metrics.stride = parse_u64(v);
  else if (key == "noise.variances") noise.variances = detail::parse_double_list(v);
  else if (key == "noise.top_percents") noise.top_percents = detail::parse_double_list(v);
  else if (key == "noise.seeds") noise.seeds = parse_u64(v);
  else if (key == "noise.eval_samples") noise.eval_samples = parse_u64(v);
  else if (key == "noise.clean_targets") noise.clean_targets = detail::parse_bool(v);
  else if (key == "lrtrace.per_layer") lrtrace.per_layer = parse_u64(v);
  else if (key == "lrtrace.stride") lrtrace.stride = parse_u64(v);
  else if (key == "out.dir") out_dir = v;
  else if (key == "out.checkpoint") write_checkpoint = detail::parse_bool(v);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

inline std::string ExperimentConfig::get(const std::string& key) const {
  if (key == "seed") return std::to_string(seed);
  if (key == "data.kind") return data.kind;
  if (key == "data.samples") return std::to_string(data.samples);
  if (key == "data.d_in") return std::to_string(data.d_in);
  if (key == "data.d_out") return std::to_string(data.d_out);
  if (key == "data.noise_std") return format_double(data.noise_std);
  if (key == "data.csv_path") return data.csv_path;
  if (key == "model.widths") return detail::join_list(model.widths);
  if (key == "model.activation") return model.activation;
  if (key == "optimizer.kind") return to_string(optimizer.kind);
  if (key == "optimizer.mode") return to_string(optimizer.mode);
  if (key == "optimizer.lr") return format_double(optimizer.lr);
  if (key == "optimizer.eps") return format_double(optimizer.eps);
  if (key == "optimizer.gamma") return format_double(optimizer.gamma);
  if (key == "optimizer.gamma1") return format_double(optimizer.gamma1);
  if (key == "optimizer.gamma2") return format_double(optimizer.gamma2);
  if (key == "balancer.kind") return to_string(balancer.kind);
  if (key == "balancer.gradnorm_alpha") return format_double(balancer.gradnorm_alpha);
  if (key == "balancer.gradnorm_lr") return format_double(balancer.gradnorm_lr);
  if (key == "balancer.cagrad_c") return format_double(balancer.cagrad_c);
  if (key == "balancer.cagrad_iters") return std::to_string(balancer.cagrad_iters);
  if (key == "balancer.cagrad_step") return format_double(balancer.cagrad_step);
  if (key == "train.steps") return std::to_string(steps);
  if (key == "train.batch") return std::to_string(batch);
  if (key == "tracker.enabled") return tracker_enabled ? "true" : "false";
  if (key == "tracker.gamma") return format_double(tracker.gamma);
  if (key == "tracker.stride") return std::to_string(tracker.stride);
  if (key == "metrics.normalizer") return metrics.normalizer;
  if (key == "metrics.stride") return std::to_string(metrics.stride);
  if (key == "noise.variances") return detail::join_list(noise.variances);
  if (key == "noise.top_percents") return detail::join_list(noise.top_percents);
  if (key == "noise.seeds") return std::to_string(noise.seeds);
  if (key == "noise.eval_samples") return std::to_string(noise.eval_samples);
  if (key == "noise.clean_targets") return noise.clean_targets ? "true" : "false";
  if (key == "lrtrace.per_layer") return std::to_string(lrtrace.per_layer);
  if (key == "lrtrace.stride") return std::to_string(lrtrace.stride);
  if (key == "out.dir") return out_dir;
  if (key == "out.checkpoint") return write_checkpoint ? "true" : "false";
  throw ConfigError("unknown configuration key '" + key + "'");
}

inline void ExperimentConfig::validate() const {
  if (data.kind != "synthetic" && data.kind != "csv")
    throw ConfigError("data.kind must be synthetic or csv");
  if (data.kind == "csv" && data.csv_path.empty())
    throw ConfigError("data.kind = csv requires data.csv_path");
  if (data.samples < 1) throw ConfigError("data.samples must be >= 1");
  if (data.d_in < 1 || data.d_out < 1) throw ConfigError("data dimensions must be >= 1");
  if (data.noise_std < 0.0) throw ConfigError("data.noise_std must be >= 0");
  if (model.widths.empty()) throw ConfigError("model.widths must list at least one layer");
  for (std::size_t w : model.widths)
    if (w < 1) throw ConfigError("model.widths entries must be >= 1");
  if (model.activation != "elu") throw ConfigError("model.activation: only elu is supported");
  if (optimizer.eps <= 0.0) throw ConfigError("optimizer.eps must be > 0");
  for (double g : {optimizer.gamma, optimizer.gamma1, optimizer.gamma2, tracker.gamma})
    if (g < 0.0 || g >= 1.0) throw ConfigError("decay factors must lie in [0, 1)");
  if (optimizer.kind == OptKind::Sgd && optimizer.mode != OptMode::Standard)
    throw ConfigError("optimizer.kind = sgd supports only standard mode");
  if (optimizer.mode == OptMode::LAdaTask && optimizer.kind != OptKind::RmsProp)
    throw ConfigError("optimizer.mode = ladatask requires optimizer.kind = rmsprop");
  if (balancer.cagrad_c < 0.0 || balancer.cagrad_c >= 1.0)
    throw ConfigError("balancer.cagrad_c must lie in [0, 1)");
  if (metrics.normalizer != "single_task" && metrics.normalizer != "target_rms")
    throw ConfigError("metrics.normalizer must be single_task or target_rms");
  if (batch > data.samples) throw ConfigError("train.batch cannot exceed data.samples");
  if (noise.variances.empty() || noise.top_percents.empty())
    throw ConfigError("noise sweeps must be non-empty");
  for (double v : noise.variances)
    if (v < 0.0) throw ConfigError("noise.variances must be >= 0");
  for (double p : noise.top_percents)
    if (p <= 0.0 || p > 100.0) throw ConfigError("noise.top_percents must lie in (0, 100]");
  if (noise.seeds < 1) throw ConfigError("noise.seeds must be >= 1");
  if (tracker.stride < 1) throw ConfigError("tracker.stride must be >= 1");
  if (metrics.stride < 1) throw ConfigError("metrics.stride must be >= 1");
  if (lrtrace.stride < 1) throw ConfigError("lrtrace.stride must be >= 1");
}

// key/value lines with # comments; returns pairs in file order.
inline std::vector<std::pair<std::string, std::string>> parse_kv_lines(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& raw_line : split(text, '\n')) {
    const std::string_view line = trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("malformed line (expected key = value): '" + std::string(line) + "'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("malformed line (empty key)");
    out.emplace_back(key, value);
  }
  return out;
}

inline ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : parse_kv_lines(text)) cfg.set(key, value);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// suite: a base config plus named per-run overrides

struct SuiteConfig {
  ExperimentConfig base;
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> runs;
  std::string baseline;  // run name used as the delta_p reference

  static SuiteConfig from_text(const std::string& text) {
    SuiteConfig sc;
    std::vector<std::string> run_names;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> overrides;
    for (const auto& [key, value] : parse_kv_lines(text)) {
      if (key == "suite.runs") {
        for (const std::string& n : split(value, ','))
          if (!trim(n).empty()) run_names.emplace_back(trim(n));
      } else if (key == "suite.baseline") {
        sc.baseline = value;
      } else if (key.starts_with("run.")) {
        const std::size_t dot = key.find('.', 4);
        if (dot == std::string::npos)
          throw ConfigError("suite: expected run.<name>.<key>, got '" + key + "'");
        overrides[key.substr(4, dot - 4)].emplace_back(key.substr(dot + 1), value);
      } else {
        sc.base.set(key, value);
      }
    }
    if (run_names.empty()) throw ConfigError("suite: suite.runs must list at least one run");
    if (sc.baseline.empty()) sc.baseline = run_names.front();
    bool baseline_found = false;
    for (const std::string& name : run_names) {
      sc.runs.emplace_back(name, overrides[name]);
      overrides.erase(name);
      if (name == sc.baseline) baseline_found = true;
    }
    if (!overrides.empty())
      throw ConfigError("suite: overrides for unknown run '" + overrides.begin()->first + "'");
    if (!baseline_found) throw ConfigError("suite: baseline '" + sc.baseline + "' is not in suite.runs");
    sc.base.validate();
    for (const auto& [name, kv] : sc.runs) (void)sc.resolve(name);  // reject bad overrides eagerly
    return sc;
  }

  static SuiteConfig from_file(const std::string& path) { return from_text(read_file(path)); }

  // Resolved config for one run; throws on unknown run names or bad overrides.
  ExperimentConfig resolve(const std::string& name) const {
    for (const auto& [run_name, kv] : runs) {
      if (run_name != name) continue;
      ExperimentConfig cfg = base;
      for (const auto& [key, value] : kv) cfg.set(key, value);
      cfg.validate();
      return cfg;
    }
    throw LookupError("suite: no run named '" + name + "'");
  }
};

}  // namespace mtlopt
