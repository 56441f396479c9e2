#pragma once

// Task-dominance diagnostics. For every shared scalar parameter and every
// task we keep an exponentially decaying average of the squared per-task
// updates (AU); a task's dominance ratio rAU is its AU divided by the sum of
// all tasks' AU on that parameter. Snapshots bucket the ratios at the 20%
// thresholds, overall and per layer. The tracker only reads update records;
// it never feeds anything back into training.

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/model.hpp"
#include "mtlopt/optim.hpp"
#include "mtlopt/rng.hpp"
#include "mtlopt/serialize.hpp"
#include "mtlopt/synthdata.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

// Flat addressing of shared parameter scalars: entry e of the shared vector
// maps to (param index, offset) and to a 1-based layer ordinal.
struct SharedLayout {
  std::vector<std::size_t> param_index;   // per entry
  std::vector<std::size_t> param_offset;  // per entry
  std::vector<std::size_t> layer;         // per entry, 1-based
  std::size_t num_layers = 0;

  SharedLayout() = default;
  SharedLayout(const std::vector<ParamMeta>& meta, const std::vector<Tensor>& params) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (!meta[p].shared()) continue;
      num_layers = std::max(num_layers, meta[p].layer);
      for (std::size_t i = 0; i < params[p].size(); ++i) {
        param_index.push_back(p);
        param_offset.push_back(i);
        layer.push_back(meta[p].layer);
      }
    }
  }

  std::size_t size() const { return param_index.size(); }

  std::vector<std::size_t> entries_of_layer(std::size_t l) const {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < layer.size(); ++e)
      if (layer[e] == l) out.push_back(e);
    return out;
  }
};

inline constexpr std::size_t kNumBuckets = 5;

// Bucket index for a ratio in [0,1]: (0,0.2](0.2,0.4](0.4,0.6](0.6,0.8](0.8,1];
// an exact 0 goes to the first bucket.
inline std::size_t rau_bucket(double r) {
  r = std::clamp(r, 0.0, 1.0);
  if (r <= 0.2) return 0;
  if (r <= 0.4) return 1;
  if (r <= 0.6) return 2;
  if (r <= 0.8) return 3;
  return 4;
}

struct DominanceSnapshot {
  std::size_t step = 0;
  std::size_t epoch = 0;
  // fractions[task][bucket] over tracked parameters; rows sum to 1.
  std::vector<std::array<double, kNumBuckets>> fractions;
  // layer_fractions[layer-1][task][bucket]
  std::vector<std::vector<std::array<double, kNumBuckets>>> layer_fractions;
  std::vector<double> dominated_fraction;               // per task, rAU in (0.8, 1]
  std::vector<std::vector<double>> layer_dominated;     // [layer-1][task]
  double balanced_fraction = 0.0;                       // all tasks' rAU in (0.4, 0.6]
  std::vector<double> layer_balanced;                   // [layer-1]
  std::size_t tracked = 0;   // parameters with nonzero total AU
  std::size_t excluded = 0;  // parameters with zero total AU
};

struct TrackerSettings {
  double gamma = 0.9;
  std::size_t stride = 100;
};

class DominanceTracker {
 public:
  DominanceTracker(const std::vector<ParamMeta>& meta, const std::vector<Tensor>& params,
                   std::size_t num_tasks, TrackerSettings settings = {})
      : settings_(settings), layout_(meta, params), num_tasks_(num_tasks) {
    au_.assign(num_tasks_, std::vector<double>(layout_.size(), 0.0));
  }

  const TrackerSettings& settings() const { return settings_; }
  const SharedLayout& layout() const { return layout_; }
  std::size_t num_tasks() const { return num_tasks_; }
  std::size_t steps_recorded() const { return steps_recorded_; }

  // AU^k <- gamma*AU^k + (1-gamma)*(delta^k)^2 over shared parameters.
  void record(const UpdateRecord& rec) {
    if (rec.task_deltas.size() != num_tasks_)
      throw DimensionError("tracker: update record lacks per-task deltas (diagnostics off?)");
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      std::vector<double>& bank = au_[k];
      for (std::size_t e = 0; e < layout_.size(); ++e) {
        const Tensor& dk = rec.task_deltas[k][layout_.param_index[e]];
        const double d = dk.empty() ? 0.0 : dk[layout_.param_offset[e]];
        bank[e] = settings_.gamma * bank[e] + (1.0 - settings_.gamma) * d * d;
      }
    }
    ++steps_recorded_;
  }

  double au(std::size_t entry, std::size_t task) const {
    check_entry(entry, task);
    return au_[task][entry];
  }

  // rAU(entry, task); empty when no task has updated the parameter yet.
  std::optional<double> rau(std::size_t entry, std::size_t task) const {
    check_entry(entry, task);
    double total = 0.0;
    for (std::size_t k = 0; k < num_tasks_; ++k) total += au_[k][entry];
    if (total <= 0.0) return std::nullopt;
    return au_[task][entry] / total;
  }

  DominanceSnapshot snapshot(std::size_t step, std::size_t epoch) const {
    if (steps_recorded_ == 0) throw ParameterError("tracker: no steps recorded yet");
    DominanceSnapshot s;
    s.step = step;
    s.epoch = epoch;
    const std::size_t L = layout_.num_layers;
    s.fractions.assign(num_tasks_, {});
    s.layer_fractions.assign(L, std::vector<std::array<double, kNumBuckets>>(num_tasks_));
    s.dominated_fraction.assign(num_tasks_, 0.0);
    s.layer_dominated.assign(L, std::vector<double>(num_tasks_, 0.0));
    s.layer_balanced.assign(L, 0.0);
    std::vector<std::size_t> layer_tracked(L, 0);

    for (std::size_t e = 0; e < layout_.size(); ++e) {
      double total = 0.0;
      for (std::size_t k = 0; k < num_tasks_; ++k) total += au_[k][e];
      if (total <= 0.0) {
        ++s.excluded;
        continue;
      }
      ++s.tracked;
      const std::size_t l = layout_.layer[e] - 1;
      ++layer_tracked[l];
      bool balanced = true;
      for (std::size_t k = 0; k < num_tasks_; ++k) {
        const double r = au_[k][e] / total;
        const std::size_t b = rau_bucket(r);
        s.fractions[k][b] += 1.0;
        s.layer_fractions[l][k][b] += 1.0;
        if (b == 4) {
          s.dominated_fraction[k] += 1.0;
          s.layer_dominated[l][k] += 1.0;
        }
        if (!(r > 0.4 && r <= 0.6)) balanced = false;
      }
      if (balanced) {
        s.balanced_fraction += 1.0;
        s.layer_balanced[l] += 1.0;
      }
    }

    const double denom = s.tracked > 0 ? static_cast<double>(s.tracked) : 1.0;
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      for (auto& v : s.fractions[k]) v /= denom;
      s.dominated_fraction[k] /= denom;
    }
    s.balanced_fraction /= denom;
    for (std::size_t l = 0; l < L; ++l) {
      const double ld = layer_tracked[l] > 0 ? static_cast<double>(layer_tracked[l]) : 1.0;
      for (std::size_t k = 0; k < num_tasks_; ++k) {
        for (auto& v : s.layer_fractions[l][k]) v /= ld;
        s.layer_dominated[l][k] /= ld;
      }
      s.layer_balanced[l] /= ld;
    }
    return s;
  }

  // Shared entries ranked by rAU(., task) descending; parameters that were
  // never updated rank last.
  std::vector<std::size_t> rank_by_rau(std::size_t task) const {
    std::vector<std::size_t> idx(layout_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> key(layout_.size(), -1.0);
    for (std::size_t e = 0; e < layout_.size(); ++e)
      if (auto r = rau(e, task)) key[e] = *r;
    std::stable_sort(idx.begin(), idx.end(),
                     [&key](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return idx;
  }

  void save(BinaryWriter& w) const {
    w.put_f64(settings_.gamma);
    w.put_u64(settings_.stride);
    w.put_u64(steps_recorded_);
    w.put_u64(num_tasks_);
    w.put_u64(layout_.size());
    for (const auto& bank : au_)
      for (double v : bank) w.put_f64(v);
  }

  void load(BinaryReader& r) {
    settings_.gamma = r.f64();
    settings_.stride = r.u64();
    steps_recorded_ = r.u64();
    if (r.u64() != num_tasks_ || r.u64() != layout_.size())
      throw IoError("tracker state: task count or layout does not match the model");
    for (auto& bank : au_)
      for (double& v : bank) v = r.f64();
  }

 private:
  void check_entry(std::size_t entry, std::size_t task) const {
    if (entry >= layout_.size()) throw LookupError("tracker: no such shared parameter");
    if (task >= num_tasks_) throw LookupError("tracker: no such task");
  }

  TrackerSettings settings_;
  SharedLayout layout_;
  std::size_t num_tasks_ = 0;
  std::size_t steps_recorded_ = 0;
  std::vector<std::vector<double>> au_;  // [task][entry]
};

// ---------------------------------------------------------------------------
// noise-injection validation

struct NoiseTableRow {
  std::string variant;  // "sigma_sweep" or "top_sweep"
  double sigma2 = 0.0;
  double top_pct = 0.0;
  std::size_t task = 0;
  double rel_rmse_increase = 0.0;
};

namespace detail {

inline std::vector<double> eval_task_rmse(const MtlModel& model, const Dataset& data) {
  const auto f = model.forward(data.x);
  std::vector<double> out(model.num_tasks());
  for (std::size_t k = 0; k < model.num_tasks(); ++k)
    out[k] = std::sqrt(MtlModel::mse(f.y[k], data.y[k]));
  return out;
}

}  // namespace detail

// Perturbs the top-ranked shared parameters with gaussian noise and reports
// the relative RMSE increase per task against the unperturbed model. Two
// sweeps: top-1% under each variance, and each top-x% under the first
// variance. Results are averaged over `noise_seeds` independent draws.
inline std::vector<NoiseTableRow> noise_injection_experiment(
    const MtlModel& model, const DominanceTracker& tracker, std::size_t rank_task,
    const Dataset& eval_data, const std::vector<double>& variances,
    const std::vector<double>& top_percents, std::size_t noise_seeds, Rng& noise_rng,
    std::vector<std::string>* warnings = nullptr) {
  if (variances.empty() || top_percents.empty())
    throw ParameterError("noise experiment: empty sweep");
  for (double v : variances)
    if (v < 0.0) throw ParameterError("noise experiment: negative variance");
  const std::vector<double> base = detail::eval_task_rmse(model, eval_data);
  const auto ranking = tracker.rank_by_rau(rank_task);
  const SharedLayout& layout = tracker.layout();
  const std::size_t n_shared = layout.size();

  auto pick_count = [&](double pct) {
    std::size_t want = static_cast<std::size_t>(pct / 100.0 * static_cast<double>(n_shared) + 0.5);
    if (want < 1) want = 1;
    if (want > n_shared) {
      if (warnings)
        warnings->push_back("top " + std::to_string(pct) + "% exceeds parameter count; using all");
      want = n_shared;
    }
    return want;
  };

  auto measure = [&](double sigma2, double pct) {
    const std::size_t count = pick_count(pct);
    const double stddev = std::sqrt(sigma2);
    std::vector<double> mean_increase(model.num_tasks(), 0.0);
    for (std::size_t s = 0; s < noise_seeds; ++s) {
      Rng draw = noise_rng.derive("draw." + std::to_string(s));
      MtlModel perturbed = model;
      auto& params = perturbed.params();
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t e = ranking[r];
        params[layout.param_index[e]][layout.param_offset[e]] += draw.gaussian(0.0, stddev);
      }
      const std::vector<double> rmse = detail::eval_task_rmse(perturbed, eval_data);
      for (std::size_t k = 0; k < model.num_tasks(); ++k)
        mean_increase[k] += (rmse[k] - base[k]) / base[k];
    }
    for (double& v : mean_increase) v /= static_cast<double>(noise_seeds);
    return mean_increase;
  };

  std::vector<NoiseTableRow> rows;
  for (double sigma2 : variances) {
    const auto inc = measure(sigma2, top_percents.front());
    for (std::size_t k = 0; k < model.num_tasks(); ++k)
      rows.push_back({"sigma_sweep", sigma2, top_percents.front(), k, inc[k]});
  }
  for (double pct : top_percents) {
    const auto inc = measure(variances.front(), pct);
    for (std::size_t k = 0; k < model.num_tasks(); ++k)
      rows.push_back({"top_sweep", variances.front(), pct, k, inc[k]});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// learning-rate dominance traces

struct LrTraceRow {
  std::size_t step = 0;
  std::size_t layer = 0;        // 1-based
  std::string series;           // task name or "whole"
  double value = 0.0;
};

// Samples a fixed set of shared scalar parameters per layer and records the
// layer-averaged per-task and whole effective learning rates each step. In
// AdaTask mode there is no whole bank, so that series is omitted.
class LrTracer {
 public:
  LrTracer(const SharedLayout& layout, std::size_t per_layer, Rng& rng) : layout_(&layout) {
    samples_.resize(layout.num_layers);
    for (std::size_t l = 1; l <= layout.num_layers; ++l) {
      auto entries = layout.entries_of_layer(l);
      rng.shuffle(entries);
      if (entries.size() > per_layer) entries.resize(per_layer);
      samples_[l - 1] = std::move(entries);
    }
  }

  void record(const Optimizer& opt, std::size_t step) {
    const bool whole = opt.settings().mode != OptMode::AdaTask;
    const std::size_t K = opt.num_tasks();
    for (std::size_t l = 0; l < samples_.size(); ++l) {
      if (samples_[l].empty()) continue;
      for (std::size_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (std::size_t e : samples_[l])
          acc += opt.effective_lr(layout_->param_index[e], layout_->param_offset[e], k);
        rows_.push_back({step, l + 1, task_name(k), acc / static_cast<double>(samples_[l].size())});
      }
      if (whole) {
        double acc = 0.0;
        for (std::size_t e : samples_[l])
          acc += opt.effective_lr(layout_->param_index[e], layout_->param_offset[e]);
        rows_.push_back({step, l + 1, "whole", acc / static_cast<double>(samples_[l].size())});
      }
    }
  }

  const std::vector<LrTraceRow>& rows() const { return rows_; }

 private:
  const SharedLayout* layout_;
  std::vector<std::vector<std::size_t>> samples_;  // [layer-1] -> entries
  std::vector<LrTraceRow> rows_;
};

}  // namespace mtlopt
