#pragma once

// Optimizer state machines for multi-task training.
//
// Three modes share the same update formulas and differ only in how the
// accumulators are kept:
//   Standard  - one accumulator per parameter, fed by the summed gradient.
//   AdaTask   - one accumulator per parameter per task; each task computes its
//               own update from its own bank and the applied update is the sum
//               of the per-task updates.
//   LAdaTask  - memory-lean variant: a single per-parameter accumulator fed by
//               the summed gradient, plus per-(layer, task) contribution
//               scalars; the per-task accumulator is reconstructed as the
//               contribution ratio times the per-parameter accumulator.
//
// Kinds: SGD (global rate, reference only), AdaGrad, RMSProp, Adam. Note the
// decay naming: gamma1 decays the squared-gradient bank and gamma2 the
// momentum bank.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/model.hpp"
#include "mtlopt/serialize.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

enum class OptKind { Sgd, AdaGrad, RmsProp, Adam };
enum class OptMode { Standard, AdaTask, LAdaTask };

inline std::string to_string(OptKind k) {
  switch (k) {
    case OptKind::Sgd: return "sgd";
    case OptKind::AdaGrad: return "adagrad";
    case OptKind::RmsProp: return "rmsprop";
    case OptKind::Adam: return "adam";
  }
  return "?";
}

inline std::string to_string(OptMode m) {
  switch (m) {
    case OptMode::Standard: return "standard";
    case OptMode::AdaTask: return "adatask";
    case OptMode::LAdaTask: return "ladatask";
  }
  return "?";
}

struct OptimizerSettings {
  OptKind kind = OptKind::RmsProp;
  OptMode mode = OptMode::Standard;
  double lr = 1e-3;
  double eps = 1e-8;
  double gamma = 0.9;    // RMSProp squared-gradient decay
  double gamma1 = 0.999; // Adam squared-gradient decay
  double gamma2 = 0.9;   // Adam momentum decay
};

struct UpdateRecord {
  std::size_t step = 0;
  // applied[p] is the update subtracted from parameter p this step.
  std::vector<Tensor> applied;
  // task_deltas[k][p]: task k's share of applied[p]; empty where task k does
  // not touch p. In AdaTask modes these are the actual per-bank updates; in
  // Standard mode they are the exact decomposition of the applied update by
  // gradient source. Filled only when the optimizer has diagnostics on.
  std::vector<std::vector<Tensor>> task_deltas;
};

class Optimizer {
 public:
  // `diagnostics` additionally maintains read-only per-task shadow banks in
  // Standard mode (for per-task effective rates and update decomposition) and
  // fills UpdateRecord::task_deltas. Shadow banks never feed updates.
  Optimizer(OptimizerSettings settings, const std::vector<ParamMeta>& meta,
            const std::vector<Tensor>& params, std::size_t num_tasks, std::size_t num_layers,
            bool diagnostics = false)
      : s_(settings),
        meta_(meta),
        num_tasks_(num_tasks),
        num_layers_(num_layers),
        diagnostics_(diagnostics) {
    if (num_tasks_ == 0) throw ConfigError("optimizer: need at least one task");
    if (s_.eps <= 0.0) throw ConfigError("optimizer: eps must be > 0");
    if (s_.kind == OptKind::Sgd && s_.mode != OptMode::Standard)
      throw ConfigError("optimizer: sgd has no accumulators; only standard mode applies");
    if (s_.mode == OptMode::LAdaTask && s_.kind != OptKind::RmsProp)
      throw ConfigError("optimizer: ladatask is defined for rmsprop");

    shapes_.reserve(params.size());
    for (const Tensor& p : params) shapes_.push_back(p.shape());

    const bool momentum = s_.kind == OptKind::Adam;
    switch (s_.mode) {
      case OptMode::Standard:
        if (s_.kind != OptKind::Sgd) alloc_bank(g_bank_);
        if (momentum) alloc_bank(m_bank_);
        break;
      case OptMode::AdaTask:
        alloc_task_bank(gk_bank_);
        if (momentum) alloc_task_bank(mk_bank_);
        break;
      case OptMode::LAdaTask:
        alloc_bank(g_bank_);
        c_bank_.assign(num_layers_, std::vector<double>(num_tasks_, 0.0));
        break;
    }
    if (diagnostics_ && s_.mode == OptMode::Standard && s_.kind != OptKind::Sgd) {
      alloc_shared_task_bank(shadow_g_);
      if (momentum) alloc_shared_task_bank(shadow_m_);
    }
  }

  const OptimizerSettings& settings() const { return s_; }
  std::size_t step_count() const { return t_; }
  std::size_t num_tasks() const { return num_tasks_; }
  bool diagnostics() const { return diagnostics_; }

  UpdateRecord step(std::vector<Tensor>& params, const TaskGradients& grads) {
    validate(params, grads);
    ++t_;
    UpdateRecord rec;
    rec.step = t_;
    rec.applied.resize(params.size());
    if (diagnostics_)
      rec.task_deltas.assign(num_tasks_, std::vector<Tensor>(params.size()));
    switch (s_.mode) {
      case OptMode::Standard: step_standard(params, grads, rec); break;
      case OptMode::AdaTask: step_adatask(params, grads, rec); break;
      case OptMode::LAdaTask: step_ladatask(params, grads, rec); break;
    }
    return rec;
  }

  // eta / (sqrt(G) + eps) for one scalar parameter. Standard mode with a task
  // argument reads the diagnostic shadow bank; AdaTask reads the task bank
  // (there is no whole bank to ask for); LAdaTask reconstructs the task bank
  // from the contribution ratio.
  double effective_lr(std::size_t p, std::size_t offset, std::optional<std::size_t> task = {}) const {
    if (p >= shapes_.size()) throw LookupError("effective_lr: no such parameter");
    if (offset >= numel(shapes_[p])) throw LookupError("effective_lr: offset out of range");
    if (task && *task >= num_tasks_) throw LookupError("effective_lr: no such task");
    if (s_.kind == OptKind::Sgd) return s_.lr;
    switch (s_.mode) {
      case OptMode::Standard: {
        if (!task) return rate(g_bank_[p][offset]);
        if (!diagnostics_ || !meta_[p].shared())
          throw LookupError("effective_lr: per-task rate needs diagnostics on a shared parameter");
        return rate(shadow_g_[*task][p][offset]);
      }
      case OptMode::AdaTask: {
        if (!task) throw LookupError("effective_lr: adatask has no whole bank");
        const Tensor& bank = gk_bank_[*task][p];
        if (bank.empty()) throw LookupError("effective_lr: task does not touch this parameter");
        return rate(bank[offset]);
      }
      case OptMode::LAdaTask: {
        if (!task) return rate(g_bank_[p][offset]);
        if (!meta_[p].shared()) {
          if (static_cast<int>(*task) != meta_[p].task)
            throw LookupError("effective_lr: task does not touch this parameter");
          return rate(g_bank_[p][offset]);
        }
        const auto& c = c_bank_[meta_[p].layer - 1];
        double denom = 0.0;
        for (double v : c) denom += v;
        if (denom == 0.0) denom = s_.eps;
        return rate(c[*task] / denom * g_bank_[p][offset]);
      }
    }
    throw LookupError("effective_lr: unreachable");
  }

  // Scalar count of the squared-gradient accumulators kept for shared
  // parameters: N for Standard, N*K for AdaTask, N + L*K for LAdaTask.
  // Diagnostic shadow banks are not optimizer state and are not counted.
  std::size_t shared_accumulator_count() const {
    std::size_t count = 0;
    if (s_.mode == OptMode::AdaTask) {
      for (std::size_t k = 0; k < num_tasks_; ++k)
        for (std::size_t p = 0; p < shapes_.size(); ++p)
          if (meta_[p].shared()) count += gk_bank_[k][p].size();
      return count;
    }
    for (std::size_t p = 0; p < shapes_.size(); ++p)
      if (meta_[p].shared() && !g_bank_.empty()) count += g_bank_[p].size();
    for (const auto& layer : c_bank_) count += layer.size();
    return count;
  }

  void save(BinaryWriter& w) const {
    w.put_u8(static_cast<std::uint8_t>(s_.kind));
    w.put_u8(static_cast<std::uint8_t>(s_.mode));
    w.put_u64(t_);
    auto put_bank = [&w](const std::vector<Tensor>& bank) {
      w.put_u64(bank.size());
      for (const Tensor& t : bank) w.put_tensor(t);
    };
    auto put_task_bank = [&](const std::vector<std::vector<Tensor>>& bank) {
      w.put_u64(bank.size());
      for (const auto& b : bank) put_bank(b);
    };
    put_bank(g_bank_);
    put_bank(m_bank_);
    put_task_bank(gk_bank_);
    put_task_bank(mk_bank_);
    put_task_bank(shadow_g_);
    put_task_bank(shadow_m_);
    w.put_u64(c_bank_.size());
    for (const auto& layer : c_bank_) {
      w.put_u64(layer.size());
      for (double v : layer) w.put_f64(v);
    }
  }

  void load(BinaryReader& r) {
    if (static_cast<OptKind>(r.u8()) != s_.kind || static_cast<OptMode>(r.u8()) != s_.mode)
      throw IoError("optimizer state: kind/mode does not match configuration");
    t_ = r.u64();
    auto get_bank = [&r](std::vector<Tensor>& bank) {
      bank.resize(r.u64());
      for (Tensor& t : bank) t = r.tensor();
    };
    auto get_task_bank = [&](std::vector<std::vector<Tensor>>& bank) {
      bank.resize(r.u64());
      for (auto& b : bank) get_bank(b);
    };
    get_bank(g_bank_);
    get_bank(m_bank_);
    get_task_bank(gk_bank_);
    get_task_bank(mk_bank_);
    get_task_bank(shadow_g_);
    get_task_bank(shadow_m_);
    c_bank_.resize(r.u64());
    for (auto& layer : c_bank_) {
      layer.resize(r.u64());
      for (double& v : layer) v = r.f64();
    }
  }

 private:
  double rate(double g) const { return s_.lr / (std::sqrt(g) + s_.eps); }

  void alloc_bank(std::vector<Tensor>& bank) {
    bank.clear();
    for (const Shape& s : shapes_) bank.push_back(Tensor(s));
  }

  // One bank per task; allocated only where the task touches the parameter.
  void alloc_task_bank(std::vector<std::vector<Tensor>>& bank) {
    bank.assign(num_tasks_, {});
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      bank[k].resize(shapes_.size());
      for (std::size_t p = 0; p < shapes_.size(); ++p)
        if (touches(k, p)) bank[k][p] = Tensor(shapes_[p]);
    }
  }

  // Shadow banks cover shared parameters only.
  void alloc_shared_task_bank(std::vector<std::vector<Tensor>>& bank) {
    bank.assign(num_tasks_, {});
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      bank[k].resize(shapes_.size());
      for (std::size_t p = 0; p < shapes_.size(); ++p)
        if (meta_[p].shared()) bank[k][p] = Tensor(shapes_[p]);
    }
  }

  bool touches(std::size_t task, std::size_t p) const {
    return meta_[p].shared() || meta_[p].task == static_cast<int>(task);
  }

  void validate(const std::vector<Tensor>& params, const TaskGradients& grads) const {
    if (params.size() != shapes_.size())
      throw DimensionError("optimizer: parameter list changed size");
    if (grads.num_tasks() != num_tasks_)
      throw DimensionError("optimizer: expected gradients for " + std::to_string(num_tasks_) +
                           " tasks, got " + std::to_string(grads.num_tasks()));
    for (std::size_t k = 0; k < num_tasks_; ++k)
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (!grads.has(k, p)) continue;
        const Tensor& g = grads.grads[k][p];
        if (g.shape() != shapes_[p])
          throw DimensionError("optimizer: gradient shape " + shape_str(g.shape()) +
                               " does not match parameter " + meta_[p].name);
        if (!all_finite(g))
          throw NumericError("optimizer: non-finite gradient for task " + task_name(k) +
                             " at parameter " + meta_[p].name);
      }
  }

  Tensor combined_gradient(const TaskGradients& grads, std::size_t p) const {
    Tensor g(shapes_[p]);
    for (std::size_t k = 0; k < num_tasks_; ++k)
      if (grads.has(k, p)) add_inplace(g, grads.grads[k][p]);
    return g;
  }

  // --- standard: one bank, summed gradient ---------------------------------
  void step_standard(std::vector<Tensor>& params, const TaskGradients& grads, UpdateRecord& rec) {
    const double bc1 = 1.0 - std::pow(s_.gamma1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.gamma2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor g = combined_gradient(grads, p);
      Tensor delta(shapes_[p]);
      // denom[i] = sqrt(bank term) + eps, reused for the per-task split
      Tensor denom;
      switch (s_.kind) {
        case OptKind::Sgd:
          for (std::size_t i = 0; i < g.size(); ++i) delta[i] = s_.lr * g[i];
          break;
        case OptKind::AdaGrad: {
          Tensor& G = g_bank_[p];
          denom = Tensor(shapes_[p]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            G[i] += g[i] * g[i];
            denom[i] = std::sqrt(G[i]) + s_.eps;
            delta[i] = s_.lr * g[i] / denom[i];
          }
          break;
        }
        case OptKind::RmsProp: {
          Tensor& G = g_bank_[p];
          denom = Tensor(shapes_[p]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            G[i] = s_.gamma * G[i] + (1.0 - s_.gamma) * g[i] * g[i];
            denom[i] = std::sqrt(G[i]) + s_.eps;
            delta[i] = s_.lr * g[i] / denom[i];
          }
          break;
        }
        case OptKind::Adam: {
          Tensor& G = g_bank_[p];
          Tensor& M = m_bank_[p];
          denom = Tensor(shapes_[p]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            G[i] = s_.gamma1 * G[i] + (1.0 - s_.gamma1) * g[i] * g[i];
            M[i] = s_.gamma2 * M[i] + (1.0 - s_.gamma2) * g[i];
            denom[i] = std::sqrt(G[i] / bc1) + s_.eps;
            delta[i] = s_.lr * (M[i] / bc2) / denom[i];
          }
          break;
        }
      }
      for (std::size_t i = 0; i < delta.size(); ++i) params[p][i] -= delta[i];

      if (diagnostics_) {
        for (std::size_t k = 0; k < num_tasks_; ++k) {
          if (!touches(k, p)) continue;
          const Tensor* gk = grads.has(k, p) ? &grads.grads[k][p] : nullptr;
          // shadow banks (shared parameters only)
          if (meta_[p].shared() && !shadow_g_.empty()) {
            Tensor& SG = shadow_g_[k][p];
            for (std::size_t i = 0; i < SG.size(); ++i) {
              const double gv = gk ? (*gk)[i] : 0.0;
              switch (s_.kind) {
                case OptKind::AdaGrad: SG[i] += gv * gv; break;
                case OptKind::RmsProp: SG[i] = s_.gamma * SG[i] + (1.0 - s_.gamma) * gv * gv; break;
                case OptKind::Adam: SG[i] = s_.gamma1 * SG[i] + (1.0 - s_.gamma1) * gv * gv; break;
                case OptKind::Sgd: break;
              }
            }
            if (s_.kind == OptKind::Adam) {
              Tensor& SM = shadow_m_[k][p];
              for (std::size_t i = 0; i < SM.size(); ++i) {
                const double gv = gk ? (*gk)[i] : 0.0;
                SM[i] = s_.gamma2 * SM[i] + (1.0 - s_.gamma2) * gv;
              }
            }
          }
          // exact decomposition of the applied update by gradient source
          Tensor dk(shapes_[p]);
          for (std::size_t i = 0; i < dk.size(); ++i) {
            const double gv = gk ? (*gk)[i] : 0.0;
            switch (s_.kind) {
              case OptKind::Sgd: dk[i] = s_.lr * gv; break;
              case OptKind::AdaGrad:
              case OptKind::RmsProp: dk[i] = s_.lr * gv / denom[i]; break;
              case OptKind::Adam: {
                const double mk = meta_[p].shared() ? shadow_m_[k][p][i]
                                                    : m_bank_[p][i];  // head: whole momentum is this task's
                dk[i] = s_.lr * (mk / bc2) / denom[i];
                break;
              }
            }
          }
          rec.task_deltas[k][p] = std::move(dk);
        }
      }
      rec.applied[p] = std::move(delta);
    }
  }

  // --- adatask: per-task banks, summed per-task updates --------------------
  void step_adatask(std::vector<Tensor>& params, const TaskGradients& grads, UpdateRecord& rec) {
    const double bc1 = 1.0 - std::pow(s_.gamma1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.gamma2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor total(shapes_[p]);
      for (std::size_t k = 0; k < num_tasks_; ++k) {
        if (!touches(k, p)) continue;
        const Tensor* gk = grads.has(k, p) ? &grads.grads[k][p] : nullptr;
        Tensor& G = gk_bank_[k][p];
        Tensor dk(shapes_[p]);
        switch (s_.kind) {
          case OptKind::AdaGrad:
            for (std::size_t i = 0; i < G.size(); ++i) {
              const double gv = gk ? (*gk)[i] : 0.0;
              G[i] += gv * gv;
              dk[i] = s_.lr * gv / (std::sqrt(G[i]) + s_.eps);
            }
            break;
          case OptKind::RmsProp:
            for (std::size_t i = 0; i < G.size(); ++i) {
              const double gv = gk ? (*gk)[i] : 0.0;
              G[i] = s_.gamma * G[i] + (1.0 - s_.gamma) * gv * gv;
              dk[i] = s_.lr * gv / (std::sqrt(G[i]) + s_.eps);
            }
            break;
          case OptKind::Adam: {
            Tensor& M = mk_bank_[k][p];
            for (std::size_t i = 0; i < G.size(); ++i) {
              const double gv = gk ? (*gk)[i] : 0.0;
              G[i] = s_.gamma1 * G[i] + (1.0 - s_.gamma1) * gv * gv;
              M[i] = s_.gamma2 * M[i] + (1.0 - s_.gamma2) * gv;
              dk[i] = s_.lr * (M[i] / bc2) / (std::sqrt(G[i] / bc1) + s_.eps);
            }
            break;
          }
          case OptKind::Sgd:
            break;  // rejected at construction
        }
        add_inplace(total, dk);
        if (diagnostics_) rec.task_deltas[k][p] = std::move(dk);
      }
      for (std::size_t i = 0; i < total.size(); ++i) params[p][i] -= total[i];
      rec.applied[p] = std::move(total);
    }
  }

  // --- ladatask: contribution ratios at layer granularity ------------------
  void step_ladatask(std::vector<Tensor>& params, const TaskGradients& grads, UpdateRecord& rec) {
    // layer-mean of squared per-task gradients -> contribution EMA
    std::vector<std::vector<double>> sumsq(num_layers_, std::vector<double>(num_tasks_, 0.0));
    std::vector<std::size_t> layer_size(num_layers_, 0);
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (!meta_[p].shared()) continue;
      const std::size_t l = meta_[p].layer - 1;
      layer_size[l] += numel(shapes_[p]);
      for (std::size_t k = 0; k < num_tasks_; ++k) {
        if (!grads.has(k, p)) continue;
        const Tensor& g = grads.grads[k][p];
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * g[i];
        sumsq[l][k] += acc;
      }
    }
    for (std::size_t l = 0; l < num_layers_; ++l) {
      if (layer_size[l] == 0) throw ConfigError("ladatask: layer without shared parameters");
      for (std::size_t k = 0; k < num_tasks_; ++k)
        c_bank_[l][k] = s_.gamma * c_bank_[l][k] +
                        (1.0 - s_.gamma) * sumsq[l][k] / static_cast<double>(layer_size[l]);
    }

    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor g = combined_gradient(grads, p);
      Tensor& G = g_bank_[p];
      for (std::size_t i = 0; i < G.size(); ++i)
        G[i] = s_.gamma * G[i] + (1.0 - s_.gamma) * g[i] * g[i];

      Tensor total(shapes_[p]);
      if (meta_[p].shared()) {
        const auto& c = c_bank_[meta_[p].layer - 1];
        double denom = 0.0;
        for (double v : c) denom += v;
        if (denom == 0.0) denom = s_.eps;
        for (std::size_t k = 0; k < num_tasks_; ++k) {
          const Tensor* gk = grads.has(k, p) ? &grads.grads[k][p] : nullptr;
          const double ratio = c[k] / denom;
          Tensor dk(shapes_[p]);
          for (std::size_t i = 0; i < dk.size(); ++i) {
            const double gv = gk ? (*gk)[i] : 0.0;
            dk[i] = s_.lr * gv / (std::sqrt(ratio * G[i]) + s_.eps);
          }
          add_inplace(total, dk);
          if (diagnostics_) rec.task_deltas[k][p] = std::move(dk);
        }
      } else {
        const std::size_t own = static_cast<std::size_t>(meta_[p].task);
        Tensor dk(shapes_[p]);
        for (std::size_t i = 0; i < dk.size(); ++i)
          dk[i] = s_.lr * g[i] / (std::sqrt(G[i]) + s_.eps);
        total = dk;
        if (diagnostics_) rec.task_deltas[own][p] = std::move(dk);
      }
      for (std::size_t i = 0; i < total.size(); ++i) params[p][i] -= total[i];
      rec.applied[p] = std::move(total);
    }
  }

  OptimizerSettings s_;
  std::vector<ParamMeta> meta_;
  std::vector<Shape> shapes_;
  std::size_t num_tasks_ = 0;
  std::size_t num_layers_ = 0;
  bool diagnostics_ = false;
  std::size_t t_ = 0;

  std::vector<Tensor> g_bank_;                  // Standard / LAdaTask
  std::vector<Tensor> m_bank_;                  // Standard Adam momentum
  std::vector<std::vector<Tensor>> gk_bank_;    // AdaTask [task][param]
  std::vector<std::vector<Tensor>> mk_bank_;    // AdaTask Adam momentum
  std::vector<std::vector<double>> c_bank_;     // LAdaTask [layer][task]
  std::vector<std::vector<Tensor>> shadow_g_;   // Standard diagnostics
  std::vector<std::vector<Tensor>> shadow_m_;
};

}  // namespace mtlopt
