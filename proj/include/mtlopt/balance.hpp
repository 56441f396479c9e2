#pragma once

// Loss-weighting and gradient-surgery baselines. Every balancer is a
// transformation of the per-task gradients (plus a little internal state);
// none of them touches model parameters. Loss weighters (UW, GradNorm) scale
// all of a task's gradients including its head; gradient surgery (PCGrad,
// CAGrad) operates on the flattened shared gradients only, since head
// gradients cannot conflict across tasks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/model.hpp"
#include "mtlopt/optim.hpp"
#include "mtlopt/rng.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

enum class BalancerKind { EqualWeight, Uw, GradNorm, PcGrad, CaGrad };

inline std::string to_string(BalancerKind k) {
  switch (k) {
    case BalancerKind::EqualWeight: return "equalweight";
    case BalancerKind::Uw: return "uw";
    case BalancerKind::GradNorm: return "gradnorm";
    case BalancerKind::PcGrad: return "pcgrad";
    case BalancerKind::CaGrad: return "cagrad";
  }
  return "?";
}

struct BalancerSettings {
  BalancerKind kind = BalancerKind::EqualWeight;
  double gradnorm_alpha = 1.5;
  double gradnorm_lr = 0.025;
  double cagrad_c = 0.4;
  std::size_t cagrad_iters = 50;
  double cagrad_step = 0.1;
};

// ---------------------------------------------------------------------------
// flat views over shared gradients

inline std::vector<double> flatten_shared(const std::vector<Tensor>& task_grads,
                                          const std::vector<ParamMeta>& meta) {
  std::vector<double> flat;
  for (std::size_t p = 0; p < meta.size(); ++p) {
    if (!meta[p].shared()) continue;
    const Tensor& g = task_grads[p];
    flat.insert(flat.end(), g.vec().begin(), g.vec().end());
  }
  return flat;
}

inline void scatter_shared(std::vector<Tensor>& task_grads, const std::vector<ParamMeta>& meta,
                           const std::vector<double>& flat) {
  std::size_t off = 0;
  for (std::size_t p = 0; p < meta.size(); ++p) {
    if (!meta[p].shared()) continue;
    Tensor& g = task_grads[p];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = flat[off + i];
    off += g.size();
  }
  if (off != flat.size()) throw DimensionError("scatter_shared: length mismatch");
}

// ---------------------------------------------------------------------------
// PCGrad projection on flat vectors

namespace detail {

inline double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// For each task, subtract from its gradient the projection onto every other
// task's raw gradient whose dot product is negative, visiting the other tasks
// in a fresh random order. Raw gradients are never modified.
inline std::vector<std::vector<double>> pcgrad_project(
    const std::vector<std::vector<double>>& raw, Rng& rng) {
  if (raw.size() < 2) throw ParameterError("pcgrad: needs at least two tasks");
  std::vector<std::vector<double>> pc = raw;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < raw.size(); ++j)
      if (j != k) order.push_back(j);
    rng.shuffle(order);
    for (std::size_t j : order) {
      const double d = detail::vdot(pc[k], raw[j]);
      if (d >= 0.0) continue;
      const double n2 = detail::vdot(raw[j], raw[j]);
      if (n2 == 0.0) continue;  // nothing to project onto
      const double coef = d / n2;
      for (std::size_t i = 0; i < pc[k].size(); ++i) pc[k][i] -= coef * raw[j][i];
    }
  }
  return pc;
}

// ---------------------------------------------------------------------------
// CAGrad inner problem: min_{w in simplex} F(w) = g_w . g_0 + sqrt(phi)*|g_w|
// with g_w = (1/K) sum_k w_k g_k, g_0 the mean gradient, phi = c^2|g_0|^2.

struct CagradSolution {
  std::vector<double> w;
  double gw_norm = 0.0;
  double phi = 0.0;
  double objective = 0.0;
  bool converged = true;
};

inline void project_to_simplex(std::vector<double>& w) {
  std::vector<double> u = w;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  std::size_t rho = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      tau = t;
    }
  }
  (void)rho;
  for (double& v : w) v = std::max(0.0, v - tau);
}

// Precomputed Gram matrix form so that objective evaluations are O(K^2).
class CagradObjective {
 public:
  CagradObjective(const std::vector<std::vector<double>>& g, double c) : k_(g.size()) {
    gram_.assign(k_, std::vector<double>(k_, 0.0));
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = i; j < k_; ++j)
        gram_[i][j] = gram_[j][i] = detail::vdot(g[i], g[j]);
    b_.assign(k_, 0.0);
    double g0_sq = 0.0;
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t j = 0; j < k_; ++j) b_[i] += gram_[i][j];
      b_[i] /= static_cast<double>(k_);
      g0_sq += b_[i];
    }
    g0_sq /= static_cast<double>(k_);
    g0_sq_ = std::max(g0_sq, 0.0);
    phi_ = c * c * g0_sq_;
  }

  double gw_sqnorm(const std::vector<double>& w) const {
    double s = 0.0;
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) s += w[i] * w[j] * gram_[i][j];
    s /= static_cast<double>(k_ * k_);
    return std::max(s, 0.0);
  }

  double value(const std::vector<double>& w) const {
    double lin = 0.0;
    for (std::size_t i = 0; i < k_; ++i) lin += w[i] * b_[i];
    lin /= static_cast<double>(k_);
    return lin + std::sqrt(phi_) * std::sqrt(gw_sqnorm(w));
  }

  std::vector<double> gradient(const std::vector<double>& w) const {
    const double gw = std::sqrt(gw_sqnorm(w));
    std::vector<double> grad(k_, 0.0);
    for (std::size_t i = 0; i < k_; ++i) {
      grad[i] = b_[i] / static_cast<double>(k_);
      if (gw > 0.0) {
        double row = 0.0;
        for (std::size_t j = 0; j < k_; ++j) row += w[j] * gram_[i][j];
        grad[i] += std::sqrt(phi_) * row / (static_cast<double>(k_ * k_) * gw);
      }
    }
    return grad;
  }

  double phi() const { return phi_; }
  double g0_sqnorm() const { return g0_sq_; }

 private:
  std::size_t k_;
  std::vector<std::vector<double>> gram_;
  std::vector<double> b_;  // b_k = g_k . g_0
  double g0_sq_ = 0.0;
  double phi_ = 0.0;
};

inline CagradSolution cagrad_solve(const std::vector<std::vector<double>>& g, double c,
                                   std::size_t iters = 50, double step = 0.1) {
  if (g.size() < 2) throw ParameterError("cagrad: needs at least two tasks");
  if (c < 0.0 || c >= 1.0) throw ParameterError("cagrad: c must be in [0, 1)");
  const std::size_t K = g.size();
  CagradObjective obj(g, c);
  CagradSolution sol;
  sol.phi = obj.phi();

  if (K == 2) {
    // 1-d problem over w = (t, 1-t): golden-section on a convex objective.
    const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
    auto val = [&](double t) { return obj.value({t, 1.0 - t}); };
    double lo = 0.0, hi = 1.0;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = val(x1), f2 = val(x2);
    for (int it = 0; it < 120; ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = val(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = val(x2);
      }
    }
    const double t = 0.5 * (lo + hi);
    const double fm = val(t);
    // endpoints can win when the minimum sits on the boundary
    double best_t = t, best_f = fm;
    if (val(0.0) < best_f) { best_t = 0.0; best_f = val(0.0); }
    if (val(1.0) < best_f) { best_t = 1.0; best_f = val(1.0); }
    sol.w = {best_t, 1.0 - best_t};
    sol.objective = best_f;
  } else {
    // Projected gradient descent on the simplex. The objective is normalized
    // by |g_0|^2 so the fixed step size is scale-free.
    const double scale = std::max(obj.g0_sqnorm(), 1e-300);
    std::vector<double> w(K, 1.0 / static_cast<double>(K));
    std::vector<double> best_w = w;
    double best_f = obj.value(w);
    double last_move = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      const auto grad = obj.gradient(w);
      std::vector<double> next = w;
      for (std::size_t i = 0; i < K; ++i) next[i] -= step * grad[i] / scale;
      project_to_simplex(next);
      last_move = 0.0;
      for (std::size_t i = 0; i < K; ++i) last_move = std::max(last_move, std::abs(next[i] - w[i]));
      w = std::move(next);
      const double f = obj.value(w);
      if (f < best_f) {
        best_f = f;
        best_w = w;
      }
    }
    sol.converged = last_move < 1e-6;
    sol.w = std::move(best_w);
    sol.objective = best_f;
  }
  sol.gw_norm = std::sqrt(obj.gw_sqnorm(sol.w));
  return sol;
}

// ---------------------------------------------------------------------------
// balancer facade

struct BalanceResult {
  TaskGradients grads;
  // per-task weights for the metrics log: exp(-s) for UW, w for GradNorm,
  // the solved simplex weights for CAGrad, 1 otherwise.
  std::vector<double> log_weights;
  bool solver_converged = true;
};

class Balancer {
 public:
  Balancer(BalancerSettings settings, std::vector<ParamMeta> meta, std::size_t num_tasks,
           OptimizerSettings uw_opt = {})
      : s_(settings), meta_(std::move(meta)), num_tasks_(num_tasks) {
    if (num_tasks_ == 0) throw ConfigError("balancer: need at least one task");
    for (std::size_t p = meta_.size(); p > 0; --p) {
      if (meta_[p - 1].shared() && meta_[p - 1].name.ends_with(".w")) {
        last_shared_weight_ = p - 1;
        break;
      }
    }
    if (s_.kind == BalancerKind::Uw) {
      uw_s_ = Tensor({num_tasks_});
      uw_opt.mode = OptMode::Standard;
      std::vector<ParamMeta> s_meta = {{"uw.s", 1, -1}};
      std::vector<Tensor> s_params = {uw_s_};
      uw_optimizer_ = std::make_unique<Optimizer>(uw_opt, s_meta, s_params, 1, 1, false);
    }
    if (s_.kind == BalancerKind::GradNorm) gradnorm_w_.assign(num_tasks_, 1.0);
    if (s_.kind == BalancerKind::CaGrad && (s_.cagrad_c < 0.0 || s_.cagrad_c >= 1.0))
      throw ConfigError("balancer: cagrad c must be in [0, 1)");
  }

  BalancerKind kind() const { return s_.kind; }
  const Tensor& uw_log_vars() const { return uw_s_; }
  void set_uw_log_vars(const Tensor& s) {
    if (s.size() != num_tasks_) throw DimensionError("uw: one log-variance per task");
    uw_s_ = s;
  }
  const std::vector<double>& gradnorm_weights() const { return gradnorm_w_; }

  // UW combined objective, sum_k exp(-s_k) L_k + s_k.
  double uw_total(const std::vector<double>& losses) const {
    double total = 0.0;
    for (std::size_t k = 0; k < num_tasks_; ++k)
      total += std::exp(-uw_s_[k]) * losses[k] + uw_s_[k];
    return total;
  }

  BalanceResult transform(TaskGradients raw, const std::vector<double>& losses, Rng& rng) {
    if (raw.num_tasks() != num_tasks_ || losses.size() != num_tasks_)
      throw DimensionError("balancer: task count mismatch");
    BalanceResult out;
    out.log_weights.assign(num_tasks_, 1.0);
    switch (s_.kind) {
      case BalancerKind::EqualWeight:
        break;
      case BalancerKind::Uw:
        apply_uw(raw, losses, out);
        break;
      case BalancerKind::GradNorm:
        apply_gradnorm(raw, losses, out);
        break;
      case BalancerKind::PcGrad:
        if (num_tasks_ >= 2) apply_pcgrad(raw, rng);
        break;
      case BalancerKind::CaGrad:
        if (num_tasks_ >= 2) apply_cagrad(raw, out);
        break;
    }
    out.grads = std::move(raw);
    return out;
  }

 private:
  void scale_task(TaskGradients& g, std::size_t k, double w) const {
    for (std::size_t p = 0; p < g.grads[k].size(); ++p)
      if (g.has(k, p))
        for (std::size_t i = 0; i < g.grads[k][p].size(); ++i) g.grads[k][p][i] *= w;
  }

  void apply_uw(TaskGradients& raw, const std::vector<double>& losses, BalanceResult& out) {
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      const double w = std::exp(-uw_s_[k]);
      out.log_weights[k] = w;
      scale_task(raw, k, w);
    }
    // d total / d s_k = 1 - exp(-s_k) L_k; s follows its own optimizer bank
    Tensor ds({num_tasks_});
    for (std::size_t k = 0; k < num_tasks_; ++k) ds[k] = 1.0 - out.log_weights[k] * losses[k];
    TaskGradients tg;
    tg.grads = {{std::move(ds)}};
    std::vector<Tensor> params = {std::move(uw_s_)};
    uw_optimizer_->step(params, tg);
    uw_s_ = std::move(params[0]);
  }

  void apply_gradnorm(TaskGradients& raw, const std::vector<double>& losses, BalanceResult& out) {
    if (initial_losses_.empty()) {
      initial_losses_ = losses;
      for (double& v : initial_losses_) v = std::max(v, 1e-12);
    }
    std::vector<double> grad_norm(num_tasks_, 0.0);
    for (std::size_t k = 0; k < num_tasks_; ++k)
      grad_norm[k] = norm(raw.grads[k][last_shared_weight_]);

    // apply the current weights to this step's gradients
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      out.log_weights[k] = gradnorm_w_[k];
      scale_task(raw, k, gradnorm_w_[k]);
    }

    // one gradient step on sum_k | w_k n_k - Gbar r_k^alpha |, target constant
    double gbar = 0.0, rbar = 0.0;
    std::vector<double> ltilde(num_tasks_, 0.0);
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      gbar += gradnorm_w_[k] * grad_norm[k];
      ltilde[k] = losses[k] / initial_losses_[k];
      rbar += ltilde[k];
    }
    gbar /= static_cast<double>(num_tasks_);
    rbar = std::max(rbar / static_cast<double>(num_tasks_), 1e-12);
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      const double target = gbar * std::pow(ltilde[k] / rbar, s_.gradnorm_alpha);
      const double diff = gradnorm_w_[k] * grad_norm[k] - target;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      gradnorm_w_[k] -= s_.gradnorm_lr * sign * grad_norm[k];
      gradnorm_w_[k] = std::max(gradnorm_w_[k], 1e-3);
    }
    double total = 0.0;
    for (double w : gradnorm_w_) total += w;
    for (double& w : gradnorm_w_) w *= static_cast<double>(num_tasks_) / total;
  }

  void apply_pcgrad(TaskGradients& raw, Rng& rng) {
    std::vector<std::vector<double>> flat(num_tasks_);
    for (std::size_t k = 0; k < num_tasks_; ++k) flat[k] = flatten_shared(raw.grads[k], meta_);
    const auto pc = pcgrad_project(flat, rng);
    for (std::size_t k = 0; k < num_tasks_; ++k) scatter_shared(raw.grads[k], meta_, pc[k]);
  }

  void apply_cagrad(TaskGradients& raw, BalanceResult& out) {
    const double kf = static_cast<double>(num_tasks_);
    std::vector<std::vector<double>> flat(num_tasks_);
    for (std::size_t k = 0; k < num_tasks_; ++k) flat[k] = flatten_shared(raw.grads[k], meta_);
    std::vector<double> coef(num_tasks_, 1.0 / kf);
    if (s_.cagrad_c > 0.0) {
      const auto sol = cagrad_solve(flat, s_.cagrad_c, s_.cagrad_iters, s_.cagrad_step);
      out.log_weights = sol.w;
      out.solver_converged = sol.converged;
      const double gw = std::max(sol.gw_norm, 1e-300);
      for (std::size_t k = 0; k < num_tasks_; ++k)
        coef[k] = (1.0 + std::sqrt(sol.phi) / gw * sol.w[k]) / kf;
    } else {
      // phi = 0: every w gives the mean-gradient direction
      out.log_weights.assign(num_tasks_, 1.0 / kf);
    }
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      for (std::size_t i = 0; i < flat[k].size(); ++i) flat[k][i] *= coef[k];
      scatter_shared(raw.grads[k], meta_, flat[k]);
    }
  }

  BalancerSettings s_;
  std::vector<ParamMeta> meta_;
  std::size_t num_tasks_ = 0;
  std::size_t last_shared_weight_ = 0;

  Tensor uw_s_;
  std::unique_ptr<Optimizer> uw_optimizer_;
  std::vector<double> gradnorm_w_;
  std::vector<double> initial_losses_;
};

}  // namespace mtlopt
