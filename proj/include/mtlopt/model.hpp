#pragma once

// Shared-bottom MLP with one affine head per task. The shared stack is a
// sequence of affine layers with ELU after each of them; heads are plain
// affine maps on the last shared activation. Backpropagation is done by hand,
// one sweep per task over cached forward activations, so every parameter gets
// a separate gradient from every task loss.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

// Task id helper: tasks print as A, B, C ... in logs and file headers.
inline std::string task_name(std::size_t k) {
  if (k < 26) return std::string(1, static_cast<char>('A' + k));
  return "T" + std::to_string(k);
}

struct ParamMeta {
  std::string name;
  // 1-based shared layer ordinal; 0 for task-head parameters.
  std::size_t layer = 0;
  // Owning task for head parameters; -1 for shared parameters.
  int task = -1;
  bool shared() const { return task < 0; }
};

// Per-task gradients aligned with the model's parameter list. grads[k][p] is
// empty when task k's loss does not touch parameter p (another task's head);
// those entries are omitted rather than stored as zeros.
struct TaskGradients {
  std::vector<std::vector<Tensor>> grads;

  std::size_t num_tasks() const { return grads.size(); }
  bool has(std::size_t k, std::size_t p) const { return !grads[k][p].empty(); }
};

class MtlModel {
 public:
  // shared_widths are the output widths of the shared affine layers, e.g.
  // {100, 100, 100, 100} for the 4-layer stack.
  MtlModel(std::size_t d_in, std::vector<std::size_t> shared_widths, std::size_t d_out,
           std::size_t num_tasks, double elu_alpha = 1.0)
      : d_in_(d_in), d_out_(d_out), num_tasks_(num_tasks), alpha_(elu_alpha) {
    if (shared_widths.empty()) throw ConfigError("model: at least one shared layer required");
    if (num_tasks == 0) throw ConfigError("model: at least one task required");
    std::size_t in = d_in;
    for (std::size_t l = 0; l < shared_widths.size(); ++l) {
      const std::size_t out = shared_widths[l];
      params_.push_back(Tensor({in, out}));
      meta_.push_back({"shared." + std::to_string(l + 1) + ".w", l + 1, -1});
      params_.push_back(Tensor({out}));
      meta_.push_back({"shared." + std::to_string(l + 1) + ".b", l + 1, -1});
      in = out;
    }
    last_width_ = in;
    for (std::size_t k = 0; k < num_tasks; ++k) {
      params_.push_back(Tensor({last_width_, d_out}));
      meta_.push_back({"head." + task_name(k) + ".w", 0, static_cast<int>(k)});
      params_.push_back(Tensor({d_out}));
      meta_.push_back({"head." + task_name(k) + ".b", 0, static_cast<int>(k)});
    }
    num_layers_ = shared_widths.size();
    shared_param_count_ = 0;
    for (std::size_t p = 0; p < params_.size(); ++p)
      if (meta_[p].shared()) shared_param_count_ += params_[p].size();
  }

  // Fan-based uniform init for weights, zero biases.
  void init_params(Rng& rng) {
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Tensor& t = params_[p];
      if (t.shape().size() == 2) {
        const double bound = std::sqrt(6.0 / static_cast<double>(t.shape()[0] + t.shape()[1]));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
      } else {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
      }
    }
  }

  std::size_t d_in() const { return d_in_; }
  std::size_t d_out() const { return d_out_; }
  std::size_t num_tasks() const { return num_tasks_; }
  std::size_t num_layers() const { return num_layers_; }
  double elu_alpha() const { return alpha_; }
  // Number of shared parameter scalars (the N of the state-size accounting).
  std::size_t shared_param_count() const { return shared_param_count_; }

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<ParamMeta>& meta() const { return meta_; }

  std::size_t weight_index(std::size_t layer) const { return (layer - 1) * 2; }
  std::size_t bias_index(std::size_t layer) const { return (layer - 1) * 2 + 1; }
  std::size_t head_weight_index(std::size_t task) const { return num_layers_ * 2 + task * 2; }
  std::size_t head_bias_index(std::size_t task) const { return num_layers_ * 2 + task * 2 + 1; }

  struct Forward {
    std::vector<Tensor> z;  // pre-activations, one per shared layer
    std::vector<Tensor> a;  // a[0] = x, a[l] = ELU(z[l])
    std::vector<Tensor> y;  // per-task predictions
  };

  Forward forward(const Tensor& x) const {
    detail::require_matrix(x, "forward");
    if (x.shape()[1] != d_in_)
      throw DimensionError("forward: input width " + std::to_string(x.shape()[1]) +
                           ", model expects " + std::to_string(d_in_));
    Forward f;
    f.a.reserve(num_layers_ + 1);
    f.z.reserve(num_layers_);
    f.a.push_back(x);
    for (std::size_t l = 1; l <= num_layers_; ++l) {
      Tensor z = matmul(f.a.back(), params_[weight_index(l)]);
      add_rowvec_inplace(z, params_[bias_index(l)]);
      f.a.push_back(elu(z, alpha_));
      f.z.push_back(std::move(z));
    }
    f.y.reserve(num_tasks_);
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      Tensor y = matmul(f.a.back(), params_[head_weight_index(k)]);
      add_rowvec_inplace(y, params_[head_bias_index(k)]);
      if (!all_finite(y))
        throw NumericError("forward: non-finite prediction for task " + task_name(k));
      f.y.push_back(std::move(y));
    }
    return f;
  }

  // Mean squared error over batch and output dimensions.
  static double mse(const Tensor& pred, const Tensor& target) {
    detail::require_same_shape(pred, target, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - target[i];
      s += d * d;
    }
    return s / static_cast<double>(pred.size());
  }

  // Per-task losses and per-task gradients from a cached forward pass.
  std::pair<std::vector<double>, TaskGradients> backward_per_task(
      const Forward& f, const std::vector<Tensor>& targets) const {
    if (targets.size() != num_tasks_)
      throw DimensionError("backward: expected " + std::to_string(num_tasks_) + " target tensors");
    std::vector<double> losses(num_tasks_, 0.0);
    TaskGradients tg;
    tg.grads.assign(num_tasks_, std::vector<Tensor>(params_.size()));
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      detail::require_same_shape(f.y[k], targets[k], "backward targets");
      losses[k] = mse(f.y[k], targets[k]);
      if (!std::isfinite(losses[k]))
        throw NumericError("backward: non-finite loss for task " + task_name(k));

      // dL/dy for MSE with mean over batch*d_out entries
      Tensor delta(f.y[k].shape());
      const double inv = 2.0 / static_cast<double>(f.y[k].size());
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] = inv * (f.y[k][i] - targets[k][i]);

      auto& g = tg.grads[k];
      g[head_weight_index(k)] = matmul_tn(f.a.back(), delta);
      g[head_bias_index(k)] = colsum(delta);
      Tensor d = matmul_nt(delta, params_[head_weight_index(k)]);
      for (std::size_t l = num_layers_; l >= 1; --l) {
        // through the ELU at layer l
        const Tensor& z = f.z[l - 1];
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= elu_grad_scalar(z[i], alpha_);
        g[weight_index(l)] = matmul_tn(f.a[l - 1], d);
        g[bias_index(l)] = colsum(d);
        if (l > 1) d = matmul_nt(d, params_[weight_index(l)]);
      }
    }
    return {std::move(losses), std::move(tg)};
  }

 private:
  std::size_t d_in_ = 0;
  std::size_t d_out_ = 0;
  std::size_t num_tasks_ = 0;
  std::size_t num_layers_ = 0;
  std::size_t last_width_ = 0;
  std::size_t shared_param_count_ = 0;
  double alpha_ = 1.0;
  std::vector<Tensor> params_;
  std::vector<ParamMeta> meta_;
};

}  // namespace mtlopt
