#pragma once

// Evaluation metrics: per-task RMSE, task-normalized RMSE, their average, and
// the signed mean relative improvement against a baseline report.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

inline double rmse(const Tensor& pred, const Tensor& target) {
  detail::require_same_shape(pred, target, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

// Root-mean-square of the values themselves; the "predict zero" reference.
inline double root_mean_square(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
  return std::sqrt(s / static_cast<double>(t.size()));
}

struct EvalReport {
  std::vector<double> task_rmse;
  std::vector<double> normalizer;
  std::vector<double> normalized;  // task_rmse / normalizer
  double average = 0.0;            // arithmetic mean of normalized values
};

inline EvalReport make_report(std::vector<double> task_rmse, std::vector<double> normalizer) {
  if (task_rmse.size() != normalizer.size())
    throw DimensionError("report: one normalizer per task required");
  EvalReport r;
  r.task_rmse = std::move(task_rmse);
  r.normalizer = std::move(normalizer);
  r.normalized.resize(r.task_rmse.size());
  for (std::size_t k = 0; k < r.task_rmse.size(); ++k) {
    if (!(r.normalizer[k] > 0.0)) throw ConfigError("report: normalizer must be positive");
    r.normalized[k] = r.task_rmse[k] / r.normalizer[k];
    r.average += r.normalized[k];
  }
  r.average /= static_cast<double>(r.normalized.size());
  return r;
}

struct MetricValue {
  std::string name;
  double value = 0.0;
  bool higher_better = false;
};

// delta_p = (1/P) * sum_p (-1)^{I_p} (M_method - M_baseline) / M_baseline,
// I_p = 0 when higher is better. Positive means the method improves on the
// baseline on average.
inline double delta_p(const std::vector<MetricValue>& method,
                      const std::vector<MetricValue>& baseline) {
  if (method.size() != baseline.size() || method.empty())
    throw ParameterError("delta_p: metric sets differ in size");
  double acc = 0.0;
  for (std::size_t i = 0; i < method.size(); ++i) {
    if (method[i].name != baseline[i].name || method[i].higher_better != baseline[i].higher_better)
      throw ParameterError("delta_p: metric sets do not match at '" + method[i].name + "'");
    if (baseline[i].value == 0.0) throw ParameterError("delta_p: zero baseline value");
    const double rel = (method[i].value - baseline[i].value) / baseline[i].value;
    acc += method[i].higher_better ? rel : -rel;
  }
  return acc / static_cast<double>(method.size());
}

}  // namespace mtlopt
