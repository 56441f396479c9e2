#pragma once

// Two-task synthetic regression benchmark. Targets are
//   y^k = W1^k x + W2^k x^2 + W3 x^3 + eps
// with the squares/cubes taken elementwise on the input vector, W1^A/W2^A
// drawn from N(1,1), W1^B/W2^B and the shared W3 from N(10,10), and fresh
// eps ~ N(0, noise_std) per sample per task. The ten-times-larger task-B
// coefficients are what makes task B dominate training.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/model.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

struct SyntheticSpec {
  std::size_t d_in = 250;
  std::size_t d_out = 100;
  double noise_std = 0.1;
  // Fixed once sampled; tasks are {A, B}.
  Tensor w1a, w2a, w1b, w2b, w3;  // each d_out x d_in
};

// Samples the coefficient matrices. Consumes the rng in a fixed order.
inline SyntheticSpec make_synthetic_spec(Rng& rng, std::size_t d_in = 250,
                                         std::size_t d_out = 100, double noise_std = 0.1) {
  SyntheticSpec s;
  s.d_in = d_in;
  s.d_out = d_out;
  s.noise_std = noise_std;
  const Shape shape{d_out, d_in};
  s.w1a = gaussian_tensor(rng, 1.0, 1.0, shape);
  s.w2a = gaussian_tensor(rng, 1.0, 1.0, shape);
  s.w1b = gaussian_tensor(rng, 10.0, 10.0, shape);
  s.w2b = gaussian_tensor(rng, 10.0, 10.0, shape);
  s.w3 = gaussian_tensor(rng, 10.0, 10.0, shape);
  return s;
}

struct Dataset {
  Tensor x;                // n x d_in
  std::vector<Tensor> y;   // per task, n x d_out

  std::size_t size() const { return x.rows(); }
  std::size_t num_tasks() const { return y.size(); }

  // Contiguous row slice with wrap-around, used for minibatch cycling.
  Dataset slice(std::size_t start, std::size_t count) const {
    const std::size_t n = size();
    Dataset out;
    out.x = Tensor({count, x.shape()[1]});
    out.y.reserve(y.size());
    for (const Tensor& t : y) out.y.push_back(Tensor({count, t.shape()[1]}));
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t src = (start + r) % n;
      for (std::size_t c = 0; c < x.shape()[1]; ++c) out.x.at(r, c) = x.at(src, c);
      for (std::size_t k = 0; k < y.size(); ++k)
        for (std::size_t c = 0; c < y[k].shape()[1]; ++c) out.y[k].at(r, c) = y[k].at(src, c);
    }
    return out;
  }
};

namespace detail {

// y += (x^power elementwise) W^T
inline void accumulate_power_term(Tensor& y, const Tensor& x, const Tensor& w, int power) {
  Tensor xp(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i];
    double r = v;
    for (int p = 1; p < power; ++p) r *= v;
    xp[i] = r;
  }
  add_inplace(y, matmul_nt(xp, w));
}

}  // namespace detail

// Noise-free targets W1^k x + W2^k x^2 + W3 x^3 for a batch of inputs.
inline Tensor synthetic_targets(const SyntheticSpec& spec, const Tensor& x, std::size_t task) {
  if (spec.w1a.empty()) throw ConfigError("synthetic_targets: spec has no coefficient matrices");
  if (task > 1) throw LookupError("synthetic_targets: tasks are {A, B}");
  const Tensor& w1 = task == 0 ? spec.w1a : spec.w1b;
  const Tensor& w2 = task == 0 ? spec.w2a : spec.w2b;
  Tensor y({x.shape()[0], spec.d_out});
  add_inplace(y, matmul_nt(x, w1));
  detail::accumulate_power_term(y, x, w2, 2);
  detail::accumulate_power_term(y, x, spec.w3, 3);
  return y;
}

// Generates n samples. x entries are i.i.d. N(0,1); noise is drawn per sample
// per task. Deterministic given the rng state.
inline Dataset generate(const SyntheticSpec& spec, Rng& rng, std::size_t n,
                        bool clean_targets = false) {
  if (n < 1) throw ParameterError("generate: need at least one sample");
  Dataset d;
  d.x = gaussian_tensor(rng, 0.0, 1.0, {n, spec.d_in});
  for (std::size_t k = 0; k < 2; ++k) {
    Tensor y = synthetic_targets(spec, d.x, k);
    if (!clean_targets && spec.noise_std > 0.0) {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += rng.gaussian(0.0, spec.noise_std);
    }
    d.y.push_back(std::move(y));
  }
  return d;
}

}  // namespace mtlopt
