#pragma once

// Self-contained random number generation: xoshiro256++ seeded through
// splitmix64, with Box-Muller for gaussians. No platform RNG is involved, so
// a seed reproduces the same sample sequence on every machine.

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "mtlopt/errors.hpp"

namespace mtlopt {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = detail::splitmix64(x);
  }

  std::uint64_t seed() const { return seed_; }

  // xoshiro256++
  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  double gaussian(double mean, double stddev) {
    if (stddev < 0.0) throw ParameterError("gaussian: stddev must be >= 0");
    double z;
    if (has_spare_) {
      has_spare_ = false;
      z = spare_;
    } else {
      const double u1 = 1.0 - next_unit();  // (0, 1], keeps log finite
      const double u2 = next_unit();
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double a = 2.0 * 3.14159265358979323846 * u2;
      z = r * std::cos(a);
      spare_ = r * std::sin(a);
      has_spare_ = true;
    }
    return mean + stddev * z;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream addressed by a fixed label. Derivation depends only on
  // the root seed, never on how much of this stream has been consumed, so
  // toggling one consumer cannot perturb another.
  Rng derive(std::string_view label) const {
    std::uint64_t x = seed_ ^ detail::fnv1a64(label);
    return Rng(detail::splitmix64(x));
  }

 private:
  std::uint64_t seed_ = 0;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mtlopt
