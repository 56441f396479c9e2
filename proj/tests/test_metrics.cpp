#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mtlopt/metrics.hpp"

using namespace mtlopt;

TEST_CASE("rmse basics", "[metrics]") {
  const Tensor pred({2, 2}, {1, 2, 3, 4});
  CHECK(rmse(pred, pred) == 0.0);

  // constant-zero predictor: rmse equals the root-mean-square of the targets
  const Tensor zero({2, 2});
  const Tensor target({2, 2}, {1, -1, 2, -2});
  CHECK(rmse(zero, target) == Catch::Approx(root_mean_square(target)).epsilon(1e-15));
}

TEST_CASE("rmse cross-checked against a two-pass computation", "[metrics]") {
  Rng rng(5);
  const Tensor pred = gaussian_tensor(rng, 0.0, 2.0, {7, 5});
  const Tensor target = gaussian_tensor(rng, 1.0, 3.0, {7, 5});
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) ss += (pred[i] - target[i]) * (pred[i] - target[i]);
  const double want = std::sqrt(ss / pred.size());
  CHECK(rmse(pred, target) == Catch::Approx(want).epsilon(1e-14));
}

TEST_CASE("task-normalized rmse", "[metrics]") {
  const EvalReport r = make_report({0.6, 0.2}, {2.0, 0.5});
  CHECK(r.normalized[0] == Catch::Approx(0.3).epsilon(1e-15));
  CHECK(r.normalized[1] == Catch::Approx(0.4).epsilon(1e-15));
  CHECK(r.average == Catch::Approx(0.35).epsilon(1e-15));

  // self-normalization: value / itself = 1
  const EvalReport self = make_report({1.7}, {1.7});
  CHECK(self.normalized[0] == 1.0);

  CHECK_THROWS_AS(make_report({1.0}, {0.0}), ConfigError);
  CHECK_THROWS_AS(make_report({1.0, 2.0}, {1.0}), DimensionError);
}

TEST_CASE("normalized rmse is scale covariant", "[metrics]") {
  Rng rng(9);
  const Tensor pred = gaussian_tensor(rng, 0.0, 1.0, {6, 3});
  const Tensor target = gaussian_tensor(rng, 0.0, 1.0, {6, 3});
  const double n1 = rmse(pred, target) / root_mean_square(target);
  const double c = 37.5;
  const double n2 = rmse(scale(pred, c), scale(target, c)) / root_mean_square(scale(target, c));
  CHECK(n1 == Catch::Approx(n2).epsilon(1e-12));
}

TEST_CASE("delta_p formula", "[metrics]") {
  SECTION("identical reports give exactly zero") {
    const std::vector<MetricValue> m = {{"a", 0.5, false}, {"b", 2.0, true}};
    CHECK(delta_p(m, m) == 0.0);
  }
  SECTION("single lower-better metric halving gives +50%") {
    const std::vector<MetricValue> method = {{"err", 0.1, false}};
    const std::vector<MetricValue> baseline = {{"err", 0.2, false}};
    CHECK(delta_p(method, baseline) == Catch::Approx(0.5).epsilon(1e-15));
  }
  SECTION("a 10% gain and a 10% loss cancel") {
    const std::vector<MetricValue> method = {{"acc", 1.1, true}, {"err", 1.1, false}};
    const std::vector<MetricValue> baseline = {{"acc", 1.0, true}, {"err", 1.0, false}};
    CHECK(delta_p(method, baseline) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("mismatched metric sets are rejected") {
    const std::vector<MetricValue> m1 = {{"a", 1.0, false}};
    const std::vector<MetricValue> m2 = {{"b", 1.0, false}};
    const std::vector<MetricValue> m3 = {{"a", 1.0, true}};
    const std::vector<MetricValue> z = {{"a", 0.0, false}};
    CHECK_THROWS_AS(delta_p(m1, m2), ParameterError);
    CHECK_THROWS_AS(delta_p(m1, m3), ParameterError);
    CHECK_THROWS_AS(delta_p(m1, z), ParameterError);
  }
}
