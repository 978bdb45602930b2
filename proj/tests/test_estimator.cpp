#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "scalelab/estimator.hpp"
#include "scalelab/rng.hpp"

using namespace scalelab;

namespace {

FeedbackSample sample(double u, double c) {
  FeedbackSample s;
  s.workload = {u};
  s.nodes = 1;
  s.cpu = c;
  return s;
}

}  // namespace

TEST_CASE("init_mle recovers a noiseless in-class mean model") {
  std::vector<FeedbackSample> samples;
  for (int i = 0; i < 200; ++i) {
    const double u = 10.0 + i;
    samples.push_back(sample(u, 0.1 + 0.002 * u));
  }
  CpuEstimator est = init_mle(samples);
  REQUIRE(est.w_b == Catch::Approx(0.1).margin(1e-6));
  REQUIRE(est.w_k[0] == Catch::Approx(0.002).margin(1e-6));
  REQUIRE(est.sigma_b == Catch::Approx(kSigmaFloor));
  REQUIRE(est.sigma_k[0] == 0.0);
}

TEST_CASE("init_mle recovers heteroscedastic noise within 10%") {
  // c = 0.1 + 0.002 u + eps, sd(eps) = 0.01 + 0.0005 u
  Rng rng(4242);
  std::vector<FeedbackSample> samples;
  for (int i = 0; i < 50000; ++i) {
    const double u = rng.uniform(20.0, 220.0);
    const double sd = 0.01 + 0.0005 * u;
    samples.push_back(sample(u, 0.1 + 0.002 * u + sd * rng.normal()));
  }
  CpuEstimator est = init_mle(samples);
  REQUIRE(est.w_b == Catch::Approx(0.1).margin(5e-3));
  REQUIRE(est.w_k[0] == Catch::Approx(0.002).epsilon(0.05));
  REQUIRE(est.sigma_b == Catch::Approx(0.01).epsilon(0.10));
  REQUIRE(est.sigma_k[0] == Catch::Approx(0.0005).epsilon(0.10));
}

TEST_CASE("init_mle with all-zero workloads fits the intercept only") {
  std::vector<FeedbackSample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back(sample(0.0, 0.2 + 0.01 * (i % 3)));
  CpuEstimator est = init_mle(samples);
  double mean = 0.0;
  for (const auto& s : samples) mean += s.cpu;
  mean /= static_cast<double>(samples.size());
  REQUIRE(est.w_b == Catch::Approx(mean).margin(1e-9));
  REQUIRE(est.w_k[0] == 0.0);
}

TEST_CASE("init_mle requires enough samples") {
  std::vector<FeedbackSample> samples = {sample(1.0, 0.1), sample(2.0, 0.2)};
  REQUIRE_THROWS_AS(init_mle(samples), InvariantError);
}

TEST_CASE("predict_mean and predict_std follow the linear forms") {
  CpuEstimator est;
  est.w_b = 0.1;
  est.w_k = {0.001};
  est.sigma_b = 0.02;
  est.sigma_k = {0.0001};

  SECTION("zero workload gives the intercepts") {
    REQUIRE(predict_mean(est, {0.0}, 3) == 0.1);
    REQUIRE(predict_std(est, {0.0}, 3) == 0.02);
  }
  SECTION("doubling x halves the workload term") {
    const double m1 = predict_mean(est, {200.0}, 1) - est.w_b;
    const double m2 = predict_mean(est, {200.0}, 2) - est.w_b;
    REQUIRE(m1 == Catch::Approx(2.0 * m2));
  }
  SECTION("worked examples") {
    REQUIRE(predict_mean(est, {200.0}, 2) == Catch::Approx(0.2));
    REQUIRE(predict_std(est, {100.0}, 1) == Catch::Approx(0.03));
  }
  SECTION("x = 0 is rejected") {
    REQUIRE_THROWS_AS(predict_mean(est, {1.0}, 0), InvariantError);
  }
  SECTION("std is monotone in workload") {
    REQUIRE(predict_std(est, {50.0}, 1) <= predict_std(est, {60.0}, 1));
  }
}

TEST_CASE("upper_quantile adds the normal quantile of the std") {
  CpuEstimator est;
  est.w_b = 0.3;
  est.w_k = {0.0};
  est.sigma_b = 0.05;
  est.sigma_k = {0.0};
  REQUIRE(upper_quantile(est, {0.0}, 1, 0.5) == Catch::Approx(0.3));
  REQUIRE(upper_quantile(est, {0.0}, 1, 0.9) == Catch::Approx(0.3 + 1.2816 * 0.05).margin(1e-4));
  REQUIRE(upper_quantile(est, {0.0}, 1, 0.95) > upper_quantile(est, {0.0}, 1, 0.9));
}

TEST_CASE("olr_update matches the one-step hand example") {
  CpuEstimator est;
  est.w_b = 0.0;
  est.w_k = {0.1};
  est.sigma_b = 0.0;
  est.sigma_k = {0.0};

  FeedbackSample s;
  s.workload = {2.0};
  s.nodes = 1;
  s.cpu = 0.3;  // chat = 0.2, e = -0.1
  CpuEstimator out = olr_update(est, {s}, 2e-4);
  REQUIRE(out.w_k[0] == Catch::Approx(0.10004).margin(1e-12));
  REQUIRE(out.w_b == est.w_b);
  REQUIRE(out.sigma_b == est.sigma_b);
}

TEST_CASE("olr_update is a fixed point on zero error and frozen at eta=0") {
  CpuEstimator est;
  est.w_b = 0.05;
  est.w_k = {0.002, 0.003};
  est.sigma_b = 0.01;
  est.sigma_k = {0.0, 0.0};

  FeedbackSample s;
  s.workload = {100.0, 50.0};
  s.nodes = 2;
  s.cpu = predict_mean(est, s.workload, s.nodes);  // zero error
  CpuEstimator out = olr_update(est, {s, s, s}, 1e-3);
  REQUIRE(out.w_k[0] == est.w_k[0]);
  REQUIRE(out.w_k[1] == est.w_k[1]);

  s.cpu += 0.2;  // now an error, but eta = 0 freezes everything
  CpuEstimator frozen = olr_update(est, {s}, 0.0);
  REQUIRE(frozen.w_k[0] == est.w_k[0]);
}

TEST_CASE("olr_update keeps slopes non-negative") {
  CpuEstimator est;
  est.w_b = 0.0;
  est.w_k = {0.0001};
  est.sigma_b = 0.0;
  est.sigma_k = {0.0};
  FeedbackSample s;
  s.workload = {100.0};
  s.nodes = 1;
  s.cpu = 0.0;  // chat positive -> e > 0 -> update pushes w_k down
  CpuEstimator out = olr_update(est, {s, s, s}, 1e-2);
  REQUIRE(out.w_k[0] >= 0.0);
}

TEST_CASE("online updates track a drifted model better than a frozen one") {
  // Ground truth slope drifts up 20%; the online learner should achieve a
  // lower mean one-step-ahead squared error than the frozen estimator.
  CpuEstimator init;
  init.w_b = 0.1;
  init.w_k = {0.05};
  init.sigma_b = 0.0;
  init.sigma_k = {0.0};

  Rng rng(99);
  CpuEstimator online = init;
  double se_online = 0.0, se_frozen = 0.0;
  for (int t = 0; t < 4000; ++t) {
    const double true_slope = 0.05 * (1.0 + 0.2 * std::min(1.0, t / 500.0));
    FeedbackSample s;
    s.minute = t;
    s.workload = {rng.uniform(2.0, 8.0)};
    s.nodes = 1;
    s.cpu = 0.1 + true_slope * s.workload[0] + 0.002 * rng.normal();

    const double e_on = predict_mean(online, s.workload, s.nodes) - s.cpu;
    const double e_fr = predict_mean(init, s.workload, s.nodes) - s.cpu;
    se_online += e_on * e_on;
    se_frozen += e_fr * e_fr;
    online = olr_update(online, {s}, 2e-3);
  }
  REQUIRE(se_online < se_frozen);
}

TEST_CASE("replaying a batch keeps reducing squared loss for small eta") {
  Rng rng(7);
  std::vector<FeedbackSample> batch;
  for (int i = 0; i < 50; ++i) {
    FeedbackSample s;
    s.workload = {rng.uniform(1.0, 9.0)};
    s.nodes = 1;
    s.cpu = 0.2 + 0.04 * s.workload[0];
    batch.push_back(s);
  }
  CpuEstimator est;
  est.w_b = 0.2;
  est.w_k = {0.01};
  est.sigma_b = 0.0;
  est.sigma_k = {0.0};

  auto loss = [&](const CpuEstimator& e) {
    double acc = 0.0;
    for (const auto& s : batch) {
      const double err = predict_mean(e, s.workload, s.nodes) - s.cpu;
      acc += err * err;
    }
    return acc;
  };

  double prev = loss(est);
  for (int rep = 0; rep < 10; ++rep) {
    est = olr_update(est, batch, 1e-3);
    const double cur = loss(est);
    REQUIRE(cur <= prev + 1e-12);
    prev = cur;
  }
}
