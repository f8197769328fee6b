#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "macc/consensus.hpp"
#include "macc/envs.hpp"
#include "macc/exact.hpp"

using namespace macc;
using namespace macc::consensus;
using doctest::Approx;

TEST_CASE("apply_consensus: uniform matrix sets every agent to the mean") {
  auto c = ConsensusMatrix::uniform(3);
  std::vector<Vec> params = {{1.0, 2.0}, {3.0, 4.0}, {5.0, 9.0}};
  auto out = apply_consensus(params, c);
  for (int i = 0; i < 3; ++i) {
    CHECK(out[i][0] == Approx(3.0).epsilon(1e-12));
    CHECK(out[i][1] == Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("apply_consensus: gossip pair averages the pair, leaves the rest") {
  auto c = ConsensusMatrix::gossip_pair(3, 0, 2);
  std::vector<Vec> params = {{2.0}, {7.0}, {4.0}};
  auto out = apply_consensus(params, c);
  CHECK(out[0][0] == Approx(3.0));
  CHECK(out[1][0] == 7.0);
  CHECK(out[2][0] == Approx(3.0));
}

TEST_CASE("apply_consensus: identity changes nothing") {
  auto c = ConsensusMatrix::identity(2);
  std::vector<Vec> params = {{1.5, -2.0}, {0.25, 8.0}};
  CHECK(apply_consensus(params, c) == params);
}

TEST_CASE("apply_consensus: errors on bad shapes and bad matrices") {
  auto c = ConsensusMatrix::uniform(2);
  std::vector<Vec> mismatch = {{1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(apply_consensus(mismatch, c), std::invalid_argument);
  Matrix bad(2, 2, 0.3);  // rows sum to 0.6
  CHECK_THROWS_AS(ConsensusMatrix{bad}, std::invalid_argument);
}

TEST_CASE("mean preservation under doubly stochastic mixing") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + rng.uniform_int(5);
    std::vector<Vec> params(n, Vec(4));
    for (auto& p : params)
      for (double& x : p) x = rng.normal();
    auto before = disagreement(params).mean;
    int i = rng.uniform_int(n), j = rng.uniform_int(n - 1);
    if (j >= i) ++j;
    auto after = disagreement(apply_consensus(params, ConsensusMatrix::gossip_pair(n, i, j))).mean;
    for (std::size_t d = 0; d < before.size(); ++d)
      CHECK(std::fabs(after[d] - before[d]) <= 1e-12);
  }
}

TEST_CASE("disagreement: identical vectors have zero residual") {
  std::vector<Vec> params(4, Vec{1.0, 2.0, 3.0});
  CHECK(disagreement(params).norm == 0.0);
}

TEST_CASE("disagreement: worked two-agent example") {
  std::vector<Vec> params = {{1.0, 0.0}, {-1.0, 0.0}};
  auto d = disagreement(params);
  CHECK(d.mean[0] == 0.0);
  CHECK(d.mean[1] == 0.0);
  CHECK(d.norm == Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("disagreement vanishes after one uniform consensus step") {
  Rng rng(5);
  std::vector<Vec> params(6, Vec(3));
  for (auto& p : params)
    for (double& x : p) x = rng.normal();
  auto out = apply_consensus(params, ConsensusMatrix::uniform(6));
  CHECK(disagreement(out).norm <= 1e-12);
}

TEST_CASE("random-pair gossip never increases the disagreement norm") {
  Rng rng(11);
  int decreased = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    int n = 3 + rng.uniform_int(4);
    std::vector<Vec> params(n, Vec(2));
    for (auto& p : params)
      for (double& x : p) x = rng.normal();
    double before = disagreement(params).norm;
    int i = rng.uniform_int(n), j = rng.uniform_int(n - 1);
    if (j >= i) ++j;
    double after = disagreement(apply_consensus(params, ConsensusMatrix::gossip_pair(n, i, j))).norm;
    CHECK(after <= before + 1e-12);
    if (after < before - 1e-12) ++decreased;
  }
  // One-sided check: strict decreases dominate.
  CHECK(decreased > trials / 2);
}

TEST_CASE("repeated mixing under a contraction matrix drives disagreement below 1e-9") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + rng.uniform_int(5);
    // Strictly positive random row-stochastic matrix.
    Matrix w(n, n);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        w(i, j) = 0.05 + rng.uniform();
        sum += w(i, j);
      }
      double acc = 0.0;
      for (int j = 0; j < n - 1; ++j) {
        w(i, j) /= sum;
        acc += w(i, j);
      }
      w(i, n - 1) = 1.0 - acc;
    }
    ConsensusMatrix c(w);
    std::vector<Vec> params(n, Vec(3));
    for (auto& p : params)
      for (double& x : p) x = rng.normal();
    int steps = 0;
    while (disagreement(params).norm > 1e-9) {
      params = apply_consensus(params, c);
      REQUIRE(++steps < 10000);
    }
    CHECK(disagreement(params).norm <= 1e-9);
  }
}

TEST_CASE("schedule conditions decided analytically from the exponent") {
  auto ok = StepSchedule::power(0.65);
  CHECK(ok.sums_diverge());
  CHECK(ok.square_sums_converge());
  auto too_fast = StepSchedule::power(1.2);
  CHECK_FALSE(too_fast.sums_diverge());
  auto too_slow = StepSchedule::power(0.4);
  CHECK_FALSE(too_slow.square_sums_converge());
  CHECK(ok.beta(0) == Approx(1.0));
  CHECK(ok.beta(99) == Approx(std::pow(100.0, -0.65)));
}

TEST_CASE("validate_assumptions: uniform matrix has spectral quantity zero") {
  FixedMatrixSampler sampler(ConsensusMatrix::uniform(4));
  auto report = validate_assumptions(sampler, StepSchedule::power(0.65), StepSchedule::power(0.85),
                                     nullptr, {100, 1e-3, 1e-9, 1e-6, 0});
  CHECK(report.stochasticity.pass);
  CHECK(report.spectral.pass);
  CHECK(report.spectral_quantity <= 1e-12);
  CHECK(report.stepsizes.pass);
  CHECK(report.all_pass());
}

TEST_CASE("validate_assumptions: identity matrix fails the contraction condition") {
  FixedMatrixSampler sampler(ConsensusMatrix::identity(4));
  auto report = validate_assumptions(sampler, StepSchedule::power(0.65), StepSchedule::power(0.85),
                                     nullptr, {100, 1e-3, 1e-9, 1e-6, 0});
  CHECK_FALSE(report.spectral.pass);
  CHECK(report.spectral_quantity == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("validate_assumptions: stepsize pair (0.65, 0.85) passes, bad pairs fail") {
  FixedMatrixSampler sampler(ConsensusMatrix::uniform(3));
  ValidateOptions opts{100, 1e-3, 1e-9, 1e-6, 0};
  CHECK(validate_assumptions(sampler, StepSchedule::power(0.65), StepSchedule::power(0.85), nullptr, opts)
            .stepsizes.pass);
  // Actor must decay strictly faster than the critic.
  CHECK_FALSE(
      validate_assumptions(sampler, StepSchedule::power(0.85), StepSchedule::power(0.65), nullptr, opts)
          .stepsizes.pass);
  CHECK_FALSE(
      validate_assumptions(sampler, StepSchedule::power(0.3), StepSchedule::power(0.85), nullptr, opts)
          .stepsizes.pass);
}

TEST_CASE("validate_assumptions: rank-deficient features rejected citing assumption 2") {
  auto bundle = envs::CosineToy(3).build_repeated();
  auto features = exact::FeatureMap::cosine_concat(bundle.game, true);
  REQUIRE_FALSE(features.full_column_rank());
  FixedMatrixSampler sampler(ConsensusMatrix::uniform(3));
  auto report = validate_assumptions(sampler, StepSchedule::power(0.65), StepSchedule::power(0.85),
                                     &features, {100, 1e-3, 1e-9, 1e-6, 0});
  CHECK_FALSE(report.features_full_rank.pass);
  CHECK(report.features_full_rank.detail.find("assumption 2") != std::string::npos);
  CHECK_FALSE(report.all_pass());
}

TEST_CASE("validate_assumptions: random-pair gossip process contracts in the mean") {
  RandomPairGossipSampler sampler(5);
  auto report = validate_assumptions(sampler, StepSchedule::power(0.65), StepSchedule::power(0.85),
                                     nullptr, {10000, 1e-2, 1e-9, 1e-6, 42});
  CHECK(report.stochasticity.pass);
  CHECK(report.spectral.pass);
  CHECK(report.spectral_quantity < 1.0);
  CHECK(report.spectral_quantity > 0.0);
}
