#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "macc/exact.hpp"
#include "macc/linalg.hpp"
#include "macc/rng.hpp"

namespace macc::consensus {

/// Row-stochastic mixing weights applied to per-agent parameter vectors.
class ConsensusMatrix {
 public:
  explicit ConsensusMatrix(Matrix weights);

  static ConsensusMatrix uniform(int n);
  static ConsensusMatrix identity(int n);
  /// Pairwise gossip: agents i and j average, everyone else keeps their own.
  static ConsensusMatrix gossip_pair(int n, int i, int j);

  int n() const { return weights_.rows(); }
  const Matrix& weights() const { return weights_; }
  bool doubly_stochastic(double tol = 1e-12) const;

 private:
  Matrix weights_;
};

/// out^i = sum_j c(i,j) in^j. All agent vectors must share a dimension.
std::vector<Vec> apply_consensus(const std::vector<Vec>& params, const ConsensusMatrix& c);

struct Disagreement {
  Vec mean;
  double norm = 0.0;  // Euclidean norm of the stacked deviations from the mean
};
Disagreement disagreement(const std::vector<Vec>& params);

enum class ScheduleKind { kPowerDecay, kConstant, kAdaptiveMoment };

/// Stepsize schedule beta_t. Power decay: scale * (1+t)^(-exponent).
struct StepSchedule {
  ScheduleKind kind = ScheduleKind::kPowerDecay;
  double exponent = 0.65;
  double scale = 1.0;

  static StepSchedule power(double exponent, double scale = 1.0) {
    return {ScheduleKind::kPowerDecay, exponent, scale};
  }
  static StepSchedule constant(double value) { return {ScheduleKind::kConstant, 0.0, value}; }
  static StepSchedule adaptive_moment(double lr) { return {ScheduleKind::kAdaptiveMoment, 0.0, lr}; }

  double beta(long long t) const {
    switch (kind) {
      case ScheduleKind::kPowerDecay:
        return scale * std::pow(1.0 + static_cast<double>(t), -exponent);
      case ScheduleKind::kConstant:
      case ScheduleKind::kAdaptiveMoment:
        return scale;
    }
    return scale;
  }

  // Decided analytically from the exponent: sum beta = inf iff p <= 1,
  // sum beta^2 < inf iff p > 1/2.
  bool sums_diverge() const { return kind == ScheduleKind::kPowerDecay && exponent <= 1.0; }
  bool square_sums_converge() const { return kind == ScheduleKind::kPowerDecay && exponent > 0.5; }
};

/// Draws consensus matrices from the configured process.
class ConsensusSampler {
 public:
  virtual ~ConsensusSampler() = default;
  virtual ConsensusMatrix draw(Rng& rng) = 0;
  virtual int n() const = 0;
};

class FixedMatrixSampler : public ConsensusSampler {
 public:
  explicit FixedMatrixSampler(ConsensusMatrix m) : m_(std::move(m)) {}
  ConsensusMatrix draw(Rng&) override { return m_; }
  int n() const override { return m_.n(); }

 private:
  ConsensusMatrix m_;
};

class RandomPairGossipSampler : public ConsensusSampler {
 public:
  explicit RandomPairGossipSampler(int n) : n_(n) {}
  ConsensusMatrix draw(Rng& rng) override {
    int i = rng.uniform_int(n_);
    int j = rng.uniform_int(n_ - 1);
    if (j >= i) ++j;
    return ConsensusMatrix::gossip_pair(n_, i, j);
  }
  int n() const override { return n_; }

 private:
  int n_;
};

struct AssumptionCheck {
  bool pass = false;
  std::string name;
  std::string detail;
};

struct AssumptionReport {
  // assumption 2: full-column-rank features
  AssumptionCheck features_full_rank;
  // assumption 3: stepsize conditions
  AssumptionCheck stepsizes;
  // assumption 4(i): row stochastic per sample, column stochastic in mean
  AssumptionCheck stochasticity;
  // assumption 4(ii): spectral contraction on the disagreement subspace
  AssumptionCheck spectral;
  double spectral_quantity = 0.0;

  bool all_pass() const {
    return features_full_rank.pass && stepsizes.pass && stochasticity.pass && spectral.pass;
  }
  std::string summary() const;
};

struct ValidateOptions {
  int n_samples = 10000;
  double column_tolerance = 1e-3;  // statistical, on the empirical mean matrix
  double row_tolerance = 1e-9;     // per sample
  double spectral_margin = 1e-6;   // require spectral quantity < 1 - margin
  std::uint64_t seed = 0;
};

/// Validates the convergence prerequisites: per-sample row stochasticity and
/// mean column stochasticity (assumption 4(i)), spectral norm of
/// E[C^T (I - 11^T/N) C] strictly below one (assumption 4(ii)), stepsize
/// exponents (assumption 3, decided analytically), and full-column-rank
/// features (assumption 2).
AssumptionReport validate_assumptions(ConsensusSampler& sampler, const StepSchedule& critic_schedule,
                                      const StepSchedule& actor_schedule,
                                      const exact::FeatureMap* features,
                                      const ValidateOptions& opts = {});

}  // namespace macc::consensus
