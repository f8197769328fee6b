#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "macc/consensus.hpp"
#include "macc/envs.hpp"
#include "macc/exact.hpp"
#include "macc/linalg.hpp"
#include "macc/rng.hpp"

namespace macc::linear_ac {

/// Environment surface for the linear trainer: enumerated states, a common
/// local action count, critic features over (state, joint action), actor
/// features per (agent, state), and an exact policy-value hook.
class LinearTrainEnv {
 public:
  virtual ~LinearTrainEnv() = default;
  virtual int n_agents() const = 0;
  virtual int n_actions() const = 0;
  virtual int n_states() const = 0;
  virtual double discount() const = 0;
  virtual int critic_feature_dim() const = 0;
  virtual int actor_feature_dim() const = 0;
  virtual int initial_state(Rng& rng) const = 0;
  /// Advances the world; fills per-agent rewards for the chosen actions.
  virtual int step(int state, const std::vector<int>& actions, Vec& rewards, Rng& rng) const = 0;
  virtual Vec critic_phi(int state, const std::vector<int>& actions) const = 0;
  virtual Vec actor_psi(int agent, int state) const = 0;
  /// Exact J of the product policy described by per-(agent, state) local
  /// action distributions.
  virtual double exact_value(const std::function<Vec(int agent, int state)>& probs) const = 0;
  /// True when each presentation is its own one-step episode: the TD target
  /// bootstraps a zero next value instead of chaining across presentations.
  virtual bool one_step_episodes() const { return false; }
};

/// The fixed-state dense-reward toy with values cos((i-1)/(N-1) pi): the
/// same state presented every step, reward shared across agents, actor
/// features (own value, 1). In episodic mode every presentation is a
/// one-step episode (terminal bootstrap); otherwise the state chain is a
/// self-loop and TD targets chain across steps.
class RepeatedCosineEnv : public LinearTrainEnv {
 public:
  explicit RepeatedCosineEnv(int n, bool one_step_episodes = false);
  int n_agents() const override { return toy_.n(); }
  int n_actions() const override { return 2; }
  int n_states() const override { return 1; }
  double discount() const override { return envs::CosineToy::kRepeatedDiscount; }
  int critic_feature_dim() const override { return toy_.n() * 3; }
  int actor_feature_dim() const override { return 2; }
  int initial_state(Rng&) const override { return 0; }
  int step(int state, const std::vector<int>& actions, Vec& rewards, Rng&) const override;
  Vec critic_phi(int state, const std::vector<int>& actions) const override;
  Vec actor_psi(int agent, int state) const override;
  double exact_value(const std::function<Vec(int agent, int state)>& probs) const override;
  bool one_step_episodes() const override { return one_step_; }
  const envs::CosineToy& toy() const { return toy_; }

 private:
  envs::CosineToy toy_;
  bool one_step_;
};

/// Per-agent critic weights and softmax-linear actor parameters. Actor
/// logits for agent i are theta_i (n_actions x F) applied to psi_i(s);
/// tabular policies are the special case of one-hot observation features.
struct LinearAcState {
  std::vector<Vec> omegas;      // N x K, zero-initialized
  std::vector<Matrix> thetas;   // N x (n_actions x F), zero-initialized
  long long t = 0;

  static LinearAcState zeros(int n_agents, int k, int n_actions, int actor_dim);
};

/// delta = r_i + gamma phi_next' w - phi_t' w.
double td_error(const Vec& omega, const Vec& phi_t, const Vec& phi_next, double reward,
                double gamma);

/// Softmax probabilities of agent i's actions at the given features.
Vec actor_probs(const Matrix& theta, const Vec& psi);

struct SarsaTransition {
  int state = 0;
  std::vector<int> actions;
  Vec rewards;  // per agent
  int next_state = 0;
  std::vector<int> next_actions;
};

/// One TD step for every agent followed by the consensus mixing.
void critic_step(const LinearTrainEnv& env, LinearAcState& state, const SarsaTransition& tr,
                 double beta, const consensus::ConsensusMatrix& c);

/// One policy-gradient step for every agent (weight = own critic's value of
/// the sampled pair) followed by the consensus mixing. Identity consensus
/// gives the no-sharing baseline.
void actor_step(const LinearTrainEnv& env, LinearAcState& state, const SarsaTransition& tr,
                double beta, const consensus::ConsensusMatrix& c);

enum class UpdateMode {
  kSampled,   // on-policy SARSA tuples
  kExpected,  // exact expectation over actions (single-state envs only)
};

enum class ConsensusKind { kUniform, kIdentity, kRandomPairGossip };

struct TrainConfig {
  long long steps = 50000;
  int eval_every = 500;
  std::uint64_t seed = 0;
  UpdateMode mode = UpdateMode::kSampled;

  consensus::StepSchedule critic_schedule = consensus::StepSchedule::power(0.65);
  ConsensusKind critic_consensus = ConsensusKind::kUniform;

  bool train_actor = false;
  consensus::StepSchedule actor_schedule = consensus::StepSchedule::power(0.85);
  ConsensusKind actor_consensus = ConsensusKind::kUniform;

  double divergence_guard = 1e6;
  /// Optional oracle weights to report distance against (recomputed per
  /// evaluation point when policy training is on).
  std::function<Vec(const LinearAcState&)> oracle;
};

struct MetricsRow {
  long long step = 0;
  double j = 0.0;
  double omega_disagreement = 0.0;
  double theta_disagreement = 0.0;
  double omega_oracle_dist = 0.0;  // max over agents; NaN when no oracle
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  LinearAcState state;
  bool aborted = false;
  std::string abort_reason;
};

TrainResult train(const LinearTrainEnv& env, const TrainConfig& cfg);

/// MSPBE weights for the product policy induced by the current actor
/// parameters on a single-state environment, by enumeration over joint
/// actions (n_actions^N must stay small). Returns the minimum-norm solution
/// on the feature span.
Vec mspbe_weights_for_policy(const LinearTrainEnv& env, const LinearAcState& state);

}  // namespace macc::linear_ac
