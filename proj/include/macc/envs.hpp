#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "macc/linalg.hpp"
#include "macc/mg.hpp"
#include "macc/rng.hpp"

namespace macc::envs {

/// A finite game bundled with its observation functions.
struct FiniteEnvBundle {
  mg::FiniteMG game;
  mg::ObservationMap obs;
};

/// Three agents stand at positions L/M/R, each behind a shape pointing up or
/// down; everyone acts once and the team scores on the parity rule.
namespace triangle {

/// shapes_up[i]: agent i's shape points up; acts_up[i]: agent i moves up.
/// Even number of up-shapes: +1 iff up-shape agents go up and down-shape
/// agents go down. Odd: +1 iff reversed. 0 otherwise.
double reward(const std::array<bool, 3>& shapes_up, const std::array<bool, 3>& acts_up);

/// 48 one-step states (position assignments x shapes) plus an absorbing
/// sink; uniform initial distribution. Observations: own position plus the
/// three shapes read clockwise (L->M->R) starting from one's own position.
FiniteEnvBundle build();

}  // namespace triangle

/// One-shot coordination game with a single played state: agents seated
/// 0..N-1 score 1 exactly when the first half plays 0 and the second half
/// plays 1. Observations are the raw joint state, identical for everyone.
namespace kuba {

/// N must be even and small (the verifier enumerates all N! seatings).
FiniteEnvBundle build(int n_agents);

}  // namespace kuba

/// Agents carry fixed distinct local values v_i = cos((i-1)/(N-1) pi); the
/// dense reward pays +1 when exactly the nonnegative-value agents play 1.
struct CosineToy {
  explicit CosineToy(int n_agents);

  int n() const { return n_; }
  const std::vector<double>& values() const { return values_; }
  bool positive(int agent) const { return values_[agent] >= 0.0; }

  /// Reward of a joint action given as bits (a[i] in {0,1}).
  double reward(const std::vector<int>& bits) const;
  /// Exact expected reward given per-agent probabilities of playing 1;
  /// linearity of the reward makes this closed-form for any N.
  double expected_reward(const std::vector<double>& p_one) const;
  /// The rewarding assignment: 1 for agents with nonnegative value.
  std::vector<int> optimal_bits() const;
  /// Brute-force max over all 2^N joint actions (guarded to N <= 20).
  double brute_force_max() const;

  /// One-step mode: all N! seatings of the values plus a sink, point-mass
  /// initial on the sorted seating. Used for enumeration-style checks
  /// (guarded to N <= 6).
  FiniteEnvBundle build_one_step() const;
  /// Repeated mode: the single played state presented forever, discount
  /// 0.95. Used for the training and critic-oracle paths.
  FiniteEnvBundle build_repeated() const;

  static constexpr double kRepeatedDiscount = 0.95;

 private:
  double reward_of_tuple(const std::vector<double>& vals, const std::vector<int>& bits) const;
  int n_;
  std::vector<double> values_;
};

/// Small cooperative coverage world: N agents and N landmarks in a bounded
/// 2D box, double-integrator dynamics, 25-step episodes. Observations are
/// own absolute position/velocity plus relative positions of the k nearest
/// agents and the k+1 nearest landmarks.
class ParticleNav {
 public:
  ParticleNav(int n_agents, int k_neighbors);

  static constexpr double kDt = 0.1;
  static constexpr double kMaxSpeed = 1.0;
  static constexpr double kBoxHalf = 1.0;
  static constexpr double kCollisionRadius = 0.1;
  static constexpr int kEpisodeLen = 25;

  int n() const { return n_; }
  int k() const { return k_; }
  int obs_dim() const { return 4 + 2 * k_ + 2 * (k_ + 1); }
  int action_dim() const { return 2; }
  int episode_len() const { return kEpisodeLen; }

  /// Resets positions, velocities and landmarks; same seed, same episode.
  std::vector<Vec> reset(std::uint64_t seed);

  /// Installs an explicit world state (used by tests and evaluation probes).
  std::vector<Vec> reset_to(const std::vector<std::array<double, 2>>& positions,
                            const std::vector<std::array<double, 2>>& velocities,
                            const std::vector<std::array<double, 2>>& landmarks);

  struct StepResult {
    std::vector<Vec> obs;
    Vec rewards;
    bool done = false;
  };
  /// Applies clipped 2D accelerations; deterministic given state + actions.
  StepResult step(const std::vector<Vec>& actions);

  /// Neighbor ids of agent i sorted by current distance, nearest first.
  std::vector<int> neighbor_ids(int agent) const;
  /// Offset of neighbor-rank r's relative-position block inside the
  /// observation vector.
  int neighbor_block_offset(int rank) const { return 4 + 2 * rank; }

  const std::vector<std::array<double, 2>>& positions() const { return pos_; }
  const std::vector<std::array<double, 2>>& landmarks() const { return landmarks_; }
  int steps_taken() const { return t_; }

  struct TrajectoryRow {
    int t;
    int agent;
    double x, y, vx, vy, reward;
  };
  const std::vector<TrajectoryRow>& trajectory() const { return trajectory_; }
  void export_trajectory_csv(const std::string& path) const;

 private:
  std::vector<Vec> observations() const;
  Vec rewards() const;

  int n_, k_;
  int t_ = 0;
  std::vector<std::array<double, 2>> pos_, vel_, landmarks_;
  std::vector<TrajectoryRow> trajectory_;
};

/// Registry used by the CLI: "triangle", "kuba", "cosine" (finite) and
/// "particle-nav" (stepping). Finite builds honor `n` and, for cosine,
/// `mode` in {one_step, repeated}.
struct EnvParams {
  int n = 0;
  int k = 3;
  std::string mode = "one_step";
};
FiniteEnvBundle build_finite(const std::string& name, const EnvParams& params);
bool is_finite_env(const std::string& name);
std::vector<std::string> registered_envs();

}  // namespace macc::envs
