#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "macc/linalg.hpp"
#include "macc/mg.hpp"

namespace macc::exact {

enum class PolicyKeying { kByState, kByObservation };

/// Product policy: each agent draws its local action from a table keyed by
/// the joint state or by its own observation. Rows sum to one.
class FactoredPolicy {
 public:
  FactoredPolicy(PolicyKeying keying, std::vector<Matrix> per_agent, bool shared,
                 const mg::ObservationMap* obs = nullptr);

  static FactoredPolicy uniform(const mg::FiniteMG& game, PolicyKeying keying,
                                const mg::ObservationMap* obs = nullptr);

  PolicyKeying keying() const { return keying_; }
  bool shared() const { return shared_; }
  int n_agents() const { return static_cast<int>(tables_.size()); }

  int key_of(const mg::FiniteMG& game, int agent, int state) const;
  /// pi^agent(local action index | state), resolving the key internally.
  double local_prob(const mg::FiniteMG& game, int agent, int state, int local_action) const;
  /// Product over agents for joint action a at state s.
  double joint_prob(const mg::FiniteMG& game, int state, int action) const;

  const Matrix& table(int agent) const { return tables_[agent]; }
  Matrix& mutable_table(int agent) { return tables_[agent]; }

 private:
  PolicyKeying keying_;
  bool shared_;
  std::vector<Matrix> tables_;  // [agent](key, local action)
  const mg::ObservationMap* obs_;
};

struct EvalResult {
  double j = 0.0;                     // expected discounted return from the start
  Vec v;                              // per-state values (terminal zero)
  Matrix q;                           // (state, joint action) values
  Matrix d;                           // state-action weights, sums to one
  bool stationary_distribution = false;  // true: ergodic chain; false: occupancy
  bool condition_warning = false;
};

/// Exact policy evaluation by direct linear solve of (I - gamma P^pi) V = r^pi.
/// The weighting d is the stationary distribution when the induced chain is
/// irreducible and the game never terminates, otherwise the normalized
/// discounted state-action occupancy from the initial distribution.
EvalResult evaluate(const mg::FiniteMG& game, const FactoredPolicy& policy);

enum class PolicyClass { kStateBased, kObsBased, kObsBasedShared };

struct OptimumResult {
  double j = 0.0;
  FactoredPolicy policy;
  bool used_stochastic_search = false;
  double stochastic_p = -1.0;  // shared Bernoulli parameter when used
};

/// Exact maximum over deterministic policies of the given class. One-step
/// games use a per-state / per-observation assignment search decomposed into
/// independent components. For shared observation-based policies on one-step
/// binary-action games where all agents see the same observation, a
/// stochastic one-parameter grid + golden-section search is run as well,
/// since the deterministic maximum is not the stochastic one there.
OptimumResult brute_force_optimum(const mg::FiniteMG& game, const mg::ObservationMap& obs,
                                  PolicyClass cls, long long budget = 1 << 22);

struct TheoremOneVerdict {
  double state_based = 0.0;
  double obs_based = 0.0;
  double obs_shared = 0.0;
  bool shared_used_stochastic = false;
  double shared_p = -1.0;
  bool all_equal(double tol = 0.0) const;
};

TheoremOneVerdict policy_class_maxima(const mg::FiniteMG& game, const mg::ObservationMap& obs,
                                      long long budget = 1 << 22);

/// Linear critic features over non-terminal (state, joint action) rows.
class FeatureMap {
 public:
  FeatureMap(const mg::FiniteMG& game,
             std::function<Vec(const mg::FiniteMG&, int s, int a)> phi, int k);

  /// Tabular features: one indicator per (state, action) row.
  static FeatureMap tabular(const mg::FiniteMG& game);
  /// Per-agent concatenation of the numeric local state value and a one-hot
  /// of the local action; K = N * (1 + |local actions|). Duplicate constant
  /// columns are dropped when requested (keeps the first nonzero one).
  static FeatureMap cosine_concat(const mg::FiniteMG& game, bool drop_duplicate_constant_columns);

  int k() const { return k_; }
  int n_rows() const { return static_cast<int>(rows_.size()); }
  int row_index(int s, int a) const;  // -1 for terminal states
  const Vec& phi(int s, int a) const;
  const Matrix& matrix() const { return phi_matrix_; }
  int effective_rank() const { return rank_; }
  bool full_column_rank() const { return rank_ == k_; }
  const std::vector<int>& dropped_columns() const { return dropped_; }
  double max_abs_entry() const;

 private:
  FeatureMap() = default;
  void finish(const mg::FiniteMG& game);

  int k_ = 0;
  int rank_ = 0;
  std::vector<std::pair<int, int>> rows_;  // (s, a) per row
  std::vector<std::vector<int>> row_of_;   // [s][a] -> row or -1
  Matrix phi_matrix_;
  std::vector<Vec> phis_;
  std::vector<int> dropped_;
};

struct MspbeSolution {
  Vec omega;
  double residual = 0.0;  // norm of the projected fixed-point defect
  int effective_rank = 0;
  bool rank_deficient = false;
  bool condition_warning = false;
};

struct MspbeOptions {
  /// When false, a column-rank-deficient feature matrix is an error naming
  /// the full-rank requirement (assumption 2). When true, the projected
  /// system is solved on the feature span and the minimum-norm weight
  /// vector is returned (matching what zero-initialized TD iterates reach).
  bool allow_rank_deficient = false;
  double warn_threshold = 1e12;
};

/// Solves Phi^T D (I - gamma P^pi) Phi w = Phi^T D rbar for the fixed policy
/// and reports the fixed-point residual.
MspbeSolution solve_mspbe(const mg::FiniteMG& game, const FactoredPolicy& policy,
                          const FeatureMap& features, const MspbeOptions& opts = {});

}  // namespace macc::exact
