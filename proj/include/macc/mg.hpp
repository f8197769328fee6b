#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace macc::mg {

/// Bijection on agent indices 0..N-1. The convention used throughout is
/// (Mx)[m(i)] = x[i]: agent i's entry lands at position m(i).
struct Permutation {
  std::vector<int> map;

  explicit Permutation(std::vector<int> m);
  static Permutation identity(int n);
  static Permutation transposition(int n, int i, int j);

  int size() const { return static_cast<int>(map.size()); }
  int operator()(int i) const { return map[i]; }
  bool is_identity() const;

  /// (a.compose(b)) applied to x equals a applied to (b applied to x).
  Permutation compose(const Permutation& other) const;
  Permutation inverse() const;

  bool operator==(const Permutation& other) const { return map == other.map; }
};

/// apply_permutation(x, m)[m(i)] = x[i]. Applying m then m.inverse() is the
/// identity.
template <typename T>
std::vector<T> apply_permutation(const std::vector<T>& x, const Permutation& m) {
  if (static_cast<int>(x.size()) != m.size())
    throw std::invalid_argument("apply_permutation: length mismatch");
  std::vector<T> out(x.size());
  for (int i = 0; i < m.size(); ++i) out[m(i)] = x[i];
  return out;
}

/// Enumerable cooperative Markov game with factored local states. Joint
/// states are tuples of local-state values (values interned in a shared
/// label pool so they compare across agents). Terminal states are absorbing
/// with zero reward. Immutable after construction.
class FiniteMG {
 public:
  int n_agents() const { return n_agents_; }
  int n_states() const { return static_cast<int>(states_.size()); }
  int n_actions() const { return static_cast<int>(actions_.size()); }
  double discount() const { return discount_; }

  const std::vector<int>& state(int s) const { return states_[s]; }
  const std::vector<int>& action(int a) const { return actions_[a]; }
  const std::string& value_label(int vid) const { return value_pool_[vid]; }
  std::string state_label(int s) const;
  std::string action_label(int a) const;

  const std::vector<int>& local_state_space(int agent) const { return local_state_spaces_[agent]; }
  const std::vector<int>& local_action_space(int agent) const { return local_action_spaces_[agent]; }

  bool is_terminal(int s) const { return terminal_[s] != 0; }
  int n_nonterminal() const;
  const std::vector<double>& initial_dist() const { return initial_; }

  /// Sparse transition row P(. | s, a) as (next state, probability) pairs.
  const std::vector<std::pair<int, double>>& transition_row(int s, int a) const {
    return transitions_[s][a];
  }
  double transition_prob(int s, int a, int s2) const;

  double reward(int s, int a, int agent) const { return rewards_[s][a][agent]; }
  /// Mean reward over agents: the shared objective.
  double mean_reward(int s, int a) const;

  /// Index of a joint state given its per-agent value ids; nullopt when the
  /// tuple was never declared (used to detect permutation-closure failures).
  std::optional<int> find_state(const std::vector<int>& tuple) const;
  std::optional<int> find_action(const std::vector<int>& tuple) const;

  /// States reachable from the initial distribution, terminal excluded.
  std::vector<int> reachable_nonterminal() const;

  friend class MgBuilder;

 private:
  FiniteMG() = default;

  int n_agents_ = 0;
  double discount_ = 0.0;
  std::vector<std::string> value_pool_;
  std::vector<std::vector<int>> local_state_spaces_;   // value ids per agent
  std::vector<std::vector<int>> local_action_spaces_;  // value ids per agent
  std::vector<std::vector<int>> states_;               // joint state -> per-agent value ids
  std::vector<std::vector<int>> actions_;              // joint action -> per-agent value ids
  std::map<std::vector<int>, int> state_index_;
  std::map<std::vector<int>, int> action_index_;
  std::vector<char> terminal_;
  std::vector<double> initial_;
  std::vector<std::vector<std::vector<std::pair<int, double>>>> transitions_;
  std::vector<std::vector<std::vector<double>>> rewards_;
};

/// Assembles and validates a FiniteMG. Terminal states get the absorbing
/// self-loop and zero rewards automatically.
class MgBuilder {
 public:
  explicit MgBuilder(int n_agents, double discount);

  void local_state_space(int agent, const std::vector<std::string>& labels);
  void local_state_space_all(const std::vector<std::string>& labels);
  void local_action_space(int agent, const std::vector<std::string>& labels);
  void local_action_space_all(const std::vector<std::string>& labels);

  int add_state(const std::vector<std::string>& labels);
  void set_terminal(int state);
  void set_initial(int state, double weight);

  /// Joint actions are the full product of local action spaces, enumerated
  /// with the last agent's action varying fastest.
  void finalize_actions();
  int action_id(const std::vector<std::string>& labels) const;

  void add_transition(int s, int a, int s2, double p);
  void set_reward(int s, int a, int agent, double r);
  void set_shared_reward(int s, int a, double r);

  FiniteMG build();

 private:
  int intern(const std::string& label);

  FiniteMG mg_;
  bool actions_final_ = false;
  std::map<std::string, int> pool_index_;
};

/// Maps joint states to per-agent observation values in a common space.
class ObservationMap {
 public:
  ObservationMap(int n_agents, std::vector<std::string> observation_labels,
                 bool full_observability = false);

  void set(int state, int agent, int obs_id);
  void set_by_label(int state, int agent, const std::string& label);
  int obs_label_id(const std::string& label) const;

  int n_agents() const { return n_agents_; }
  int n_observations() const { return static_cast<int>(labels_.size()); }
  const std::string& label(int obs_id) const { return labels_[obs_id]; }
  bool full_observability() const { return full_observability_; }

  int observe(int state, int agent) const;

  /// Checks every state has an observation for every agent and, when full
  /// observability is declared, that each per-agent map is bijective.
  void validate(const FiniteMG& game) const;

 private:
  int n_agents_;
  bool full_observability_;
  std::vector<std::string> labels_;
  std::map<std::string, int> label_index_;
  std::vector<std::vector<int>> table_;  // [state][agent] -> obs id
};

enum class PermutationPolicy {
  kTranspositions,   // N(N-1)/2 generators of the symmetric group
  kAllPermutations,  // all N! permutations
};

struct HomogeneityOptions {
  PermutationPolicy policy = PermutationPolicy::kTranspositions;
  // Refuses (throws) when |S| * |A| * |checked permutations| exceeds this.
  long long budget = 50'000'000;
  double tolerance = 1e-9;  // absolute, for P and R table entries
};

struct ConditionTwoWitness {
  int state = -1;
  int action = -1;
  Permutation perm = Permutation::identity(0);
  std::string detail;  // "transition", "reward", or "closure"
};

struct ConditionThreeWitness {
  int state = -1;
  int agent = -1;
  Permutation perm = Permutation::identity(0);
  std::string detail;
};

struct HomogeneityReport {
  bool condition_i = false;
  bool condition_ii = false;
  bool condition_iii = false;
  std::string condition_i_detail;
  std::optional<ConditionTwoWitness> condition_ii_witness;
  std::optional<ConditionThreeWitness> condition_iii_witness;
  long long tuples_checked = 0;

  bool homogeneous() const { return condition_i && condition_ii && condition_iii; }
  std::string summary(const FiniteMG& game) const;
};

/// Thrown when the enumeration budget would be exceeded; never a silent
/// partial verdict.
struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Verifies the three structural conditions: (i) equal local spaces,
/// (ii) permutation-invariant transitions and permutation-preserving
/// rewards, (iii) permutation-preserving observation functions.
HomogeneityReport check_homogeneous(const FiniteMG& game, const ObservationMap& obs,
                                    const HomogeneityOptions& opts = {});

struct ObservationIdentityResult {
  bool pass = false;
  int witness_state = -1;
  int witness_i = -1;
  int witness_j = -1;
  std::string detail;
};

/// Checks o^i(s) = o^j(Ms) for every state and every transposition M
/// swapping agents (i, j).
ObservationIdentityResult check_observation_identity(const FiniteMG& game,
                                                     const ObservationMap& obs,
                                                     long long budget = 50'000'000);

/// All permutations of 0..n-1 (n <= 8 guarded).
std::vector<Permutation> all_permutations(int n);
std::vector<Permutation> all_transpositions(int n);

}  // namespace macc::mg
