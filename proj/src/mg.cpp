#include "macc/mg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace macc::mg {

Permutation::Permutation(std::vector<int> m) : map(std::move(m)) {
  std::vector<char> seen(map.size(), 0);
  for (int v : map) {
    if (v < 0 || v >= static_cast<int>(map.size()) || seen[v])
      throw std::invalid_argument("Permutation: mapping is not a bijection");
    seen[v] = 1;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> m(n);
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

Permutation Permutation::transposition(int n, int i, int j) {
  Permutation p = identity(n);
  std::swap(p.map[i], p.map[j]);
  return p;
}

bool Permutation::is_identity() const {
  for (int i = 0; i < size(); ++i)
    if (map[i] != i) return false;
  return true;
}

Permutation Permutation::compose(const Permutation& other) const {
  if (size() != other.size()) throw std::invalid_argument("Permutation::compose: size mismatch");
  std::vector<int> m(map.size());
  for (int i = 0; i < size(); ++i) m[i] = map[other.map[i]];
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<int> m(map.size());
  for (int i = 0; i < size(); ++i) m[map[i]] = i;
  return Permutation(std::move(m));
}

std::string FiniteMG::state_label(int s) const {
  std::ostringstream out;
  out << '(';
  for (int i = 0; i < n_agents_; ++i) {
    if (i) out << ',';
    out << value_pool_[states_[s][i]];
  }
  out << ')';
  return out.str();
}

std::string FiniteMG::action_label(int a) const {
  std::ostringstream out;
  out << '(';
  for (int i = 0; i < n_agents_; ++i) {
    if (i) out << ',';
    out << value_pool_[actions_[a][i]];
  }
  out << ')';
  return out.str();
}

int FiniteMG::n_nonterminal() const {
  int n = 0;
  for (char t : terminal_)
    if (!t) ++n;
  return n;
}

double FiniteMG::transition_prob(int s, int a, int s2) const {
  for (const auto& [t, p] : transitions_[s][a])
    if (t == s2) return p;
  return 0.0;
}

double FiniteMG::mean_reward(int s, int a) const {
  double sum = 0.0;
  for (int i = 0; i < n_agents_; ++i) sum += rewards_[s][a][i];
  return sum / n_agents_;
}

std::optional<int> FiniteMG::find_state(const std::vector<int>& tuple) const {
  auto it = state_index_.find(tuple);
  if (it == state_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> FiniteMG::find_action(const std::vector<int>& tuple) const {
  auto it = action_index_.find(tuple);
  if (it == action_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> FiniteMG::reachable_nonterminal() const {
  std::vector<char> seen(n_states(), 0);
  std::vector<int> stack;
  for (int s = 0; s < n_states(); ++s)
    if (initial_[s] > 0.0 && !seen[s]) {
      seen[s] = 1;
      stack.push_back(s);
    }
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    if (is_terminal(s)) continue;
    for (int a = 0; a < n_actions(); ++a)
      for (const auto& [t, p] : transitions_[s][a])
        if (p > 0.0 && !seen[t]) {
          seen[t] = 1;
          stack.push_back(t);
        }
  }
  std::vector<int> out;
  for (int s = 0; s < n_states(); ++s)
    if (seen[s] && !is_terminal(s)) out.push_back(s);
  return out;
}

MgBuilder::MgBuilder(int n_agents, double discount) {
  if (n_agents < 1) throw std::invalid_argument("MgBuilder: need at least one agent");
  if (discount < 0.0 || discount > 1.0) throw std::invalid_argument("MgBuilder: discount out of range");
  mg_.n_agents_ = n_agents;
  mg_.discount_ = discount;
  mg_.local_state_spaces_.resize(n_agents);
  mg_.local_action_spaces_.resize(n_agents);
}

int MgBuilder::intern(const std::string& label) {
  auto it = pool_index_.find(label);
  if (it != pool_index_.end()) return it->second;
  int id = static_cast<int>(mg_.value_pool_.size());
  mg_.value_pool_.push_back(label);
  pool_index_[label] = id;
  return id;
}

void MgBuilder::local_state_space(int agent, const std::vector<std::string>& labels) {
  mg_.local_state_spaces_[agent].clear();
  for (const auto& l : labels) mg_.local_state_spaces_[agent].push_back(intern(l));
}

void MgBuilder::local_state_space_all(const std::vector<std::string>& labels) {
  for (int i = 0; i < mg_.n_agents_; ++i) local_state_space(i, labels);
}

void MgBuilder::local_action_space(int agent, const std::vector<std::string>& labels) {
  if (actions_final_) throw std::logic_error("MgBuilder: actions already finalized");
  mg_.local_action_spaces_[agent].clear();
  for (const auto& l : labels) mg_.local_action_spaces_[agent].push_back(intern(l));
}

void MgBuilder::local_action_space_all(const std::vector<std::string>& labels) {
  for (int i = 0; i < mg_.n_agents_; ++i) local_action_space(i, labels);
}

int MgBuilder::add_state(const std::vector<std::string>& labels) {
  if (static_cast<int>(labels.size()) != mg_.n_agents_)
    throw std::invalid_argument("MgBuilder::add_state: wrong arity");
  std::vector<int> tuple;
  for (int i = 0; i < mg_.n_agents_; ++i) {
    int vid = intern(labels[i]);
    const auto& space = mg_.local_state_spaces_[i];
    if (std::find(space.begin(), space.end(), vid) == space.end())
      throw std::invalid_argument("MgBuilder::add_state: value '" + labels[i] +
                                  "' not in agent " + std::to_string(i + 1) + "'s local space");
    tuple.push_back(vid);
  }
  if (mg_.state_index_.count(tuple)) throw std::invalid_argument("MgBuilder::add_state: duplicate state");
  int id = static_cast<int>(mg_.states_.size());
  mg_.states_.push_back(tuple);
  mg_.state_index_[tuple] = id;
  mg_.terminal_.push_back(0);
  mg_.initial_.push_back(0.0);
  return id;
}

void MgBuilder::set_terminal(int state) { mg_.terminal_[state] = 1; }

void MgBuilder::set_initial(int state, double weight) {
  if (weight < 0.0) throw std::invalid_argument("MgBuilder::set_initial: negative weight");
  mg_.initial_[state] = weight;
}

void MgBuilder::finalize_actions() {
  if (actions_final_) return;
  for (int i = 0; i < mg_.n_agents_; ++i)
    if (mg_.local_action_spaces_[i].empty())
      throw std::logic_error("MgBuilder: agent " + std::to_string(i + 1) + " has no actions");
  std::vector<int> idx(mg_.n_agents_, 0);
  while (true) {
    std::vector<int> tuple(mg_.n_agents_);
    for (int i = 0; i < mg_.n_agents_; ++i) tuple[i] = mg_.local_action_spaces_[i][idx[i]];
    mg_.action_index_[tuple] = static_cast<int>(mg_.actions_.size());
    mg_.actions_.push_back(tuple);
    int i = mg_.n_agents_ - 1;  // last agent varies fastest
    while (i >= 0) {
      if (++idx[i] < static_cast<int>(mg_.local_action_spaces_[i].size())) break;
      idx[i] = 0;
      --i;
    }
    if (i < 0) break;
  }
  actions_final_ = true;
}

int MgBuilder::action_id(const std::vector<std::string>& labels) const {
  if (!actions_final_) throw std::logic_error("MgBuilder: finalize_actions first");
  std::vector<int> tuple;
  for (const auto& l : labels) {
    auto it = pool_index_.find(l);
    if (it == pool_index_.end()) throw std::invalid_argument("MgBuilder::action_id: unknown label " + l);
    tuple.push_back(it->second);
  }
  auto it = mg_.action_index_.find(tuple);
  if (it == mg_.action_index_.end()) throw std::invalid_argument("MgBuilder::action_id: no such action");
  return it->second;
}

void MgBuilder::add_transition(int s, int a, int s2, double p) {
  if (!actions_final_) throw std::logic_error("MgBuilder: finalize_actions before transitions");
  if (mg_.transitions_.empty()) {
    mg_.transitions_.assign(mg_.states_.size(),
                            std::vector<std::vector<std::pair<int, double>>>(mg_.actions_.size()));
    mg_.rewards_.assign(mg_.states_.size(),
                        std::vector<std::vector<double>>(mg_.actions_.size(),
                                                         std::vector<double>(mg_.n_agents_, 0.0)));
  }
  if (p < 0.0) throw std::invalid_argument("MgBuilder::add_transition: negative probability");
  mg_.transitions_[s][a].emplace_back(s2, p);
}

void MgBuilder::set_reward(int s, int a, int agent, double r) {
  if (mg_.rewards_.empty())
    throw std::logic_error("MgBuilder: add a transition (or finalize) before rewards");
  if (!std::isfinite(r)) throw std::invalid_argument("MgBuilder::set_reward: non-finite reward");
  mg_.rewards_[s][a][agent] = r;
}

void MgBuilder::set_shared_reward(int s, int a, double r) {
  for (int i = 0; i < mg_.n_agents_; ++i) set_reward(s, a, i, r);
}

FiniteMG MgBuilder::build() {
  finalize_actions();
  if (mg_.states_.empty()) throw std::logic_error("MgBuilder: no states");
  if (mg_.transitions_.empty()) {
    mg_.transitions_.assign(mg_.states_.size(),
                            std::vector<std::vector<std::pair<int, double>>>(mg_.actions_.size()));
    mg_.rewards_.assign(mg_.states_.size(),
                        std::vector<std::vector<double>>(mg_.actions_.size(),
                                                         std::vector<double>(mg_.n_agents_, 0.0)));
  }

  // Terminal states: absorbing self-loop, zero reward.
  for (int s = 0; s < mg_.n_states(); ++s) {
    if (!mg_.terminal_[s]) continue;
    for (int a = 0; a < mg_.n_actions(); ++a) {
      mg_.transitions_[s][a] = {{s, 1.0}};
      for (int i = 0; i < mg_.n_agents_; ++i) mg_.rewards_[s][a][i] = 0.0;
    }
  }

  for (int s = 0; s < mg_.n_states(); ++s)
    for (int a = 0; a < mg_.n_actions(); ++a) {
      double sum = 0.0;
      for (const auto& [t, p] : mg_.transitions_[s][a]) {
        if (t < 0 || t >= mg_.n_states())
          throw std::invalid_argument("MgBuilder: transition target out of range");
        sum += p;
      }
      if (std::fabs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("MgBuilder: transition row for state " + mg_.state_label(s) +
                                    ", action " + mg_.action_label(a) + " sums to " +
                                    std::to_string(sum));
      for (int i = 0; i < mg_.n_agents_; ++i)
        if (!std::isfinite(mg_.rewards_[s][a][i]))
          throw std::invalid_argument("MgBuilder: non-finite reward");
    }

  double init_sum = 0.0;
  for (double w : mg_.initial_) init_sum += w;
  if (init_sum <= 0.0) throw std::invalid_argument("MgBuilder: empty initial distribution");
  for (double& w : mg_.initial_) w /= init_sum;

  return std::move(mg_);
}

ObservationMap::ObservationMap(int n_agents, std::vector<std::string> observation_labels,
                               bool full_observability)
    : n_agents_(n_agents), full_observability_(full_observability), labels_(std::move(observation_labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (label_index_.count(labels_[i]))
      throw std::invalid_argument("ObservationMap: duplicate observation label " + labels_[i]);
    label_index_[labels_[i]] = static_cast<int>(i);
  }
}

void ObservationMap::set(int state, int agent, int obs_id) {
  if (obs_id < 0 || obs_id >= n_observations())
    throw std::invalid_argument("ObservationMap::set: observation id outside the declared space");
  if (state >= static_cast<int>(table_.size())) table_.resize(state + 1, std::vector<int>(n_agents_, -1));
  table_[state][agent] = obs_id;
}

void ObservationMap::set_by_label(int state, int agent, const std::string& label) {
  set(state, agent, obs_label_id(label));
}

int ObservationMap::obs_label_id(const std::string& label) const {
  auto it = label_index_.find(label);
  if (it == label_index_.end()) throw std::invalid_argument("ObservationMap: unknown label " + label);
  return it->second;
}

int ObservationMap::observe(int state, int agent) const {
  int v = table_[state][agent];
  if (v < 0) throw std::logic_error("ObservationMap: observation unset");
  return v;
}

void ObservationMap::validate(const FiniteMG& game) const {
  if (n_agents_ != game.n_agents())
    throw std::invalid_argument("ObservationMap: agent count differs from the game's");
  if (static_cast<int>(table_.size()) < game.n_states())
    throw std::invalid_argument("ObservationMap: missing observations for some states");
  for (int s = 0; s < game.n_states(); ++s)
    for (int i = 0; i < n_agents_; ++i)
      if (table_[s][i] < 0)
        throw std::invalid_argument("ObservationMap: unset observation at state " + game.state_label(s));
  if (full_observability_) {
    for (int i = 0; i < n_agents_; ++i) {
      std::vector<char> hit(n_observations(), 0);
      for (int s = 0; s < game.n_states(); ++s) {
        int o = table_[s][i];
        if (hit[o])
          throw std::invalid_argument("ObservationMap: o^" + std::to_string(i + 1) +
                                      " is not injective but full observability was declared");
        hit[o] = 1;
      }
    }
  }
}

std::vector<Permutation> all_permutations(int n) {
  if (n > 8) throw BudgetExceeded("all_permutations: N! enumeration refused for N > 8");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<Permutation> out;
  do {
    out.push_back(Permutation(idx));
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

std::vector<Permutation> all_transpositions(int n) {
  std::vector<Permutation> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.push_back(Permutation::transposition(n, i, j));
  return out;
}

namespace {

// Image of state s under M, or nullopt if the permuted tuple is not a state.
std::optional<int> permuted_state(const FiniteMG& game, int s, const Permutation& m) {
  return game.find_state(apply_permutation(game.state(s), m));
}

std::optional<int> permuted_action(const FiniteMG& game, int a, const Permutation& m) {
  return game.find_action(apply_permutation(game.action(a), m));
}

bool equal_as_sets(std::vector<int> a, std::vector<int> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

}  // namespace

HomogeneityReport check_homogeneous(const FiniteMG& game, const ObservationMap& obs,
                                    const HomogeneityOptions& opts) {
  obs.validate(game);
  const int n = game.n_agents();

  std::vector<Permutation> perms = (opts.policy == PermutationPolicy::kAllPermutations)
                                       ? all_permutations(n)
                                       : all_transpositions(n);
  std::erase_if(perms, [](const Permutation& p) { return p.is_identity(); });

  long long work = static_cast<long long>(game.n_states()) * game.n_actions() *
                   std::max<std::size_t>(perms.size(), 1);
  if (work > opts.budget)
    throw BudgetExceeded("check_homogeneous: enumeration of " + std::to_string(work) +
                         " tuples exceeds the budget of " + std::to_string(opts.budget));

  HomogeneityReport report;

  // Condition (i): local state and action spaces agree across agents as sets.
  report.condition_i = true;
  for (int i = 1; i < n; ++i) {
    if (!equal_as_sets(game.local_state_space(0), game.local_state_space(i))) {
      report.condition_i = false;
      report.condition_i_detail = "local state spaces of agents 1 and " + std::to_string(i + 1) + " differ";
      break;
    }
    if (!equal_as_sets(game.local_action_space(0), game.local_action_space(i))) {
      report.condition_i = false;
      report.condition_i_detail = "local action spaces of agents 1 and " + std::to_string(i + 1) + " differ";
      break;
    }
  }

  // Precompute state/action images per permutation; a missing image is a
  // closure failure and counts against condition (ii).
  report.condition_ii = true;
  report.condition_iii = true;
  for (const Permutation& m : perms) {
    std::vector<int> simg(game.n_states(), -1);
    bool closed = true;
    int bad_state = -1;
    for (int s = 0; s < game.n_states(); ++s) {
      auto t = permuted_state(game, s, m);
      if (!t) {
        closed = false;
        bad_state = s;
        break;
      }
      simg[s] = *t;
    }
    if (!closed) {
      if (report.condition_ii && !report.condition_ii_witness) {
        report.condition_ii = false;
        report.condition_ii_witness = ConditionTwoWitness{bad_state, -1, m, "closure"};
      }
      if (report.condition_iii && !report.condition_iii_witness) {
        report.condition_iii = false;
        report.condition_iii_witness = ConditionThreeWitness{bad_state, -1, m, "closure"};
      }
      continue;
    }
    std::vector<int> aimg(game.n_actions(), -1);
    bool actions_closed = true;
    for (int a = 0; a < game.n_actions(); ++a) {
      auto t = permuted_action(game, a, m);
      if (!t) {
        actions_closed = false;
        if (report.condition_ii && !report.condition_ii_witness) {
          report.condition_ii = false;
          report.condition_ii_witness = ConditionTwoWitness{-1, a, m, "closure"};
        }
        break;
      }
      aimg[a] = *t;
    }
    if (!actions_closed) continue;

    // Condition (ii): P(Ms'|Ms,Ma) = P(s'|s,a) and R^{m(i)}(Ms,Ma) = R^i(s,a).
    // Invariance against the identity permutation implies the all-pairs form.
    if (report.condition_ii) {
      for (int s = 0; s < game.n_states() && report.condition_ii; ++s) {
        for (int a = 0; a < game.n_actions(); ++a) {
          ++report.tuples_checked;
          int ms = simg[s], ma = aimg[a];
          bool ok = true;
          for (const auto& [s2, p] : game.transition_row(s, a))
            if (std::fabs(game.transition_prob(ms, ma, simg[s2]) - p) > opts.tolerance) {
              ok = false;
              break;
            }
          if (ok)
            for (const auto& [t2, q] : game.transition_row(ms, ma)) {
              // Permuted row may hold support the base row lacks.
              double base = 0.0;
              for (const auto& [s2, p] : game.transition_row(s, a))
                if (simg[s2] == t2) base = p;
              if (std::fabs(base - q) > opts.tolerance) {
                ok = false;
                break;
              }
            }
          if (ok)
            for (int i = 0; i < n; ++i)
              if (std::fabs(game.reward(ms, ma, m(i)) - game.reward(s, a, i)) > opts.tolerance) {
                ok = false;
                report.condition_ii_witness = ConditionTwoWitness{s, a, m, "reward"};
                break;
              }
          if (!ok) {
            report.condition_ii = false;
            if (!report.condition_ii_witness)
              report.condition_ii_witness = ConditionTwoWitness{s, a, m, "transition"};
            break;
          }
        }
      }
    }

    // Condition (iii): o^{m(i)}(Ms) = o^i(s) for every agent and state.
    if (report.condition_iii) {
      for (int s = 0; s < game.n_states() && report.condition_iii; ++s)
        for (int i = 0; i < n; ++i)
          if (obs.observe(simg[s], m(i)) != obs.observe(s, i)) {
            report.condition_iii = false;
            report.condition_iii_witness = ConditionThreeWitness{
                s, i, m, "o^" + std::to_string(m(i) + 1) + "(Ms) != o^" + std::to_string(i + 1) + "(s)"};
            break;
          }
    }
  }
  return report;
}

std::string HomogeneityReport::summary(const FiniteMG& game) const {
  std::ostringstream out;
  out << "condition (i)   equal local spaces:            " << (condition_i ? "pass" : "FAIL");
  if (!condition_i) out << "  (" << condition_i_detail << ")";
  out << "\ncondition (ii)  invariant transitions/rewards: " << (condition_ii ? "pass" : "FAIL");
  if (condition_ii_witness) {
    const auto& w = *condition_ii_witness;
    out << "  (witness: " << w.detail;
    if (w.state >= 0) out << " at state " << game.state_label(w.state);
    if (w.action >= 0) out << ", action " << game.action_label(w.action);
    out << ")";
  }
  out << "\ncondition (iii) preserving observations:       " << (condition_iii ? "pass" : "FAIL");
  if (condition_iii_witness) {
    const auto& w = *condition_iii_witness;
    out << "  (witness: " << w.detail;
    if (w.state >= 0) out << " at state " << game.state_label(w.state);
    out << ")";
  }
  out << "\noverall: " << (homogeneous() ? "homogeneous" : "NOT homogeneous");
  return out.str();
}

ObservationIdentityResult check_observation_identity(const FiniteMG& game,
                                                     const ObservationMap& obs,
                                                     long long budget) {
  obs.validate(game);
  const int n = game.n_agents();
  long long work = static_cast<long long>(game.n_states()) * n * n;
  if (work > budget) throw BudgetExceeded("check_observation_identity: budget exceeded");

  ObservationIdentityResult res;
  res.pass = true;
  for (int s = 0; s < game.n_states(); ++s) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        Permutation m = Permutation::transposition(n, i, j);
        auto ms = game.find_state(apply_permutation(game.state(s), m));
        if (!ms || obs.observe(s, i) != obs.observe(*ms, j)) {
          res.pass = false;
          res.witness_state = s;
          res.witness_i = i;
          res.witness_j = j;
          res.detail = !ms ? "swapped state is not in the state space"
                           : "o^" + std::to_string(i + 1) + "(s) = " + obs.label(obs.observe(s, i)) +
                                 " but o^" + std::to_string(j + 1) + "(Ms) = " + obs.label(obs.observe(*ms, j));
          return res;
        }
      }
  }
  return res;
}

}  // namespace macc::mg
