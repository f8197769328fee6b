#include "macc/exact.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace macc::exact {

FactoredPolicy::FactoredPolicy(PolicyKeying keying, std::vector<Matrix> per_agent, bool shared,
                               const mg::ObservationMap* obs)
    : keying_(keying), shared_(shared), tables_(std::move(per_agent)), obs_(obs) {
  if (keying_ == PolicyKeying::kByObservation && obs_ == nullptr)
    throw std::invalid_argument("FactoredPolicy: observation keying needs an ObservationMap");
  for (const Matrix& t : tables_)
    for (int r = 0; r < t.rows(); ++r) {
      double sum = 0.0;
      for (int c = 0; c < t.cols(); ++c) {
        if (t(r, c) < -1e-15) throw std::invalid_argument("FactoredPolicy: negative probability");
        sum += t(r, c);
      }
      if (std::fabs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("FactoredPolicy: row does not sum to one");
    }
  if (shared_) {
    for (std::size_t i = 1; i < tables_.size(); ++i)
      if (tables_[i].data() != tables_[0].data())
        throw std::invalid_argument("FactoredPolicy: shared flag set but tables differ");
  }
}

FactoredPolicy FactoredPolicy::uniform(const mg::FiniteMG& game, PolicyKeying keying,
                                       const mg::ObservationMap* obs) {
  std::vector<Matrix> tables;
  for (int i = 0; i < game.n_agents(); ++i) {
    int keys = (keying == PolicyKeying::kByState) ? game.n_states() : obs->n_observations();
    int acts = static_cast<int>(game.local_action_space(i).size());
    Matrix t(keys, acts, 1.0 / acts);
    tables.push_back(std::move(t));
  }
  return FactoredPolicy(keying, std::move(tables), /*shared=*/false, obs);
}

int FactoredPolicy::key_of(const mg::FiniteMG& game, int agent, int state) const {
  (void)game;
  return keying_ == PolicyKeying::kByState ? state : obs_->observe(state, agent);
}

double FactoredPolicy::local_prob(const mg::FiniteMG& game, int agent, int state,
                                  int local_action) const {
  return tables_[agent](key_of(game, agent, state), local_action);
}

double FactoredPolicy::joint_prob(const mg::FiniteMG& game, int state, int action) const {
  double p = 1.0;
  const auto& tuple = game.action(action);
  for (int i = 0; i < game.n_agents(); ++i) {
    const auto& space = game.local_action_space(i);
    int local = static_cast<int>(std::find(space.begin(), space.end(), tuple[i]) - space.begin());
    p *= local_prob(game, i, state, local);
  }
  return p;
}

namespace {

bool strongly_connected(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  if (n == 0) return false;
  auto reach_all = [&](const std::vector<std::vector<int>>& g) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : g[u])
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
    }
    return count == n;
  };
  std::vector<std::vector<int>> rev(n);
  for (int u = 0; u < n; ++u)
    for (int v : adj[u]) rev[v].push_back(u);
  return reach_all(adj) && reach_all(rev);
}

}  // namespace

EvalResult evaluate(const mg::FiniteMG& game, const FactoredPolicy& policy) {
  const int n_states = game.n_states();
  const int n_actions = game.n_actions();
  const double gamma = game.discount();

  std::vector<int> nt;  // non-terminal states
  std::vector<int> nt_index(n_states, -1);
  for (int s = 0; s < n_states; ++s)
    if (!game.is_terminal(s)) {
      nt_index[s] = static_cast<int>(nt.size());
      nt.push_back(s);
    }
  const int m = static_cast<int>(nt.size());
  if (m == 0) throw std::invalid_argument("evaluate: no non-terminal states");

  bool episodic = m < n_states;
  if (!episodic && gamma >= 1.0)
    throw std::runtime_error("evaluate: discount 1 with a non-episodic game gives a singular system");

  // P^pi over non-terminal states and the policy-weighted mean reward.
  Matrix p_pi(m, m, 0.0);
  Vec r_pi(m, 0.0);
  Matrix joint(m, n_actions, 0.0);
  for (int si = 0; si < m; ++si) {
    int s = nt[si];
    for (int a = 0; a < n_actions; ++a) {
      double pa = policy.joint_prob(game, s, a);
      joint(si, a) = pa;
      if (pa == 0.0) continue;
      r_pi[si] += pa * game.mean_reward(s, a);
      for (const auto& [s2, p] : game.transition_row(s, a))
        if (nt_index[s2] >= 0) p_pi(si, nt_index[s2]) += pa * p;
    }
  }

  Matrix system(m, m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) system(i, j) = (i == j ? 1.0 : 0.0) - gamma * p_pi(i, j);
  SolveResult vsol = solve_linear(system, r_pi);

  EvalResult res;
  res.condition_warning = vsol.condition_warning;
  res.v.assign(n_states, 0.0);
  for (int si = 0; si < m; ++si) res.v[nt[si]] = vsol.x[si];

  res.q = Matrix(n_states, n_actions, 0.0);
  for (int si = 0; si < m; ++si) {
    int s = nt[si];
    for (int a = 0; a < n_actions; ++a) {
      double q = game.mean_reward(s, a);
      for (const auto& [s2, p] : game.transition_row(s, a)) q += gamma * p * res.v[s2];
      res.q(s, a) = q;
    }
  }

  res.j = 0.0;
  for (int s = 0; s < n_states; ++s) res.j += game.initial_dist()[s] * res.v[s];

  // Weighting distribution.
  std::vector<std::vector<int>> adj(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (p_pi(i, j) > 0.0) adj[i].push_back(j);
  bool can_use_stationary = !episodic && strongly_connected(adj);

  Vec state_weight(m, 0.0);
  if (can_use_stationary) {
    // pi^T P = pi^T with sum 1: overwrite one equation with the normalizer.
    Matrix a(m, m, 0.0);
    Vec rhs(m, 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) a(i, j) = p_pi(j, i) - (i == j ? 1.0 : 0.0);
    for (int j = 0; j < m; ++j) a(m - 1, j) = 1.0;
    rhs[m - 1] = 1.0;
    SolveResult st = solve_linear(a, rhs);
    state_weight = st.x;
    res.stationary_distribution = true;
  } else {
    // Discounted occupancy x = mu0 + gamma P^pi^T x, normalized.
    Matrix a(m, m, 0.0);
    Vec rhs(m, 0.0);
    for (int i = 0; i < m; ++i) {
      rhs[i] = game.initial_dist()[nt[i]];
      for (int j = 0; j < m; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - gamma * p_pi(j, i);
    }
    SolveResult occ = solve_linear(a, rhs);
    state_weight = occ.x;
    res.stationary_distribution = false;
  }
  double total = 0.0;
  for (double w : state_weight) total += w;
  if (total <= 0.0) throw std::runtime_error("evaluate: degenerate weighting distribution");

  res.d = Matrix(n_states, n_actions, 0.0);
  for (int si = 0; si < m; ++si)
    for (int a = 0; a < n_actions; ++a) res.d(nt[si], a) = state_weight[si] / total * joint(si, a);
  return res;
}

namespace {

bool is_one_step(const mg::FiniteMG& game) {
  for (int s = 0; s < game.n_states(); ++s) {
    if (game.is_terminal(s)) continue;
    for (int a = 0; a < game.n_actions(); ++a)
      for (const auto& [s2, p] : game.transition_row(s, a))
        if (p > 0.0 && !game.is_terminal(s2)) return false;
  }
  return true;
}

bool common_action_space(const mg::FiniteMG& game) {
  for (int i = 1; i < game.n_agents(); ++i) {
    auto a = game.local_action_space(0);
    auto b = game.local_action_space(i);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) return false;
  }
  return true;
}

int local_action_index(const mg::FiniteMG& game, int agent, int action) {
  const auto& space = game.local_action_space(agent);
  int vid = game.action(action)[agent];
  return static_cast<int>(std::find(space.begin(), space.end(), vid) - space.begin());
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

OptimumResult brute_force_optimum(const mg::FiniteMG& game, const mg::ObservationMap& obs,
                                  PolicyClass cls, long long budget) {
  obs.validate(game);
  if (!is_one_step(game))
    throw std::runtime_error(
        "brute_force_optimum: only one-step games are supported by the assignment search");
  if (cls == PolicyClass::kObsBasedShared && !common_action_space(game))
    throw std::invalid_argument("brute_force_optimum: shared policies need equal local action spaces");

  const int n = game.n_agents();

  // States that carry initial weight are the only ones that matter for J.
  std::vector<int> support;
  for (int s = 0; s < game.n_states(); ++s)
    if (!game.is_terminal(s) && game.initial_dist()[s] > 0.0) support.push_back(s);
  if (support.empty()) throw std::runtime_error("brute_force_optimum: initial weight sits on terminal states");

  // Variables of the assignment problem.
  std::map<std::pair<int, int>, int> var_of;  // (agent or -1, key) -> var
  auto var_key = [&](int agent, int state) -> std::pair<int, int> {
    switch (cls) {
      case PolicyClass::kStateBased:
        return {agent, state};
      case PolicyClass::kObsBased:
        return {agent, obs.observe(state, agent)};
      case PolicyClass::kObsBasedShared:
        return {-1, obs.observe(state, agent)};
    }
    throw std::logic_error("unreachable");
  };
  std::vector<int> var_arity;
  std::vector<int> var_agent;
  for (int s : support)
    for (int i = 0; i < n; ++i) {
      auto key = var_key(i, s);
      if (!var_of.count(key)) {
        var_of[key] = static_cast<int>(var_arity.size());
        var_arity.push_back(static_cast<int>(game.local_action_space(cls == PolicyClass::kObsBasedShared ? 0 : i).size()));
        var_agent.push_back(key.first);
      }
    }
  const int n_vars = static_cast<int>(var_arity.size());

  UnionFind uf(n_vars);
  for (int s : support)
    for (int i = 1; i < n; ++i) uf.unite(var_of[var_key(0, s)], var_of[var_key(i, s)]);

  std::map<int, std::vector<int>> comp_states;  // component root -> states
  for (int s : support) comp_states[uf.find(var_of[var_key(0, s)])].push_back(s);

  std::vector<int> assignment(n_vars, 0);

  // Evaluate one state's initial-weighted reward under the assignment.
  auto state_value = [&](int s) {
    std::vector<int> tuple(n);
    for (int i = 0; i < n; ++i) {
      int local = assignment[var_of.at(var_key(i, s))];
      const auto& space = game.local_action_space(i);
      tuple[i] = space[local];
    }
    auto a = game.find_action(tuple);
    if (!a) throw std::logic_error("brute_force_optimum: assembled action missing");
    return game.initial_dist()[s] * game.mean_reward(s, *a);
  };

  for (auto& [root, states] : comp_states) {
    std::vector<int> vars;
    for (int v = 0; v < n_vars; ++v)
      if (uf.find(v) == root) vars.push_back(v);
    long long combos = 1;
    for (int v : vars) {
      combos *= var_arity[v];
      if (combos > budget)
        throw mg::BudgetExceeded("brute_force_optimum: component with " +
                                 std::to_string(vars.size()) + " variables exceeds the budget");
    }
    std::vector<int> best(vars.size(), 0), idx(vars.size(), 0);
    double best_value = -1e300;
    while (true) {
      for (std::size_t t = 0; t < vars.size(); ++t) assignment[vars[t]] = idx[t];
      double value = 0.0;
      for (int s : states) value += state_value(s);
      if (value > best_value) {
        best_value = value;
        best = idx;
      }
      int t = static_cast<int>(vars.size()) - 1;
      while (t >= 0) {
        if (++idx[t] < var_arity[vars[t]]) break;
        idx[t] = 0;
        --t;
      }
      if (t < 0) break;
    }
    for (std::size_t t = 0; t < vars.size(); ++t) assignment[vars[t]] = best[t];
  }

  // Assemble the deterministic argmax policy over the full key space.
  PolicyKeying keying =
      (cls == PolicyClass::kStateBased) ? PolicyKeying::kByState : PolicyKeying::kByObservation;
  int n_keys = (keying == PolicyKeying::kByState) ? game.n_states() : obs.n_observations();
  std::vector<Matrix> tables;
  for (int i = 0; i < n; ++i) {
    Matrix t(n_keys, static_cast<int>(game.local_action_space(i).size()), 0.0);
    for (int r = 0; r < n_keys; ++r) t(r, 0) = 1.0;
    tables.push_back(std::move(t));
  }
  for (int s : support)
    for (int i = 0; i < n; ++i) {
      int key = (keying == PolicyKeying::kByState) ? s : obs.observe(s, i);
      int local = assignment[var_of.at(var_key(i, s))];
      // Shared policies accumulate every agent's keys into one common table.
      int target = (cls == PolicyClass::kObsBasedShared) ? 0 : i;
      for (int c = 0; c < tables[target].cols(); ++c) tables[target](key, c) = 0.0;
      tables[target](key, local) = 1.0;
    }
  if (cls == PolicyClass::kObsBasedShared)
    for (int i = 1; i < n; ++i) tables[i] = tables[0];

  FactoredPolicy det_policy(keying, std::move(tables), cls == PolicyClass::kObsBasedShared, &obs);

  // Deterministic maximum, re-evaluated along one shared accumulation path so
  // equal-by-value maxima across policy classes compare exactly.
  double det_j = 0.0;
  for (int s : support) {
    std::vector<int> tuple(n);
    for (int i = 0; i < n; ++i) {
      const auto& space = game.local_action_space(i);
      int key = det_policy.key_of(game, i, s);
      int local = 0;
      for (int c = 0; c < static_cast<int>(space.size()); ++c)
        if (det_policy.table(i)(key, c) > 0.5) local = c;
      tuple[i] = space[local];
    }
    det_j += game.initial_dist()[s] * game.mean_reward(s, *game.find_action(tuple));
  }

  OptimumResult result{det_j, det_policy, false, -1.0};

  // Stochastic one-parameter search for shared policies when every agent sees
  // one common observation at every supported state and actions are binary.
  if (cls == PolicyClass::kObsBasedShared && game.local_action_space(0).size() == 2) {
    bool single_shared_obs = true;
    int shared_obs = obs.observe(support[0], 0);
    for (int s : support)
      for (int i = 0; i < n; ++i) single_shared_obs &= (obs.observe(s, i) == shared_obs);
    if (single_shared_obs) {
      auto j_of_p = [&](double p) {
        double j = 0.0;
        for (int s : support) {
          for (int a = 0; a < game.n_actions(); ++a) {
            double prob = 1.0;
            for (int i = 0; i < n; ++i)
              prob *= (local_action_index(game, i, a) == 1) ? p : (1.0 - p);
            j += game.initial_dist()[s] * prob * game.mean_reward(s, a);
          }
        }
        return j;
      };
      double best_p = 0.0, best_j = j_of_p(0.0);
      for (int g = 1; g <= 100; ++g) {
        double p = g / 100.0;
        double j = j_of_p(p);
        if (j > best_j) {
          best_j = j;
          best_p = p;
        }
      }
      // Golden-section refinement around the best grid point.
      double lo = std::max(0.0, best_p - 0.01), hi = std::min(1.0, best_p + 0.01);
      const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
      double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
      double f1 = j_of_p(x1), f2 = j_of_p(x2);
      while (hi - lo > 1e-10) {
        if (f1 < f2) {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + phi * (hi - lo);
          f2 = j_of_p(x2);
        } else {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - phi * (hi - lo);
          f1 = j_of_p(x1);
        }
      }
      double p_star = 0.5 * (lo + hi);
      double j_star = j_of_p(p_star);
      if (j_star > result.j) {
        result.j = j_star;
        result.used_stochastic_search = true;
        result.stochastic_p = p_star;
        Matrix t(n_keys, 2, 0.0);
        for (int r = 0; r < n_keys; ++r) {
          t(r, 0) = 1.0 - p_star;
          t(r, 1) = p_star;
        }
        std::vector<Matrix> stoch_tables(n, t);
        result.policy = FactoredPolicy(PolicyKeying::kByObservation, std::move(stoch_tables), true, &obs);
      }
    }
  }
  return result;
}

bool TheoremOneVerdict::all_equal(double tol) const {
  return std::fabs(state_based - obs_based) <= tol && std::fabs(obs_based - obs_shared) <= tol;
}

TheoremOneVerdict policy_class_maxima(const mg::FiniteMG& game, const mg::ObservationMap& obs,
                                      long long budget) {
  TheoremOneVerdict v;
  v.state_based = brute_force_optimum(game, obs, PolicyClass::kStateBased, budget).j;
  v.obs_based = brute_force_optimum(game, obs, PolicyClass::kObsBased, budget).j;
  auto shared = brute_force_optimum(game, obs, PolicyClass::kObsBasedShared, budget);
  v.obs_shared = shared.j;
  v.shared_used_stochastic = shared.used_stochastic_search;
  v.shared_p = shared.stochastic_p;
  return v;
}

FeatureMap::FeatureMap(const mg::FiniteMG& game,
                       std::function<Vec(const mg::FiniteMG&, int s, int a)> phi, int k) {
  k_ = k;
  for (int s = 0; s < game.n_states(); ++s) {
    if (game.is_terminal(s)) continue;
    for (int a = 0; a < game.n_actions(); ++a) {
      Vec f = phi(game, s, a);
      if (static_cast<int>(f.size()) != k)
        throw std::invalid_argument("FeatureMap: feature arity mismatch");
      for (double x : f)
        if (!std::isfinite(x)) throw std::invalid_argument("FeatureMap: non-finite feature");
      rows_.emplace_back(s, a);
      phis_.push_back(std::move(f));
    }
  }
  finish(game);
}

void FeatureMap::finish(const mg::FiniteMG& game) {
  row_of_.assign(game.n_states(), std::vector<int>(game.n_actions(), -1));
  phi_matrix_ = Matrix(static_cast<int>(rows_.size()), k_, 0.0);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    row_of_[rows_[r].first][rows_[r].second] = static_cast<int>(r);
    for (int c = 0; c < k_; ++c) phi_matrix_(static_cast<int>(r), c) = phis_[r][c];
  }
  rank_ = column_rank(phi_matrix_);
}

FeatureMap FeatureMap::tabular(const mg::FiniteMG& game) {
  int rows = 0;
  for (int s = 0; s < game.n_states(); ++s)
    if (!game.is_terminal(s)) rows += game.n_actions();
  int k = rows;
  int counter = 0;
  std::map<std::pair<int, int>, int> index;
  for (int s = 0; s < game.n_states(); ++s) {
    if (game.is_terminal(s)) continue;
    for (int a = 0; a < game.n_actions(); ++a) index[{s, a}] = counter++;
  }
  return FeatureMap(
      game,
      [index, k](const mg::FiniteMG&, int s, int a) {
        Vec f(k, 0.0);
        f[index.at({s, a})] = 1.0;
        return f;
      },
      k);
}

FeatureMap FeatureMap::cosine_concat(const mg::FiniteMG& game, bool drop_duplicate_constant_columns) {
  const int n = game.n_agents();
  const int n_acts = static_cast<int>(game.local_action_space(0).size());
  const int k_full = n * (1 + n_acts);
  auto phi_full = [n, n_acts](const mg::FiniteMG& g, int s, int a) {
    Vec f;
    f.reserve(n * (1 + n_acts));
    for (int i = 0; i < n; ++i) {
      f.push_back(std::stod(g.value_label(g.state(s)[i])));
      const auto& space = g.local_action_space(i);
      int vid = g.action(a)[i];
      for (int c = 0; c < n_acts; ++c) f.push_back(space[c] == vid ? 1.0 : 0.0);
    }
    return f;
  };
  FeatureMap full(game, phi_full, k_full);
  if (!drop_duplicate_constant_columns) return full;

  // Constant columns carry no information beyond a bias; keep the first
  // nonzero one as the bias and drop the rest.
  std::vector<int> keep;
  std::vector<int> dropped;
  bool bias_kept = false;
  for (int c = 0; c < k_full; ++c) {
    double lo = 1e300, hi = -1e300;
    for (int r = 0; r < full.n_rows(); ++r) {
      lo = std::min(lo, full.matrix()(r, c));
      hi = std::max(hi, full.matrix()(r, c));
    }
    bool constant = (hi - lo) <= 1e-12;
    if (!constant) {
      keep.push_back(c);
    } else if (!bias_kept && std::fabs(hi) > 1e-12) {
      bias_kept = true;
      keep.push_back(c);
    } else {
      dropped.push_back(c);
    }
  }
  if (dropped.empty()) return full;

  FeatureMap reduced(
      game,
      [phi_full, keep](const mg::FiniteMG& g, int s, int a) {
        Vec f0 = phi_full(g, s, a);
        Vec f;
        f.reserve(keep.size());
        for (int c : keep) f.push_back(f0[c]);
        return f;
      },
      static_cast<int>(keep.size()));
  reduced.dropped_ = dropped;
  return reduced;
}

int FeatureMap::row_index(int s, int a) const { return row_of_[s][a]; }

const Vec& FeatureMap::phi(int s, int a) const {
  int r = row_of_[s][a];
  if (r < 0) throw std::invalid_argument("FeatureMap::phi: terminal state has no features");
  return phis_[r];
}

double FeatureMap::max_abs_entry() const {
  double m = 0.0;
  for (double x : phi_matrix_.data()) m = std::max(m, std::fabs(x));
  return m;
}

MspbeSolution solve_mspbe(const mg::FiniteMG& game, const FactoredPolicy& policy,
                          const FeatureMap& features, const MspbeOptions& opts) {
  if (!features.full_column_rank() && !opts.allow_rank_deficient)
    throw std::runtime_error(
        "solve_mspbe: feature matrix is column-rank deficient (effective rank " +
        std::to_string(features.effective_rank()) + " < " + std::to_string(features.k()) +
        "); full column rank is required (assumption 2: linear features of full rank)");

  EvalResult eval = evaluate(game, policy);
  const int k = features.k();
  const double gamma = game.discount();

  // Expected next feature under policy: sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s') phi(s',a').
  Matrix a_mat(k, k, 0.0);
  Vec b(k, 0.0);
  for (int s = 0; s < game.n_states(); ++s) {
    if (game.is_terminal(s)) continue;
    for (int a = 0; a < game.n_actions(); ++a) {
      double w = eval.d(s, a);
      if (w == 0.0) continue;
      const Vec& f = features.phi(s, a);
      Vec next(k, 0.0);
      for (const auto& [s2, p] : game.transition_row(s, a)) {
        if (game.is_terminal(s2)) continue;
        for (int a2 = 0; a2 < game.n_actions(); ++a2) {
          double pa2 = policy.joint_prob(game, s2, a2);
          if (pa2 == 0.0) continue;
          axpy(p * pa2, features.phi(s2, a2), next);
        }
      }
      for (int r = 0; r < k; ++r) {
        double row = w * f[r];
        if (row == 0.0) continue;
        for (int c = 0; c < k; ++c) a_mat(r, c) += row * (f[c] - gamma * next[c]);
      }
      axpy(w * game.mean_reward(s, a), f, b);
    }
  }

  MspbeSolution sol;
  sol.effective_rank = features.effective_rank();
  sol.rank_deficient = !features.full_column_rank();

  if (!sol.rank_deficient) {
    SolveResult lin = solve_linear(a_mat, b, opts.warn_threshold);
    sol.omega = lin.x;
    sol.condition_warning = lin.condition_warning;
  } else {
    // Solve on the span of the weighted features (the range of A); the
    // returned omega is the minimum-norm representative, which is also what
    // zero-initialized TD iterates converge to.
    std::vector<Vec> cols;
    for (int c = 0; c < k; ++c) {
      Vec col(k);
      for (int r = 0; r < k; ++r) col[r] = a_mat(r, c);
      cols.push_back(std::move(col));
    }
    std::vector<Vec> basis = orthonormal_basis(cols, 1e-10);
    const int r = static_cast<int>(basis.size());
    if (r == 0) throw std::runtime_error("solve_mspbe: zero feature span");
    Matrix reduced(r, r, 0.0);
    Vec rhs(r, 0.0);
    for (int i = 0; i < r; ++i) {
      Vec aq = a_mat.multiply(basis[i]);
      for (int j = 0; j < r; ++j) reduced(j, i) = dot(basis[j], aq);
      rhs[i] = dot(basis[i], b);
    }
    SolveResult lin = solve_linear(reduced, rhs, opts.warn_threshold);
    sol.condition_warning = lin.condition_warning;
    sol.omega.assign(k, 0.0);
    for (int i = 0; i < r; ++i) axpy(lin.x[i], basis[i], sol.omega);
  }

  Vec defect = b;
  Vec aw = a_mat.multiply(sol.omega);
  for (int i = 0; i < k; ++i) defect[i] -= aw[i];
  sol.residual = norm2(defect);
  return sol;
}

}  // namespace macc::exact
