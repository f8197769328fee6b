#include "macc/linear_ac.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "macc/nets.hpp"

namespace macc::linear_ac {

RepeatedCosineEnv::RepeatedCosineEnv(int n, bool one_step_episodes)
    : toy_(n), one_step_(one_step_episodes) {}

int RepeatedCosineEnv::step(int, const std::vector<int>& actions, Vec& rewards, Rng&) const {
  double r = toy_.reward(actions);
  rewards.assign(toy_.n(), r);  // the dense reward is shared
  return 0;
}

Vec RepeatedCosineEnv::critic_phi(int, const std::vector<int>& actions) const {
  Vec f;
  f.reserve(critic_feature_dim());
  for (int i = 0; i < toy_.n(); ++i) {
    f.push_back(toy_.values()[i]);
    f.push_back(actions[i] == 0 ? 1.0 : 0.0);
    f.push_back(actions[i] == 1 ? 1.0 : 0.0);
  }
  return f;
}

Vec RepeatedCosineEnv::actor_psi(int agent, int) const { return {toy_.values()[agent], 1.0}; }

double RepeatedCosineEnv::exact_value(const std::function<Vec(int, int)>& probs) const {
  std::vector<double> p_one(toy_.n());
  for (int i = 0; i < toy_.n(); ++i) p_one[i] = probs(i, 0)[1];
  return toy_.expected_reward(p_one);
}

LinearAcState LinearAcState::zeros(int n_agents, int k, int n_actions, int actor_dim) {
  LinearAcState s;
  s.omegas.assign(n_agents, Vec(k, 0.0));
  s.thetas.assign(n_agents, Matrix(n_actions, actor_dim, 0.0));
  return s;
}

double td_error(const Vec& omega, const Vec& phi_t, const Vec& phi_next, double reward,
                double gamma) {
  if (phi_t.size() != omega.size() || phi_next.size() != omega.size())
    throw std::invalid_argument("td_error: dimension mismatch");
  return reward + gamma * dot(phi_next, omega) - dot(phi_t, omega);
}

Vec actor_probs(const Matrix& theta, const Vec& psi) {
  Vec logits = theta.multiply(psi);
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    sum += l;
  }
  for (double& l : logits) l /= sum;
  return logits;
}

void critic_step(const LinearTrainEnv& env, LinearAcState& state, const SarsaTransition& tr,
                 double beta, const consensus::ConsensusMatrix& c) {
  Vec phi_t = env.critic_phi(tr.state, tr.actions);
  Vec phi_next = env.critic_phi(tr.next_state, tr.next_actions);
  std::vector<Vec> tilde = state.omegas;
  for (int i = 0; i < env.n_agents(); ++i) {
    double delta = td_error(state.omegas[i], phi_t, phi_next, tr.rewards[i], env.discount());
    axpy(beta * delta, phi_t, tilde[i]);  // grad of the linear critic is phi
  }
  state.omegas = consensus::apply_consensus(tilde, c);
}

namespace {

// Gradient of log pi(a | psi) for a softmax-linear actor: (e_a - pi) x psi.
void add_scaled_score(Matrix& target, const Vec& probs, const Vec& psi, int action, double scale) {
  for (int a = 0; a < target.rows(); ++a) {
    double coeff = ((a == action) ? 1.0 : 0.0) - probs[a];
    if (coeff == 0.0) continue;
    for (int f = 0; f < target.cols(); ++f) target(a, f) += scale * coeff * psi[f];
  }
}

std::vector<Vec> flatten_all(const std::vector<Matrix>& ms) {
  std::vector<Vec> out;
  out.reserve(ms.size());
  for (const Matrix& m : ms) out.push_back(m.data());
  return out;
}

void unflatten_all(std::vector<Matrix>& ms, const std::vector<Vec>& vs) {
  for (std::size_t i = 0; i < ms.size(); ++i) ms[i].data() = vs[i];
}

}  // namespace

void actor_step(const LinearTrainEnv& env, LinearAcState& state, const SarsaTransition& tr,
                double beta, const consensus::ConsensusMatrix& c) {
  Vec phi_t = env.critic_phi(tr.state, tr.actions);
  std::vector<Matrix> tilde = state.thetas;
  for (int i = 0; i < env.n_agents(); ++i) {
    double q = dot(phi_t, state.omegas[i]);
    Vec psi = env.actor_psi(i, tr.state);
    Vec probs = actor_probs(state.thetas[i], psi);
    if (probs[tr.actions[i]] < 1e-300)
      std::cerr << "actor_step: sampled action has vanishing probability; score clamped by the "
                   "softmax parameterization\n";
    add_scaled_score(tilde[i], probs, psi, tr.actions[i], beta * q);
  }
  auto mixed = consensus::apply_consensus(flatten_all(tilde), c);
  unflatten_all(state.thetas, mixed);
}

namespace {

// Kind-aware mixing; algebraically identical to multiplying by the matching
// consensus matrix but without the O(N^2) sweep for the common kinds.
struct Mixer {
  ConsensusKind kind;
  int pair_i = -1, pair_j = -1;

  static Mixer draw(ConsensusKind kind, int n, Rng& rng) {
    Mixer m{kind};
    if (kind == ConsensusKind::kRandomPairGossip) {
      m.pair_i = rng.uniform_int(n);
      m.pair_j = rng.uniform_int(n - 1);
      if (m.pair_j >= m.pair_i) ++m.pair_j;
    }
    return m;
  }

  void apply(std::vector<Vec>& params) const {
    switch (kind) {
      case ConsensusKind::kIdentity:
        return;
      case ConsensusKind::kUniform: {
        const int n = static_cast<int>(params.size());
        Vec mean(params[0].size(), 0.0);
        for (const Vec& p : params) axpy(1.0 / n, p, mean);
        for (Vec& p : params) p = mean;
        return;
      }
      case ConsensusKind::kRandomPairGossip: {
        Vec avg = params[pair_i];
        axpy(1.0, params[pair_j], avg);
        for (double& x : avg) x *= 0.5;
        params[pair_i] = avg;
        params[pair_j] = std::move(avg);
        return;
      }
    }
  }

  void apply(std::vector<Matrix>& params) const {
    std::vector<Vec> flat = flatten_all_fwd(params);
    apply(flat);
    for (std::size_t i = 0; i < params.size(); ++i) params[i].data() = flat[i];
  }

  static std::vector<Vec> flatten_all_fwd(const std::vector<Matrix>& ms) {
    std::vector<Vec> out;
    out.reserve(ms.size());
    for (const Matrix& m : ms) out.push_back(m.data());
    return out;
  }
};

std::vector<int> sample_joint_action(const LinearTrainEnv& env, const LinearAcState& state,
                                     int s, Rng& rng) {
  std::vector<int> actions(env.n_agents());
  for (int i = 0; i < env.n_agents(); ++i) {
    Vec probs = actor_probs(state.thetas[i], env.actor_psi(i, s));
    actions[i] = rng.categorical(probs);
  }
  return actions;
}

// Enumerates all joint actions of a small single-state environment.
std::vector<std::vector<int>> enumerate_joint_actions(const LinearTrainEnv& env) {
  long long total = 1;
  for (int i = 0; i < env.n_agents(); ++i) {
    total *= env.n_actions();
    if (total > 4096)
      throw std::invalid_argument("expected-update mode needs an enumerable joint action space");
  }
  std::vector<std::vector<int>> out;
  std::vector<int> a(env.n_agents(), 0);
  while (true) {
    out.push_back(a);
    int i = env.n_agents() - 1;
    while (i >= 0) {
      if (++a[i] < env.n_actions()) break;
      a[i] = 0;
      --i;
    }
    if (i < 0) break;
  }
  return out;
}

}  // namespace

TrainResult train(const LinearTrainEnv& env, const TrainConfig& cfg) {
  const int n = env.n_agents();
  const int k = env.critic_feature_dim();
  Rng rng(cfg.seed);

  TrainResult result;
  result.state = LinearAcState::zeros(n, k, env.n_actions(), env.actor_feature_dim());
  LinearAcState& st = result.state;

  const bool critic_adam = cfg.critic_schedule.kind == consensus::ScheduleKind::kAdaptiveMoment;
  const bool actor_adam = cfg.actor_schedule.kind == consensus::ScheduleKind::kAdaptiveMoment;
  std::vector<nets::AdamState> critic_opt, actor_opt;
  for (int i = 0; i < n; ++i) {
    critic_opt.emplace_back(k, cfg.critic_schedule.scale);
    actor_opt.emplace_back(env.n_actions() * env.actor_feature_dim(), cfg.actor_schedule.scale);
  }

  if (cfg.mode == UpdateMode::kExpected && env.n_states() != 1)
    throw std::invalid_argument("train: expected-update mode supports single-state environments");

  std::vector<std::vector<int>> joint_actions;
  if (cfg.mode == UpdateMode::kExpected) joint_actions = enumerate_joint_actions(env);

  auto probs_of = [&](int agent, int s) { return actor_probs(st.thetas[agent], env.actor_psi(agent, s)); };

  auto evaluate_now = [&](long long step) {
    MetricsRow row;
    row.step = step;
    row.j = env.exact_value(probs_of);
    row.omega_disagreement = consensus::disagreement(st.omegas).norm;
    row.theta_disagreement = consensus::disagreement(flatten_all(st.thetas)).norm;
    if (cfg.oracle) {
      Vec target = cfg.oracle(st);
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        Vec diff = st.omegas[i];
        axpy(-1.0, target, diff);
        worst = std::max(worst, norm2(diff));
      }
      row.omega_oracle_dist = worst;
    } else {
      row.omega_oracle_dist = std::numeric_limits<double>::quiet_NaN();
    }
    result.rows.push_back(row);
  };

  int s = env.initial_state(rng);
  std::vector<int> actions = sample_joint_action(env, st, s, rng);

  for (long long t = 0; t < cfg.steps; ++t) {
    st.t = t;
    double beta_w = cfg.critic_schedule.beta(t);
    double beta_th = cfg.actor_schedule.beta(t);
    auto c_w = Mixer::draw(cfg.critic_consensus, n, rng);
    auto c_th = Mixer::draw(cfg.actor_consensus, n, rng);

    if (cfg.mode == UpdateMode::kSampled) {
      Vec rewards;
      int next_s = env.step(s, actions, rewards, rng);
      std::vector<int> next_actions = sample_joint_action(env, st, next_s, rng);
      SarsaTransition tr{s, actions, rewards, next_s, next_actions};

      Vec phi_t = env.critic_phi(tr.state, tr.actions);
      Vec phi_next = env.critic_phi(tr.next_state, tr.next_actions);
      // The actor weight is the critic value at the pre-update weights.
      Vec q_at_t(n, 0.0);
      for (int i = 0; i < n; ++i) q_at_t[i] = dot(phi_t, st.omegas[i]);
      std::vector<Vec> tilde = st.omegas;
      const bool ends = env.one_step_episodes();
      for (int i = 0; i < n; ++i) {
        double next_v = ends ? 0.0 : dot(phi_next, st.omegas[i]);
        double delta = tr.rewards[i] + env.discount() * next_v - dot(phi_t, st.omegas[i]);
        if (critic_adam) {
          Vec grad = scaled(phi_t, -delta);  // ascend the TD direction
          critic_opt[i].step(tilde[i], grad);
        } else {
          axpy(beta_w * delta, phi_t, tilde[i]);
        }
      }
      c_w.apply(tilde);
      st.omegas = std::move(tilde);

      if (cfg.train_actor) {
        std::vector<Matrix> tilde_th = st.thetas;
        for (int i = 0; i < n; ++i) {
          double q = q_at_t[i];
          Vec psi = env.actor_psi(i, tr.state);
          Vec probs = actor_probs(st.thetas[i], psi);
          if (actor_adam) {
            Matrix grad(env.n_actions(), env.actor_feature_dim(), 0.0);
            add_scaled_score(grad, probs, psi, tr.actions[i], -q);  // descend the negation
            Vec flat = tilde_th[i].data();
            actor_opt[i].step(flat, grad.data());
            tilde_th[i].data() = flat;
          } else {
            add_scaled_score(tilde_th[i], probs, psi, tr.actions[i], beta_th * q);
          }
        }
        c_th.apply(tilde_th);
        st.thetas = std::move(tilde_th);
      }

      s = tr.next_state;
      actions = std::move(next_actions);
    } else {
      // Expected update: average the TD direction over the joint action and
      // successor action distributions of the current policy.
      std::vector<Vec> pi_local(n);
      for (int i = 0; i < n; ++i) pi_local[i] = probs_of(i, 0);
      std::vector<double> pa(joint_actions.size());
      std::vector<Vec> phis(joint_actions.size());
      Vec mean_rewards(n, 0.0);
      std::vector<Vec> rewards_of(joint_actions.size());
      Rng dummy(0);
      for (std::size_t ai = 0; ai < joint_actions.size(); ++ai) {
        double p = 1.0;
        for (int i = 0; i < n; ++i) p *= pi_local[i][joint_actions[ai][i]];
        pa[ai] = p;
        phis[ai] = env.critic_phi(0, joint_actions[ai]);
        Vec r;
        env.step(0, joint_actions[ai], r, dummy);
        rewards_of[ai] = std::move(r);
      }
      std::vector<Vec> tilde = st.omegas;
      for (int i = 0; i < n; ++i) {
        double vbar = 0.0;
        if (!env.one_step_episodes())
          for (std::size_t ai = 0; ai < joint_actions.size(); ++ai)
            vbar += pa[ai] * dot(phis[ai], st.omegas[i]);
        Vec g(k, 0.0);
        for (std::size_t ai = 0; ai < joint_actions.size(); ++ai) {
          if (pa[ai] == 0.0) continue;
          double delta =
              rewards_of[ai][i] + env.discount() * vbar - dot(phis[ai], st.omegas[i]);
          axpy(pa[ai] * delta, phis[ai], g);
        }
        if (critic_adam) {
          Vec grad = scaled(g, -1.0);
          critic_opt[i].step(tilde[i], grad);
        } else {
          axpy(beta_w, g, tilde[i]);
        }
      }
      c_w.apply(tilde);
      st.omegas = std::move(tilde);

      if (cfg.train_actor) {
        std::vector<Matrix> tilde_th = st.thetas;
        for (int i = 0; i < n; ++i) {
          Vec psi = env.actor_psi(i, 0);
          Matrix g(env.n_actions(), env.actor_feature_dim(), 0.0);
          for (std::size_t ai = 0; ai < joint_actions.size(); ++ai) {
            if (pa[ai] == 0.0) continue;
            double q = dot(phis[ai], st.omegas[i]);
            add_scaled_score(g, pi_local[i], psi, joint_actions[ai][i], pa[ai] * q);
          }
          if (actor_adam) {
            Vec flat = tilde_th[i].data();
            Vec grad = scaled(g.data(), -1.0);
            actor_opt[i].step(flat, grad);
            tilde_th[i].data() = flat;
          } else {
            for (std::size_t d = 0; d < g.data().size(); ++d)
              tilde_th[i].data()[d] += beta_th * g.data()[d];
          }
        }
        c_th.apply(tilde_th);
        st.thetas = std::move(tilde_th);
      }
    }

    for (int i = 0; i < n; ++i)
      if (norm2(st.omegas[i]) > cfg.divergence_guard) {
        result.aborted = true;
        result.abort_reason = "critic weights exceeded the stability guard (" +
                              std::to_string(cfg.divergence_guard) + ") at step " +
                              std::to_string(t) + "; the updates are assumed stable, not enforced";
        evaluate_now(t + 1);
        return result;
      }

    if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.steps) evaluate_now(t + 1);
  }
  return result;
}

Vec mspbe_weights_for_policy(const LinearTrainEnv& env, const LinearAcState& state) {
  if (env.n_states() != 1)
    throw std::invalid_argument("mspbe_weights_for_policy: single-state environments only");
  auto joint_actions = enumerate_joint_actions(env);
  const int n = env.n_agents();
  const int k = env.critic_feature_dim();
  std::vector<Vec> pi_local(n);
  for (int i = 0; i < n; ++i) pi_local[i] = actor_probs(state.thetas[i], env.actor_psi(i, 0));

  std::vector<double> pa(joint_actions.size());
  std::vector<Vec> phis(joint_actions.size());
  Vec phibar(k, 0.0);
  Rng dummy(0);
  std::vector<double> rbar(joint_actions.size());
  for (std::size_t ai = 0; ai < joint_actions.size(); ++ai) {
    double p = 1.0;
    for (int i = 0; i < n; ++i) p *= pi_local[i][joint_actions[ai][i]];
    pa[ai] = p;
    phis[ai] = env.critic_phi(0, joint_actions[ai]);
    axpy(p, phis[ai], phibar);
    Vec r;
    env.step(0, joint_actions[ai], r, dummy);
    double mean = 0.0;
    for (double x : r) mean += x;
    rbar[ai] = mean / n;
  }

  Matrix a_mat(k, k, 0.0);
  Vec b(k, 0.0);
  const double gamma = env.one_step_episodes() ? 0.0 : env.discount();
  for (std::size_t ai = 0; ai < joint_actions.size(); ++ai) {
    if (pa[ai] == 0.0) continue;
    for (int r = 0; r < k; ++r) {
      double row = pa[ai] * phis[ai][r];
      if (row == 0.0) continue;
      for (int c = 0; c < k; ++c) a_mat(r, c) += row * (phis[ai][c] - gamma * phibar[c]);
    }
    axpy(pa[ai] * rbar[ai], phis[ai], b);
  }

  // Minimum-norm solve on the span of A's columns (the features the policy
  // actually visits).
  std::vector<Vec> cols;
  for (int c = 0; c < k; ++c) {
    Vec col(k);
    for (int r = 0; r < k; ++r) col[r] = a_mat(r, c);
    cols.push_back(std::move(col));
  }
  auto basis = orthonormal_basis(cols, 1e-10);
  const int rank = static_cast<int>(basis.size());
  Matrix reduced(rank, rank, 0.0);
  Vec rhs(rank, 0.0);
  for (int i = 0; i < rank; ++i) {
    Vec aq = a_mat.multiply(basis[i]);
    for (int j = 0; j < rank; ++j) reduced(j, i) = dot(basis[j], aq);
    rhs[i] = dot(basis[i], b);
  }
  auto lin = solve_linear(reduced, rhs);
  Vec omega(k, 0.0);
  for (int i = 0; i < rank; ++i) axpy(lin.x[i], basis[i], omega);
  return omega;
}

}  // namespace macc::linear_ac
