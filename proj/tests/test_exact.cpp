#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "macc/envs.hpp"
#include "macc/exact.hpp"

using namespace macc;
using doctest::Approx;
using exact::FactoredPolicy;
using exact::PolicyClass;
using exact::PolicyKeying;

namespace {

// Single-state, single-action chain with reward 1.
envs::FiniteEnvBundle one_state_game(double gamma) {
  mg::MgBuilder b(1, gamma);
  b.local_state_space_all({"s"});
  b.local_action_space_all({"a"});
  b.finalize_actions();
  int s = b.add_state({"s"});
  b.set_initial(s, 1.0);
  b.add_transition(s, 0, s, 1.0);
  b.set_shared_reward(s, 0, 1.0);
  auto game = b.build();
  mg::ObservationMap obs(1, {"o"});
  obs.set(0, 0, 0);
  obs.validate(game);
  return {std::move(game), std::move(obs)};
}

}  // namespace

TEST_CASE("evaluate: geometric series on a single self-loop state") {
  auto bundle = one_state_game(0.5);
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  auto res = exact::evaluate(bundle.game, policy);
  CHECK(res.v[0] == Approx(2.0).epsilon(1e-12));
  CHECK(res.j == Approx(2.0).epsilon(1e-12));
  CHECK(res.q(0, 0) == Approx(2.0).epsilon(1e-12));
}

TEST_CASE("evaluate: discount 1 on a non-episodic chain is an explicit error") {
  auto bundle = one_state_game(1.0);
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  CHECK_THROWS_AS(exact::evaluate(bundle.game, policy), std::runtime_error);
}

TEST_CASE("evaluate: deterministic rewarding play scores 1 on the coordination game") {
  auto bundle = envs::kuba::build(2);
  // Deterministic policy: agent by seat, a^i = 0 for the first half.
  std::vector<Matrix> tables;
  for (int i = 0; i < 2; ++i) {
    Matrix t(bundle.game.n_states(), 2, 0.0);
    for (int s = 0; s < bundle.game.n_states(); ++s) {
      const std::string lbl = bundle.game.value_label(bundle.game.state(s)[i]);
      int seat = (lbl == "#") ? 0 : std::stoi(lbl.substr(1));
      int want = seat < 1 ? 0 : 1;
      t(s, want) = 1.0;
    }
    tables.push_back(std::move(t));
  }
  FactoredPolicy policy(PolicyKeying::kByState, std::move(tables), false);
  auto res = exact::evaluate(bundle.game, policy);
  CHECK(res.j == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evaluate: uniform policy on the one-step cosine game averages to zero") {
  auto bundle = envs::CosineToy(4).build_one_step();
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  auto res = exact::evaluate(bundle.game, policy);
  // Oracle: direct average of the reward over all 16 joint actions.
  envs::CosineToy toy(4);
  double mean = 0.0;
  std::vector<int> bits(4);
  for (int a = 0; a < 16; ++a) {
    for (int i = 0; i < 4; ++i) bits[i] = (a >> i) & 1;
    mean += toy.reward(bits) / 16.0;
  }
  CHECK(std::fabs(mean) <= 1e-12);
  CHECK(std::fabs(res.j - mean) <= 1e-12);
}

TEST_CASE("evaluate: V is the policy-weighted Q and d sums to one") {
  auto bundle = envs::triangle::build();
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByObservation, &bundle.obs);
  auto res = exact::evaluate(bundle.game, policy);
  for (int s = 0; s < bundle.game.n_states(); ++s) {
    if (bundle.game.is_terminal(s)) continue;
    double v = 0.0;
    for (int a = 0; a < bundle.game.n_actions(); ++a)
      v += policy.joint_prob(bundle.game, s, a) * res.q(s, a);
    CHECK(v == Approx(res.v[s]).epsilon(1e-9));
  }
  double dsum = 0.0;
  for (int s = 0; s < bundle.game.n_states(); ++s)
    for (int a = 0; a < bundle.game.n_actions(); ++a) dsum += res.d(s, a);
  CHECK(dsum == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evaluate: Bellman consistency of Q over all state-action pairs") {
  auto bundle = envs::CosineToy(3).build_repeated();
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  auto res = exact::evaluate(bundle.game, policy);
  const auto& game = bundle.game;
  for (int s = 0; s < game.n_states(); ++s) {
    if (game.is_terminal(s)) continue;
    for (int a = 0; a < game.n_actions(); ++a) {
      double rhs = game.mean_reward(s, a);
      for (const auto& [s2, p] : game.transition_row(s, a)) rhs += game.discount() * p * res.v[s2];
      CHECK(res.q(s, a) == Approx(rhs).epsilon(1e-9));
    }
  }
}

TEST_CASE("theorem-1 maxima: cosine toy agrees across all three policy classes") {
  for (int n : {2, 3}) {
    auto bundle = envs::CosineToy(n).build_one_step();
    auto v = exact::policy_class_maxima(bundle.game, bundle.obs);
    CHECK(v.state_based == v.obs_based);
    CHECK(v.obs_based == v.obs_shared);
    CHECK(v.state_based == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("theorem-1 maxima: triangle game agrees across all three policy classes") {
  auto bundle = envs::triangle::build();
  auto v = exact::policy_class_maxima(bundle.game, bundle.obs);
  CHECK(v.state_based == v.obs_based);
  CHECK(v.obs_based == v.obs_shared);
  CHECK(v.state_based == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("theorem-1 maxima: shared policies lose on the coordination game") {
  auto b2 = envs::kuba::build(2);
  auto v2 = exact::policy_class_maxima(b2.game, b2.obs);
  CHECK(v2.state_based == 1.0);
  CHECK(v2.obs_based == 1.0);
  CHECK(v2.shared_used_stochastic);
  // Analytic optimum of p(1-p) is 1/4 at p = 1/2.
  CHECK(std::fabs(v2.obs_shared - 0.25) <= 1e-9);
  CHECK(std::fabs(v2.shared_p - 0.5) <= 1e-6);

  auto b4 = envs::kuba::build(4);
  auto v4 = exact::policy_class_maxima(b4.game, b4.obs);
  CHECK(v4.state_based == 1.0);
  CHECK(std::fabs(v4.obs_shared - 0.0625) <= 1e-9);
}

TEST_CASE("brute force: stochastic search reports the grid+refine maximum") {
  auto bundle = envs::kuba::build(2);
  auto res = exact::brute_force_optimum(bundle.game, bundle.obs, PolicyClass::kObsBasedShared);
  CHECK(res.used_stochastic_search);
  // Fine-grid oracle for max_p p(1-p).
  double best = 0.0;
  for (int g = 0; g <= 10000; ++g) {
    double p = g / 10000.0;
    best = std::max(best, p * (1 - p));
  }
  CHECK(res.j == Approx(best).epsilon(1e-8));
  // The argmax policy evaluates to the same value through the generic path.
  auto eval = exact::evaluate(bundle.game, res.policy);
  CHECK(eval.j == Approx(res.j).epsilon(1e-9));
}

TEST_CASE("brute force: budget exhaustion refuses") {
  auto bundle = envs::triangle::build();
  CHECK_THROWS_AS(exact::brute_force_optimum(bundle.game, bundle.obs, PolicyClass::kObsBased, 4),
                  mg::BudgetExceeded);
}

TEST_CASE("mspbe: scalar feature on the one-state chain solves to r/(1-gamma)") {
  auto bundle = one_state_game(0.5);
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  auto features = exact::FeatureMap(
      bundle.game, [](const mg::FiniteMG&, int, int) { return Vec{1.0}; }, 1);
  auto sol = exact::solve_mspbe(bundle.game, policy, features);
  CHECK(sol.omega[0] == Approx(2.0).epsilon(1e-12));
  CHECK(sol.residual <= 1e-8);
}

TEST_CASE("mspbe: tabular features recover exact Q values") {
  auto bundle = envs::CosineToy(3).build_repeated();
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  auto features = exact::FeatureMap::tabular(bundle.game);
  auto eval = exact::evaluate(bundle.game, policy);
  auto sol = exact::solve_mspbe(bundle.game, policy, features);
  CHECK(sol.residual <= 1e-8);
  for (int s = 0; s < bundle.game.n_states(); ++s) {
    if (bundle.game.is_terminal(s)) continue;
    for (int a = 0; a < bundle.game.n_actions(); ++a) {
      int row = features.row_index(s, a);
      CHECK(std::fabs(sol.omega[row] - eval.q(s, a)) <= 1e-8);
    }
  }
}

TEST_CASE("mspbe: rank-deficient features are rejected by default, named") {
  auto bundle = one_state_game(0.5);
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  // Two identical columns: rank 1 < 2.
  auto features = exact::FeatureMap(
      bundle.game, [](const mg::FiniteMG&, int, int) { return Vec{1.0, 1.0}; }, 2);
  CHECK_FALSE(features.full_column_rank());
  try {
    exact::solve_mspbe(bundle.game, policy, features);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("assumption 2") != std::string::npos);
  }
}

TEST_CASE("mspbe: span solve returns the minimum-norm fixed point when allowed") {
  auto bundle = envs::CosineToy(3).build_repeated();
  auto policy = FactoredPolicy::uniform(bundle.game, PolicyKeying::kByState);
  auto features = exact::FeatureMap::cosine_concat(bundle.game, true);
  CHECK_FALSE(features.full_column_rank());  // one-hot blocks are redundant here
  exact::MspbeOptions opts;
  opts.allow_rank_deficient = true;
  auto sol = exact::solve_mspbe(bundle.game, policy, features, opts);
  CHECK(sol.residual <= 1e-8);
  CHECK(sol.rank_deficient);
  // The represented value function must match the projection target: for the
  // repeated cosine game the reward is inside the feature span, and the
  // uniform policy has zero mean reward, so Phi w equals Q exactly.
  auto eval = exact::evaluate(bundle.game, policy);
  for (int a = 0; a < bundle.game.n_actions(); ++a) {
    double q_hat = dot(features.phi(0, a), sol.omega);
    CHECK(q_hat == Approx(eval.q(0, a)).epsilon(1e-8));
  }
}

TEST_CASE("feature map: concatenated features have the documented layout") {
  auto bundle = envs::CosineToy(3).build_repeated();
  auto features = exact::FeatureMap::cosine_concat(bundle.game, false);
  // K = N (1 + |local actions|).
  CHECK(features.k() == 3 * (1 + 2));
  envs::CosineToy toy(3);
  const Vec& f = features.phi(0, 0);  // joint action (0,0,0)
  CHECK(f[0] == Approx(toy.values()[0]));
  CHECK(f[1] == 1.0);  // one-hot of action "0"
  CHECK(f[2] == 0.0);
  CHECK(f[3] == Approx(toy.values()[1]));
  CHECK(f[6] == Approx(toy.values()[2]));
}

TEST_CASE("feature map: duplicate constant columns are dropped with a record") {
  auto bundle = envs::CosineToy(3).build_repeated();
  auto reduced = exact::FeatureMap::cosine_concat(bundle.game, true);
  // On the single-state game all three value coordinates are constant; one
  // bias column stays.
  CHECK(reduced.k() == 1 + 3 * 2);
  CHECK(reduced.dropped_columns().size() == 2);
}
