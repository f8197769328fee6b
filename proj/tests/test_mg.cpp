#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "macc/envs.hpp"
#include "macc/mg.hpp"
#include "macc/rng.hpp"

using namespace macc;
using mg::Permutation;

TEST_CASE("apply_permutation: identity leaves the list unchanged") {
  std::vector<std::string> x = {"a", "b", "c"};
  CHECK(mg::apply_permutation(x, Permutation::identity(3)) == x);
}

TEST_CASE("apply_permutation: transposition of agents 1 and 2") {
  std::vector<std::string> x = {"a", "b", "c"};
  auto m = Permutation::transposition(3, 0, 1);
  std::vector<std::string> expect = {"b", "a", "c"};
  CHECK(mg::apply_permutation(x, m) == expect);
}

TEST_CASE("apply_permutation: a transposition is an involution") {
  std::vector<int> x = {7, 5, 3, 1};
  auto m = Permutation::transposition(4, 1, 3);
  CHECK(mg::apply_permutation(mg::apply_permutation(x, m), m) == x);
}

TEST_CASE("apply_permutation: length mismatch throws") {
  std::vector<int> x = {1, 2};
  CHECK_THROWS_AS(mg::apply_permutation(x, Permutation::identity(3)), std::invalid_argument);
}

TEST_CASE("permutation group closure under compose and inverse") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + rng.uniform_int(5);
    auto random_perm = [&] {
      std::vector<int> m(n);
      for (int i = 0; i < n; ++i) m[i] = i;
      for (int i = n - 1; i > 0; --i) std::swap(m[i], m[rng.uniform_int(i + 1)]);
      return Permutation(m);
    };
    Permutation p = random_perm();
    Permutation q = random_perm();
    Permutation pq = p.compose(q);

    std::vector<int> x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.uniform_int(1000);
    CHECK(mg::apply_permutation(x, pq) == mg::apply_permutation(mg::apply_permutation(x, q), p));
    CHECK(p.compose(p.inverse()).is_identity());
    CHECK(mg::apply_permutation(mg::apply_permutation(x, p), p.inverse()) == x);
  }
}

TEST_CASE("homogeneity: cosine toy passes all three conditions") {
  auto bundle = envs::CosineToy(3).build_one_step();
  auto report = mg::check_homogeneous(bundle.game, bundle.obs);
  CHECK(report.condition_i);
  CHECK(report.condition_ii);
  CHECK(report.condition_iii);
  CHECK(report.homogeneous());
}

TEST_CASE("homogeneity: triangle game passes all three conditions") {
  auto bundle = envs::triangle::build();
  auto report = mg::check_homogeneous(bundle.game, bundle.obs);
  CHECK(report.condition_i);
  CHECK(report.condition_ii);
  CHECK(report.condition_iii);
}

TEST_CASE("homogeneity: raw-state observations fail condition (iii) with a witness") {
  for (int n : {2, 4}) {
    auto bundle = envs::kuba::build(n);
    auto report = mg::check_homogeneous(bundle.game, bundle.obs);
    CHECK(report.condition_i);
    CHECK(report.condition_ii);
    CHECK_FALSE(report.condition_iii);
    REQUIRE(report.condition_iii_witness.has_value());
    CHECK(report.condition_iii_witness->state >= 0);
  }
}

TEST_CASE("homogeneity verdict is identical for transpositions and all permutations") {
  auto check_both = [](const envs::FiniteEnvBundle& b) {
    mg::HomogeneityOptions t_opts;
    t_opts.policy = mg::PermutationPolicy::kTranspositions;
    mg::HomogeneityOptions a_opts;
    a_opts.policy = mg::PermutationPolicy::kAllPermutations;
    auto rt = mg::check_homogeneous(b.game, b.obs, t_opts);
    auto ra = mg::check_homogeneous(b.game, b.obs, a_opts);
    CHECK(rt.condition_i == ra.condition_i);
    CHECK(rt.condition_ii == ra.condition_ii);
    CHECK(rt.condition_iii == ra.condition_iii);
  };
  check_both(envs::triangle::build());
  check_both(envs::CosineToy(3).build_one_step());
  check_both(envs::kuba::build(2));
  check_both(envs::kuba::build(4));
}

TEST_CASE("homogeneity: budget exhaustion refuses instead of passing") {
  auto bundle = envs::triangle::build();
  mg::HomogeneityOptions opts;
  opts.budget = 10;
  CHECK_THROWS_AS(mg::check_homogeneous(bundle.game, bundle.obs, opts), mg::BudgetExceeded);
}

TEST_CASE("homogeneity: agent-count mismatch between game and observations") {
  auto bundle = envs::triangle::build();
  mg::ObservationMap wrong(2, {"x"});
  CHECK_THROWS_AS(mg::check_homogeneous(bundle.game, wrong), std::invalid_argument);
}

TEST_CASE("observation identity o^i(s) = o^j(Ms) holds on the triangle game") {
  auto bundle = envs::triangle::build();
  auto res = mg::check_observation_identity(bundle.game, bundle.obs);
  CHECK(res.pass);
}

TEST_CASE("observation identity: worked swap on a triangle state") {
  // Agent 1 at L behind an up shape, agent 2 at M behind a down shape,
  // agent 3 at R behind an up shape. Swapping agents 1 and 2 relocates the
  // agents but not the shape layout, so o^1(s) = o^2(Ms).
  auto bundle = envs::triangle::build();
  int sid = -1;
  for (int i = 0; i < bundle.game.n_states(); ++i)
    if (bundle.game.state_label(i) == "(L^,Mv,R^)") sid = i;
  REQUIRE(sid >= 0);
  auto m = Permutation::transposition(3, 0, 1);
  auto ms = bundle.game.find_state(mg::apply_permutation(bundle.game.state(sid), m));
  REQUIRE(ms.has_value());
  CHECK(bundle.obs.observe(sid, 0) == bundle.obs.observe(*ms, 1));
}

TEST_CASE("observation identity fails with a witness on raw-state observations") {
  auto bundle = envs::kuba::build(2);
  auto res = mg::check_observation_identity(bundle.game, bundle.obs);
  CHECK_FALSE(res.pass);
  CHECK(res.witness_state >= 0);
}

TEST_CASE("metamorphic: relabeling agents of a homogeneous game keeps the verdict") {
  auto bundle = envs::CosineToy(3).build_one_step();
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<int> m(3);
    for (int i = 0; i < 3; ++i) m[i] = i;
    for (int i = 2; i > 0; --i) std::swap(m[i], m[rng.uniform_int(i + 1)]);
    Permutation perm(m);

    // Rebuild the game with every ordered tuple pushed through the fixed
    // relabeling; agent perm(i) takes over agent i's role everywhere.
    mg::MgBuilder b(3, bundle.game.discount());
    std::vector<std::string> locals;
    for (int v : bundle.game.local_state_space(0)) locals.push_back(bundle.game.value_label(v));
    b.local_state_space_all(locals);
    std::vector<std::string> acts;
    for (int v : bundle.game.local_action_space(0)) acts.push_back(bundle.game.value_label(v));
    b.local_action_space_all(acts);
    b.finalize_actions();

    auto relabel = [&](const std::vector<int>& tuple) {
      std::vector<int> out = mg::apply_permutation(tuple, perm);
      std::vector<std::string> labels;
      for (int v : out) labels.push_back(bundle.game.value_label(v));
      return labels;
    };
    for (int s = 0; s < bundle.game.n_states(); ++s) {
      int id = b.add_state(relabel(bundle.game.state(s)));
      REQUIRE(id == s);
      if (bundle.game.is_terminal(s)) b.set_terminal(s);
      if (bundle.game.initial_dist()[s] > 0) b.set_initial(s, bundle.game.initial_dist()[s]);
    }
    for (int s = 0; s < bundle.game.n_states(); ++s) {
      if (bundle.game.is_terminal(s)) continue;
      for (int a = 0; a < bundle.game.n_actions(); ++a) {
        int a2 = b.action_id(relabel(bundle.game.action(a)));
        for (const auto& [t, p] : bundle.game.transition_row(s, a)) b.add_transition(s, a2, t, p);
        for (int i = 0; i < 3; ++i) b.set_reward(s, a2, perm(i), bundle.game.reward(s, a, i));
      }
    }
    auto game2 = b.build();
    std::vector<std::string> obs_labels;
    for (int o = 0; o < bundle.obs.n_observations(); ++o) obs_labels.push_back(bundle.obs.label(o));
    mg::ObservationMap obs2(3, obs_labels);
    for (int s = 0; s < game2.n_states(); ++s)
      for (int i = 0; i < 3; ++i) obs2.set(s, perm(i), bundle.obs.observe(s, i));
    auto report = mg::check_homogeneous(game2, obs2);
    CHECK(report.homogeneous());
  }
}
