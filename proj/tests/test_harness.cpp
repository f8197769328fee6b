#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "macc/harness.hpp"
#include "macc/mg.hpp"

using namespace macc;
using namespace macc::harness;
using doctest::Approx;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("macc_harness_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A two-agent one-step game whose reward depends only on the multiset of
// (value, action) pairs; own-value observations make it homogeneous.
const char* kHomogeneousGame = R"(
agents 2
discount 0.9
local_states * a b z
local_actions * 0 1
state s1 a b
state s2 b a
state sink z z
terminal sink
initial s1 1.0
transition s1 0 0 sink 1.0
transition s1 0 1 sink 1.0
transition s1 1 0 sink 1.0
transition s1 1 1 sink 1.0
transition s2 0 0 sink 1.0
transition s2 0 1 sink 1.0
transition s2 1 0 sink 1.0
transition s2 1 1 sink 1.0
# pay when the agent holding value a plays 1 and the other plays 0
reward s1 1 0 * 1.0
reward s2 0 1 * 1.0
observations oa ob osink
observe s1 1 oa
observe s1 2 ob
observe s2 1 ob
observe s2 2 oa
observe sink * osink
)";

}  // namespace

TEST_CASE("game file: parses and verifies a homogeneous description") {
  auto bundle = parse_game_text(kHomogeneousGame);
  CHECK(bundle.game.n_agents() == 2);
  CHECK(bundle.game.n_states() == 3);
  CHECK(bundle.game.n_actions() == 4);
  auto report = mg::check_homogeneous(bundle.game, bundle.obs);
  CHECK(report.homogeneous());
  auto v = exact::policy_class_maxima(bundle.game, bundle.obs);
  CHECK(v.state_based == 1.0);
  CHECK(v.obs_shared == v.state_based);
}

TEST_CASE("game file: raw-state observations in the file fail condition (iii)") {
  std::string text = kHomogeneousGame;
  // Swap the observation table for identity observations.
  auto pos = text.find("observations");
  text = text.substr(0, pos);
  text += "observations o1 o2 o3\n";
  text += "observe s1 * o1\nobserve s2 * o2\nobserve sink * o3\n";
  auto bundle = parse_game_text(text);
  auto report = mg::check_homogeneous(bundle.game, bundle.obs);
  CHECK(report.condition_i);
  CHECK(report.condition_ii);
  CHECK_FALSE(report.condition_iii);
}

TEST_CASE("game file: malformed input raises a validation error") {
  CHECK_THROWS_AS(parse_game_text("agents 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_game_text("discount 0.9\nlocal_states * a\n"), std::invalid_argument);
  // A transition row that does not sum to one.
  std::string bad = R"(
agents 1
discount 0.9
local_states * x
local_actions * go
state s x
initial s 1.0
transition s go s 0.5
observations o
observe s 1 o
)";
  CHECK_THROWS_AS(parse_game_text(bad), std::invalid_argument);
}

TEST_CASE("experiment config round-trips through the plain-text format") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    ExperimentConfig c;
    c.env = trial % 2 ? "cosine" : "particle-nav";
    c.algorithm = trial % 2 ? "linear" : "deep";
    c.scheduler = trial % 3 == 0 ? "bandit" : (trial % 3 == 1 ? "random" : "full");
    c.n = 2 + rng.uniform_int(40);
    c.k = 1 + rng.uniform_int(5);
    c.eta = 0.25 + 0.5 * rng.uniform();
    c.alpha = rng.uniform(1.0, 2000.0);
    c.seeds = 1 + rng.uniform_int(10);
    c.steps = rng.uniform_int(100000);
    c.episodes = rng.uniform_int(5000);
    c.actor_consensus = rng.uniform() < 0.5;
    c.out_dir = "runs/trial" + std::to_string(trial);

    KvConfig kv = c.to_kv();
    std::string text = kv.serialize();
    KvConfig parsed = KvConfig::parse(text);
    CHECK(parsed == kv);
    CHECK(ExperimentConfig::from_kv(parsed) == c);
  }
}

TEST_CASE("summarize: median of (1, 2, 3) is 2 and the CI brackets it") {
  auto s = summarize_values({1.0, 2.0, 3.0});
  CHECK(s.median == 2.0);
  CHECK(s.ci_lo <= 2.0);
  CHECK(s.ci_hi >= 2.0);
  CHECK(s.count == 3);
}

TEST_CASE("summarize: same seed gives identical bootstrap intervals") {
  std::vector<double> xs = {5.0, 1.0, 4.0, 2.0, 8.0, 3.0};
  auto a = summarize_values(xs, 500, 7);
  auto b = summarize_values(xs, 500, 7);
  CHECK(a.ci_lo == b.ci_lo);
  CHECK(a.ci_hi == b.ci_hi);
}

TEST_CASE("csv: an empty run yields a header-only file") {
  auto dir = temp_dir("csv");
  write_linear_csv((dir / "empty.csv").string(), 0, {});
  std::string text = slurp(dir / "empty.csv");
  CHECK(text == "seed,step,J,omega_disagreement,theta_disagreement,omega_oracle_dist\n");
  fs::remove_all(dir);
}

TEST_CASE("theorem1-suite preset passes and is reproducible byte for byte") {
  auto dir1 = temp_dir("t1a");
  auto dir2 = temp_dir("t1b");
  auto r1 = run_preset("theorem1-suite", dir1.string());
  auto r2 = run_preset("theorem1-suite", dir2.string());
  CHECK(r1.pass);
  CHECK(r2.pass);
  CHECK(slurp(dir1 / "theorem1.csv") == slurp(dir2 / "theorem1.csv"));
  CHECK(fs::exists(dir1 / "summary.json"));
  CHECK(fs::exists(dir1 / "resolved.cfg"));
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("bandit-ablation preset passes its synthetic behavior checks") {
  auto dir = temp_dir("bandit");
  auto r = run_preset("bandit-ablation", dir.string());
  CHECK(r.pass);
  for (const auto& a : r.assertions) CHECK(a.pass);
  fs::remove_all(dir);
}

TEST_CASE("unknown preset names are rejected with the preset list") {
  auto dir = temp_dir("unknown");
  CHECK_THROWS_AS(run_preset("nope", dir.string()), std::invalid_argument);
  fs::remove_all(dir);
}
