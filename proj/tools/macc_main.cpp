// macc: verification and training tools for cooperative multi-agent games
// with consensus-based actor-critic learning and learned communication.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "macc/consensus.hpp"
#include "macc/deep_ac.hpp"
#include "macc/envs.hpp"
#include "macc/exact.hpp"
#include "macc/harness.hpp"
#include "macc/linear_ac.hpp"
#include "macc/mg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace macc;

namespace {

int cmd_verify(const std::string& path, bool all_permutations, long long budget,
               const std::string& json_out) {
  auto bundle = harness::load_game_file(path);
  mg::HomogeneityOptions opts;
  opts.policy = all_permutations ? mg::PermutationPolicy::kAllPermutations
                                 : mg::PermutationPolicy::kTranspositions;
  opts.budget = budget;
  auto report = mg::check_homogeneous(bundle.game, bundle.obs, opts);
  std::cout << report.summary(bundle.game) << "\n";
  auto identity = mg::check_observation_identity(bundle.game, bundle.obs, budget);
  std::cout << "observation identity o^i(s) = o^j(Ms): " << (identity.pass ? "pass" : "FAIL");
  if (!identity.pass)
    std::cout << "  (witness: state " << bundle.game.state_label(identity.witness_state)
              << ", agents " << identity.witness_i + 1 << "," << identity.witness_j + 1 << ")";
  std::cout << "\n";
  if (!json_out.empty()) {
    json j;
    j["condition_i"] = report.condition_i;
    j["condition_ii"] = report.condition_ii;
    j["condition_iii"] = report.condition_iii;
    j["homogeneous"] = report.homogeneous();
    j["observation_identity"] = identity.pass;
    std::ofstream out(json_out);
    out << j.dump(2) << "\n";
  }
  return report.homogeneous() ? 0 : 1;
}

int cmd_verify_theorem1(const std::string& env, int n, const std::string& json_out) {
  envs::EnvParams params;
  params.n = n;
  params.mode = "one_step";
  auto bundle = envs::build_finite(env, params);
  auto v = exact::policy_class_maxima(bundle.game, bundle.obs);
  std::cout.precision(12);
  std::cout << "max over state-based policies:              " << v.state_based << "\n"
            << "max over observation-based policies:        " << v.obs_based << "\n"
            << "max over shared observation-based policies: " << v.obs_shared;
  if (v.shared_used_stochastic) std::cout << "  (stochastic search, p = " << v.shared_p << ")";
  std::cout << "\n";
  bool equal = v.all_equal();
  std::cout << (equal ? "verdict: sharing is lossless here"
                      : "verdict: sharing loses value on this game")
            << "\n";
  if (!json_out.empty()) {
    json j;
    j["env"] = env;
    j["n"] = n;
    j["state_based"] = v.state_based;
    j["obs_based"] = v.obs_based;
    j["obs_shared"] = v.obs_shared;
    j["lossless"] = equal;
    std::ofstream out(json_out);
    out << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_validate_assumptions(const std::string& config_path) {
  KvConfig kv = KvConfig::load(config_path);
  int n = kv.get_int_or("agents", 4);
  std::string kind = kv.get_or("consensus", "uniform");

  std::unique_ptr<consensus::ConsensusSampler> sampler;
  if (kind == "uniform")
    sampler = std::make_unique<consensus::FixedMatrixSampler>(consensus::ConsensusMatrix::uniform(n));
  else if (kind == "identity")
    sampler = std::make_unique<consensus::FixedMatrixSampler>(consensus::ConsensusMatrix::identity(n));
  else if (kind == "gossip")
    sampler = std::make_unique<consensus::RandomPairGossipSampler>(n);
  else
    throw std::invalid_argument("validate-assumptions: consensus must be uniform|identity|gossip");

  auto critic = consensus::StepSchedule::power(kv.get_double_or("beta_omega_exponent", 0.65));
  auto actor = consensus::StepSchedule::power(kv.get_double_or("beta_theta_exponent", 0.85));

  std::optional<exact::FeatureMap> features;
  if (kv.has("features.env")) {
    envs::EnvParams p;
    p.n = kv.get_int_or("features.n", 3);
    p.mode = kv.get_or("features.mode", "repeated");
    auto bundle = envs::build_finite(kv.get("features.env"), p);
    bool drop = kv.get_bool_or("features.drop_constant_columns", false);
    features = exact::FeatureMap::cosine_concat(bundle.game, drop);
  }

  consensus::ValidateOptions opts;
  opts.n_samples = kv.get_int_or("samples", 10000);
  opts.seed = kv.get_int_or("seed", 0);
  auto report = consensus::validate_assumptions(*sampler, critic, actor,
                                                features ? &*features : nullptr, opts);
  std::cout << report.summary() << "\n";
  return report.all_pass() ? 0 : 1;
}

int cmd_train_linear(const std::string& env, int n, const std::string& actor_consensus, int seeds,
                     long long steps, const std::string& out, const std::string& mode) {
  if (env != "cosine")
    throw std::invalid_argument("train-linear: only the cosine environment is bundled");
  auto parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  CsvWriter csv(out, harness::linear_csv_columns());
  for (int seed = 0; seed < seeds; ++seed) {
    linear_ac::RepeatedCosineEnv train_env(n, mode == "episodic");
    linear_ac::TrainConfig cfg;
    cfg.steps = steps;
    cfg.eval_every = static_cast<int>(std::max<long long>(1, steps / 100));
    cfg.seed = seed;
    cfg.train_actor = true;
    cfg.critic_schedule = consensus::StepSchedule::adaptive_moment(0.01);
    cfg.actor_schedule = consensus::StepSchedule::adaptive_moment(0.01);
    cfg.critic_consensus = linear_ac::ConsensusKind::kUniform;
    cfg.actor_consensus = actor_consensus == "on" ? linear_ac::ConsensusKind::kUniform
                                                  : linear_ac::ConsensusKind::kIdentity;
    auto result = linear_ac::train(train_env, cfg);
    for (const auto& r : result.rows)
      csv.row({static_cast<double>(seed), static_cast<double>(r.step), r.j, r.omega_disagreement,
               r.theta_disagreement, r.omega_oracle_dist});
    std::cout << "seed " << seed << ": final J = " << result.rows.back().j
              << (result.aborted ? "  [aborted: " + result.abort_reason + "]" : "") << "\n";
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_train_deep(int n, int k, double eta, const std::string& scheduler, int seeds, int episodes,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (int seed = 0; seed < seeds; ++seed) {
    deep_ac::DeepConfig cfg;
    cfg.n = n;
    cfg.k = k;
    cfg.gate.eta = eta;
    cfg.episodes = episodes;
    cfg.seed = seed;
    if (scheduler == "bandit") {
      cfg.scheduler = deep_ac::SchedulerKind::kBandit;
    } else if (scheduler == "random") {
      cfg.scheduler = deep_ac::SchedulerKind::kRandom;
    } else if (scheduler == "rule") {
      cfg.scheduler = deep_ac::SchedulerKind::kRule;
    } else if (scheduler == "full") {
      cfg.scheduler = deep_ac::SchedulerKind::kFull;
      cfg.full_communication = true;
      cfg.k = n - 1;
    } else if (scheduler == "none") {
      cfg.scheduler = deep_ac::SchedulerKind::kNone;
      cfg.independent = true;
    } else {
      throw std::invalid_argument("train-deep: scheduler must be bandit|random|rule|full|none");
    }

    deep_ac::DeepTrainer trainer(cfg);
    std::vector<deep_ac::EpisodeRecord> episode_log;
    std::vector<deep_ac::EvalPoint> eval_log;
    std::vector<deep_ac::BanditLogRow> bandit_log;
    trainer.train_full_run(&episode_log, &eval_log,
                           cfg.scheduler == deep_ac::SchedulerKind::kBandit ? &bandit_log : nullptr);

    std::string run_dir = (fs::path(out_dir) / ("seed" + std::to_string(seed))).string();
    fs::create_directories(run_dir);
    harness::write_deep_csv(run_dir + "/episodes.csv", episode_log, cfg.k);
    harness::write_eval_csv(run_dir + "/eval.csv", eval_log);
    if (!bandit_log.empty()) harness::write_bandit_csv(run_dir + "/bandit.csv", bandit_log);
    trainer.save_agents(run_dir + "/params.bin");
    std::cout << "seed " << seed << ": final eval return = " << eval_log.back().mean_return
              << ", obs msgs = " << trainer.counters().obs_messages
              << ", param msgs = " << trainer.counters().param_messages << "\n";
  }
  std::cout << "wrote " << out_dir << "\n";
  return 0;
}

int cmd_run_preset(const std::string& name, const std::string& out_dir,
                   const std::string& config_path) {
  std::optional<KvConfig> overrides;
  if (!config_path.empty()) overrides = KvConfig::load(config_path);
  auto result = harness::run_preset(name, out_dir, overrides ? &*overrides : nullptr);
  for (const auto& a : result.assertions)
    std::cout << (a.pass ? "[pass] " : "[FAIL] ") << a.name << "  (value " << a.value
              << ", threshold " << a.threshold << ")\n";
  std::cout << (result.pass ? "preset passed" : "preset FAILED") << "; outputs in " << out_dir
            << "\n";
  return result.pass ? 0 : 1;
}

int cmd_summarize(const std::vector<std::string>& csvs, const std::string& column,
                  const std::string& out) {
  json j = json::array();
  for (const auto& path : csvs) {
    auto table = read_csv(path);
    auto values = table.column(column);
    auto s = harness::summarize_values(values);
    j.push_back({{"file", path},
                 {"column", column},
                 {"count", s.count},
                 {"median", s.median},
                 {"ci_lo", s.ci_lo},
                 {"ci_hi", s.ci_hi}});
    std::cout << path << " " << column << ": median " << s.median << "  [" << s.ci_lo << ", "
              << s.ci_hi << "]\n";
  }
  if (!out.empty()) {
    std::ofstream o(out);
    o << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"macc: homogeneity verification, exact policy oracles, and communication-"
               "efficient consensus actor-critic training"};
  app.require_subcommand(1);

  std::string game_path, json_out;
  bool all_perms = false;
  long long budget = 50'000'000;
  auto* verify = app.add_subcommand("verify", "check the homogeneity conditions of a game file");
  verify->add_option("game", game_path, "game description file")->required();
  verify->add_flag("--all-permutations", all_perms, "enumerate all N! permutations");
  verify->add_option("--budget", budget, "enumeration budget");
  verify->add_option("--json", json_out, "write a JSON report");

  std::string t1_env, t1_json;
  int t1_n = 3;
  auto* t1 = app.add_subcommand(
      "verify-theorem1",
      "compare exact maxima over state-based, observation-based and shared policies");
  t1->add_option("env", t1_env, "triangle | kuba | cosine")->required();
  t1->add_option("--n", t1_n, "number of agents");
  t1->add_option("--json", t1_json, "write a JSON report");

  std::string va_config;
  auto* va = app.add_subcommand("validate-assumptions",
                                "check consensus, stepsize and feature conditions");
  va->add_option("--config", va_config, "plain-text key = value configuration")->required();

  std::string tl_env = "cosine", tl_actor = "on", tl_out = "metrics.csv", tl_mode = "repeated";
  int tl_n = 10, tl_seeds = 10;
  long long tl_steps = 100000;
  auto* tl = app.add_subcommand("train-linear", "consensus linear actor-critic on the toy game");
  tl->add_option("--env", tl_env, "environment (cosine)");
  tl->add_option("--n", tl_n, "number of agents");
  tl->add_option("--actor-consensus", tl_actor, "on | off");
  tl->add_option("--seeds", tl_seeds, "number of seeds");
  tl->add_option("--steps", tl_steps, "training steps per seed");
  tl->add_option("--mode", tl_mode, "repeated | episodic presentation");
  tl->add_option("--out", tl_out, "output CSV");

  int td_n = 6, td_k = 3, td_seeds = 4, td_episodes = 1000;
  double td_eta = 0.5;
  std::string td_env = "particle-nav", td_sched = "bandit", td_out = "runs/deep";
  auto* td = app.add_subcommand("train-deep",
                                "communication-efficient deep actor-critic on particle-nav");
  td->add_option("--env", td_env, "environment (particle-nav)");
  td->add_option("--n", td_n, "number of agents");
  td->add_option("--k", td_k, "neighbors in communication range");
  td->add_option("--eta", td_eta, "observation-action communication rate");
  td->add_option("--scheduler", td_sched, "bandit | random | rule | full | none");
  td->add_option("--seeds", td_seeds, "number of seeds");
  td->add_option("--episodes", td_episodes, "training episodes per seed");
  td->add_option("--out", td_out, "output directory");

  std::string rp_name, rp_out = "runs/preset", rp_config;
  auto* rp = app.add_subcommand("run-preset", "run a bundled experiment preset");
  rp->add_option("name", rp_name,
                 "theorem1-suite | linear-convergence | toy-consensus-ablation | nav-baselines | "
                 "bandit-ablation | eta-sweep")
      ->required();
  rp->add_option("--out", rp_out, "output directory");
  rp->add_option("--config", rp_config, "override configuration file");

  std::vector<std::string> sm_csvs;
  std::string sm_column = "J", sm_out;
  auto* sm = app.add_subcommand("summarize", "medians and bootstrap intervals over CSV columns");
  sm->add_option("csv", sm_csvs, "input CSV files")->required();
  sm->add_option("--column", sm_column, "column to summarize");
  sm->add_option("--out", sm_out, "write a JSON summary");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(game_path, all_perms, budget, json_out);
    if (t1->parsed()) return cmd_verify_theorem1(t1_env, t1_n, t1_json);
    if (va->parsed()) return cmd_validate_assumptions(va_config);
    if (tl->parsed())
      return cmd_train_linear(tl_env, tl_n, tl_actor, tl_seeds, tl_steps, tl_out, tl_mode);
    if (td->parsed()) return cmd_train_deep(td_n, td_k, td_eta, td_sched, td_seeds, td_episodes, td_out);
    if (rp->parsed()) return cmd_run_preset(rp_name, rp_out, rp_config);
    if (sm->parsed()) return cmd_summarize(sm_csvs, sm_column, sm_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
