#pragma once

#include <optional>
#include <string>
#include <vector>

#include "macc/csv.hpp"
#include "macc/deep_ac.hpp"
#include "macc/envs.hpp"
#include "macc/kvconfig.hpp"
#include "macc/linear_ac.hpp"

namespace macc::harness {

inline constexpr const char* kVersion = "macc 0.1.0";

/// Parses the plain-text game description consumed by the `verify`
/// subcommand. See README for the format.
envs::FiniteEnvBundle load_game_file(const std::string& path);
envs::FiniteEnvBundle parse_game_text(const std::string& text);

/// Resolved experiment description; round-trips losslessly through the
/// plain-text config format.
struct ExperimentConfig {
  std::string env = "cosine";        // cosine | particle-nav | triangle | kuba
  std::string algorithm = "linear";  // linear | deep
  std::string scheduler = "bandit";  // bandit | random | rule | full | none
  int n = 10;
  int k = 3;
  double eta = 0.5;
  double alpha = 200.0;
  int seeds = 10;
  long long steps = 100000;
  int episodes = 1000;
  bool actor_consensus = true;
  std::string out_dir = "runs";

  KvConfig to_kv() const;
  static ExperimentConfig from_kv(const KvConfig& kv);
  bool operator==(const ExperimentConfig&) const = default;
};

struct Assertion {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct PresetResult {
  std::string name;
  bool pass = false;
  std::vector<Assertion> assertions;
  std::string out_dir;
};

/// Executes one of the bundled experiment presets and writes CSVs plus a
/// summary JSON with pass/fail entries into the output directory. Presets:
/// theorem1-suite, linear-convergence, toy-consensus-ablation,
/// nav-baselines, bandit-ablation, eta-sweep.
PresetResult run_preset(const std::string& name, const std::string& out_dir,
                        const KvConfig* overrides = nullptr);

std::vector<std::string> preset_names();

struct Summary {
  double median = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int count = 0;
};

/// Median with a seeded percentile-bootstrap confidence interval.
Summary summarize_values(const std::vector<double>& values, int bootstrap = 1000,
                         std::uint64_t seed = 0, double coverage = 0.95);

/// CSV columns of the linear trainer output.
std::vector<std::string> linear_csv_columns();
void write_linear_csv(const std::string& path, int seed,
                      const std::vector<linear_ac::MetricsRow>& rows);

/// CSV columns of the deep trainer outputs.
std::vector<std::string> deep_csv_columns(int k);
void write_deep_csv(const std::string& path, const std::vector<deep_ac::EpisodeRecord>& rows,
                    int k);
void write_eval_csv(const std::string& path, const std::vector<deep_ac::EvalPoint>& rows);
void write_bandit_csv(const std::string& path, const std::vector<deep_ac::BanditLogRow>& rows);

}  // namespace macc::harness
