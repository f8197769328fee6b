#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "macc/bandit.hpp"
#include "macc/envs.hpp"
#include "macc/linalg.hpp"
#include "macc/nets.hpp"
#include "macc/rng.hpp"

namespace macc::deep_ac {

struct GateConfig {
  double eta = 0.5;    // target communication rate in (0, 1)
  double alpha = 200;  // regularization weight
  double tau = 1.0;    // straight-through temperature
  /// Default regularizer averages the open probabilities over all
  /// neighbors; the literal form averages over the selected subset only
  /// (empty subset contributes |0 - eta| with no gradient).
  bool literal_selected_mean = false;
};

/// Per-neighbor scorer: each (own obs, neighbor embed) pair is encoded, a
/// mean-pooled context is appended, and a 2-logit head scores open/closed.
/// Logit index 0 means "communicate".
class GateNet {
 public:
  GateNet() = default;
  GateNet(int obs_dim, int embed_dim, int hidden);
  void init(Rng& rng);

  struct Cache {
    std::vector<nets::DenseNet::Cache> enc;
    std::vector<nets::DenseNet::Cache> head;
    std::vector<Vec> encoded;
    Vec context;
  };

  /// One 2-logit row per neighbor, any neighbor count.
  std::vector<Vec> forward(const Vec& obs, const std::vector<Vec>& embeds, Cache* cache) const;
  /// Accumulates parameter gradients for dL/dlogits rows.
  void backward(const std::vector<Vec>& inputs, const Cache& cache,
                const std::vector<Vec>& dlogits, Vec& enc_grads, Vec& head_grads) const;
  /// The concatenated (obs, embed) encoder inputs.
  std::vector<Vec> assemble_inputs(const Vec& obs, const std::vector<Vec>& embeds) const;

  int enc_params() const { return enc_.n_params(); }
  int head_params() const { return head_.n_params(); }
  const nets::DenseNet& encoder() const { return enc_; }
  const nets::DenseNet& head() const { return head_; }
  Vec flatten_params() const;
  void unflatten_params(const Vec& p);

 private:
  nets::DenseNet enc_;
  nets::DenseNet head_;
};

/// Everything one agent owns: communication gate, set-pooled critic over
/// (obs, action) pairs, deterministic actor, soft-updated target copies and
/// the per-net optimizer states.
struct AgentNets {
  GateNet gate;
  nets::SetPoolNet critic;
  nets::DenseNet actor;
  nets::SetPoolNet critic_target;
  nets::DenseNet actor_target;
  nets::AdamState opt_gate;
  nets::AdamState opt_critic;
  nets::AdamState opt_actor;

  static AgentNets make(int obs_dim, int act_dim, int hidden, double lr_critic, double lr_actor,
                        double lr_gate, Rng& rng);
  void soft_update_targets(double rate);
  Vec act(const Vec& obs) const;         // deterministic policy
  Vec act_target(const Vec& obs) const;  // target policy
};

/// Joint transition tuple: everything every agent saw and did at t and t+1.
struct JointStep {
  std::vector<Vec> obs, next_obs;
  std::vector<Vec> actions;
  Vec rewards;
  std::vector<std::vector<int>> neighbors, next_neighbors;  // ids by distance rank
};

/// Uniform-sampling ring buffer of complete joint tuples.
class ReplayMemory {
 public:
  explicit ReplayMemory(int capacity) : capacity_(capacity) {}
  void push(JointStep step);
  int size() const { return static_cast<int>(buffer_.size()); }
  const JointStep& at(int i) const { return buffer_[i]; }
  std::vector<int> sample_indices(int batch, Rng& rng) const;

 private:
  int capacity_;
  std::deque<JointStep> buffer_;
};

/// Message accounting: one observation-action message per open gate per
/// step, one parameter message per directed half of a gossip exchange.
struct MessageCounters {
  long long obs_messages = 0;
  long long param_messages = 0;
  long long obs_bytes = 0;
  long long param_bytes = 0;
};

struct SelectResult {
  std::vector<int> open;                           // 0/1 per neighbor rank
  Vec open_probs;                                  // noiseless softmax, per rank
  std::vector<nets::GumbelSampler::Sample> samples;
};

/// Samples the communication subset for one agent; empty neighbor lists
/// yield an empty selection.
SelectResult select_neighbors(const GateNet& gate, const GateConfig& gc, const Vec& obs,
                              const std::vector<Vec>& embeds, Rng& rng);

/// Permutation-invariant critic value over the communicated set (self
/// always included).
double critic_value(const nets::SetPoolNet& critic, const std::vector<Vec>& elements);

enum class SchedulerKind { kBandit, kRandom, kRule, kFull, kNone };

struct DeepConfig {
  int n = 6;
  int k = 3;
  int hidden = 32;
  double gamma = 0.95;
  int batch = 256;
  int memory_capacity = 25000;
  double lr_critic = 0.01;
  double lr_actor = 0.01;
  double lr_gate = 0.001;
  double soft_update = 0.01;
  GateConfig gate;
  SchedulerKind scheduler = SchedulerKind::kBandit;
  /// Per-agent probability of a gossip exchange per episode for the random
  /// and rule-based schedulers (matched to a measured bandit rate).
  double exchange_rate = 0.1;
  /// IL mode: critics see the self pair only and no parameters move.
  bool independent = false;
  /// Full communication: every gate forced open, uniform parameter mixing.
  bool full_communication = false;
  int episodes = 1000;
  int update_every = 2;
  double sigma_start = 0.1;
  double sigma_end = 0.02;
  int eval_every = 100;
  int eval_episodes = 10;
  std::uint64_t seed = 0;
};

struct EpisodeRecord {
  int episode = 0;
  double shaped_return = 0.0;    // the G <- r + gamma G recurrence
  double sum_return = 0.0;       // undiscounted team return
  long long obs_messages = 0;    // this episode
  long long param_messages = 0;  // this episode
  Vec gate_open_by_rank;         // mean open frequency per distance rank
  double gate_open_rate = 0.0;
};

struct EvalPoint {
  int episode = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
};

struct BanditLogRow {
  int episode = 0;
  int agent = 0;
  int x1 = 1;
  int x2 = -1;
  double r1 = 0.0;
  double r2 = 0.0;
  double p_communicate = 0.0;
};

class DeepTrainer {
 public:
  explicit DeepTrainer(const DeepConfig& cfg);

  EpisodeRecord run_episode();
  EvalPoint evaluate(int n_episodes);
  void train_full_run(std::vector<EpisodeRecord>* episode_log, std::vector<EvalPoint>* eval_log,
                      std::vector<BanditLogRow>* bandit_log = nullptr);

  const DeepConfig& config() const { return cfg_; }
  const MessageCounters& counters() const { return counters_; }
  const std::vector<AgentNets>& agents() const { return agents_; }
  std::vector<AgentNets>& mutable_agents() { return agents_; }
  int episodes_run() const { return episode_; }
  /// Mean gate-open frequency per distance rank accumulated since the given
  /// episode (for rate-compliance measurements).
  Vec gate_open_by_rank_since(int episode) const;
  double gate_open_rate_since(int episode) const;
  void save_agents(const std::string& path_prefix) const;

  /// One gradient pass over a batch for the given agent; exposed for tests.
  struct TdBatchResult {
    double loss = 0.0;
    double td_term = 0.0;
    double reg_term = 0.0;
  };
  TdBatchResult critic_gate_update(int agent, const std::vector<int>& batch, Rng& rng);
  double actor_update(int agent, const std::vector<int>& batch, Rng& rng);

 private:
  friend struct DeepTrainerProbe;
  std::vector<Vec> embeds_of(const Vec& obs) const;
  Vec element_of(const Vec& obs, const Vec& action) const;

  DeepConfig cfg_;
  envs::ParticleNav env_;
  std::vector<AgentNets> agents_;
  ReplayMemory memory_;
  MessageCounters counters_;
  Rng rng_;
  nets::GumbelSampler sampler_;
  int episode_ = 0;

  // gossip scheduling state
  std::vector<bandit::BiLevelBandit> bandits_;
  std::vector<std::optional<Vec>> rule_cache_;  // per (i, j) critic copies
  std::vector<BanditLogRow> pending_bandit_rows_;
  std::vector<bandit::BiLevelBandit::Decision> pending_decisions_;

  // gate statistics per rank: (episode, open counts, totals)
  std::vector<std::pair<long long, long long>> rank_open_;  // per rank since start
  std::vector<std::vector<std::pair<long long, long long>>> rank_open_history_;  // per episode

  int schedule_exchanges();
  void apply_exchange(int i, int j);
  double exploration_sigma() const;
};

/// Single-sample loss used by both training and the gradient checks: the
/// squared TD defect plus the rate regularizer, differentiated into the
/// critic and (through the straight-through relaxation) the gate.
struct GateCriticSample {
  Vec obs;
  std::vector<Vec> embeds;
  std::vector<Vec> elements;  // [self] + one per neighbor rank
  double target = 0.0;
  std::vector<Vec> noise;     // fixed Gumbel noise per rank
};

struct GateCriticGrads {
  double loss = 0.0;
  double td_term = 0.0;
  double reg_term = 0.0;
  Vec critic;
  Vec gate_enc;
  Vec gate_head;
};

/// relaxed=true runs the soft pathway end to end (what the straight-through
/// backward differentiates); relaxed=false uses the hard one-hot masks.
GateCriticGrads gate_critic_loss(const GateNet& gate, const nets::SetPoolNet& critic,
                                 const GateConfig& gc, const GateCriticSample& sample,
                                 bool relaxed);

}  // namespace macc::deep_ac
