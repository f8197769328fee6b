#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "macc/linalg.hpp"
#include "macc/rng.hpp"

namespace macc::bandit {

/// Exponentially weighted forecaster with importance-weighted updates and a
/// uniform exploration floor; only the pulled arm's reward is observed.
/// Weights live in the log domain so arbitrary reward sequences in [-1, 1]
/// stay finite and normalizable.
class Ewaf {
 public:
  Ewaf(int n_arms, double learning_rate = 0.1, double exploration = 0.1);

  int n_arms() const { return static_cast<int>(log_w_.size()); }
  /// Sampling distribution: (1 - gamma) softmax(log w) + gamma / K.
  Vec probabilities() const;
  int sample(Rng& rng) const;
  /// Importance-weighted update of the pulled arm with reward in [-1, 1].
  void update(int arm, double reward);

 private:
  Vec log_w_;
  double eta_;
  double gamma_;
};

enum class BanditLevel { kHigh, kLow };

/// Reward shaping for the scheduler. The return is z-scored against the
/// last-l window (population std, floored at 1e-8); the high level then
/// divides by the count of same-signed arm picks in the window before the
/// sigmoid squashing into (-1, 1). Insufficient window or zero spread gives
/// the neutral reward 0.
struct ShapeResult {
  double reward = 0.0;
  bool neutral = false;  // window too short / zero std / zero arm count
};
ShapeResult shape_reward(const std::vector<double>& window_returns,
                         const std::vector<int>& window_arms, double episode_return,
                         BanditLevel level);

/// Per-agent scheduler state: a 2-arm "exchange or not" learner on top of an
/// (N-1)-arm partner learner. High-level records take every episode; low
/// level records only episodes that exchanged.
class BiLevelBandit {
 public:
  BiLevelBandit(int n_agents, int self, int window = 10, double learning_rate = 0.1,
                double exploration = 0.1);

  struct Decision {
    int communicate = 0;  // arm 0 = exchange, arm 1 = skip
    int partner = -1;     // agent index when communicating
  };
  Decision decide(Rng& rng);

  /// Feeds the episode return back; updates both levels per the decision.
  struct Feedback {
    double high_reward = 0.0;
    double low_reward = 0.0;
  };
  Feedback after_episode(const Decision& decision, double episode_return);

  double communicate_probability() const { return high_.probabilities()[0]; }
  Vec partner_probabilities() const { return low_.probabilities(); }

 private:
  int self_;
  int window_;
  Ewaf high_;
  Ewaf low_;
  std::deque<double> high_returns_;
  std::deque<int> high_arms_;
  std::deque<double> low_returns_;
  std::vector<int> partner_of_arm_;
};

}  // namespace macc::bandit
