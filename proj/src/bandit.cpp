#include "macc/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace macc::bandit {

Ewaf::Ewaf(int n_arms, double learning_rate, double exploration)
    : log_w_(n_arms, 0.0), eta_(learning_rate), gamma_(exploration) {
  if (n_arms < 2) throw std::invalid_argument("Ewaf: need at least two arms");
  if (exploration <= 0.0 || exploration >= 1.0)
    throw std::invalid_argument("Ewaf: exploration floor must be in (0, 1)");
}

Vec Ewaf::probabilities() const {
  const int k = n_arms();
  double mx = *std::max_element(log_w_.begin(), log_w_.end());
  Vec p(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp(log_w_[i] - mx);
    sum += p[i];
  }
  for (int i = 0; i < k; ++i) p[i] = (1.0 - gamma_) * p[i] / sum + gamma_ / k;
  return p;
}

int Ewaf::sample(Rng& rng) const { return rng.categorical(probabilities()); }

void Ewaf::update(int arm, double reward) {
  if (arm < 0 || arm >= n_arms()) throw std::invalid_argument("Ewaf::update: arm out of range");
  if (reward < -1.0 || reward > 1.0)
    throw std::invalid_argument("Ewaf::update: reward outside [-1, 1]");
  double p = probabilities()[arm];
  log_w_[arm] += eta_ * reward / p;
  // Keep the log weights centered so long runs stay well-scaled.
  double mx = *std::max_element(log_w_.begin(), log_w_.end());
  for (double& w : log_w_) w -= mx;
}

ShapeResult shape_reward(const std::vector<double>& window_returns,
                         const std::vector<int>& window_arms, double episode_return,
                         BanditLevel level) {
  ShapeResult res;
  if (window_returns.size() < 2) {
    res.neutral = true;
    return res;
  }
  double mean = 0.0;
  for (double g : window_returns) mean += g;
  mean /= static_cast<double>(window_returns.size());
  double var = 0.0;
  for (double g : window_returns) var += (g - mean) * (g - mean);
  var /= static_cast<double>(window_returns.size());
  double std_dev = std::sqrt(var);
  if (std_dev < 1e-8) {
    res.neutral = true;
    return res;
  }
  double z = (episode_return - mean) / std_dev;

  if (level == BanditLevel::kHigh) {
    int communicated = 0, skipped = 0;
    for (int a : window_arms) (a == 0 ? communicated : skipped)++;
    int divisor = (z >= 0.0) ? communicated : skipped;
    if (divisor == 0) {
      res.neutral = true;
      return res;
    }
    z /= static_cast<double>(divisor);
  }
  res.reward = 2.0 / (1.0 + std::exp(-z)) - 1.0;
  // The sigmoid keeps shaped rewards inside (-1, 1); extreme z saturates in
  // floating point, so clamp just inside the open interval.
  res.reward = std::clamp(res.reward, -1.0 + 1e-12, 1.0 - 1e-12);
  return res;
}

BiLevelBandit::BiLevelBandit(int n_agents, int self, int window, double learning_rate,
                             double exploration)
    : self_(self),
      window_(window),
      high_(2, learning_rate, exploration),
      low_(std::max(2, n_agents - 1), learning_rate, exploration) {
  if (n_agents < 2) throw std::invalid_argument("BiLevelBandit: need at least two agents");
  for (int j = 0; j < n_agents; ++j)
    if (j != self_) partner_of_arm_.push_back(j);
}

BiLevelBandit::Decision BiLevelBandit::decide(Rng& rng) {
  Decision d;
  d.communicate = high_.sample(rng);
  if (d.communicate == 0) d.partner = partner_of_arm_[low_.sample(rng) % partner_of_arm_.size()];
  return d;
}

BiLevelBandit::Feedback BiLevelBandit::after_episode(const Decision& decision,
                                                     double episode_return) {
  Feedback fb;

  // High level: every episode enters the window, newest pushed first so the
  // current return is part of its own normalization window.
  high_returns_.push_back(episode_return);
  high_arms_.push_back(decision.communicate);
  while (static_cast<int>(high_returns_.size()) > window_) {
    high_returns_.pop_front();
    high_arms_.pop_front();
  }
  auto hr = shape_reward({high_returns_.begin(), high_returns_.end()},
                         {high_arms_.begin(), high_arms_.end()}, episode_return, BanditLevel::kHigh);
  fb.high_reward = hr.reward;
  high_.update(decision.communicate, hr.reward);

  // Low level: only rounds that actually exchanged.
  if (decision.communicate == 0) {
    low_returns_.push_back(episode_return);
    while (static_cast<int>(low_returns_.size()) > window_) low_returns_.pop_front();
    auto lr = shape_reward({low_returns_.begin(), low_returns_.end()}, {}, episode_return,
                           BanditLevel::kLow);
    fb.low_reward = lr.reward;
    int arm = static_cast<int>(
        std::find(partner_of_arm_.begin(), partner_of_arm_.end(), decision.partner) -
        partner_of_arm_.begin());
    low_.update(arm, lr.reward);
  }
  return fb;
}

}  // namespace macc::bandit
