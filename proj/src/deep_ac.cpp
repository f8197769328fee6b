#include "macc/deep_ac.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace macc::deep_ac {

using nets::Activation;
using nets::DenseNet;
using nets::SetPoolNet;

GateNet::GateNet(int obs_dim, int embed_dim, int hidden)
    : enc_({obs_dim + embed_dim, hidden, hidden}, {Activation::kRelu, Activation::kRelu}),
      head_({2 * hidden, 2}, {Activation::kIdentity}) {}

void GateNet::init(Rng& rng) {
  enc_.init(rng);
  head_.init(rng);
}

std::vector<Vec> GateNet::assemble_inputs(const Vec& obs, const std::vector<Vec>& embeds) const {
  std::vector<Vec> inputs;
  inputs.reserve(embeds.size());
  for (const Vec& e : embeds) {
    Vec x = obs;
    x.insert(x.end(), e.begin(), e.end());
    inputs.push_back(std::move(x));
  }
  return inputs;
}

std::vector<Vec> GateNet::forward(const Vec& obs, const std::vector<Vec>& embeds,
                                  Cache* cache) const {
  const int k = static_cast<int>(embeds.size());
  if (k == 0) return {};
  auto inputs = assemble_inputs(obs, embeds);
  Cache local;
  Cache* c = cache ? cache : &local;
  c->enc.assign(k, {});
  c->head.assign(k, {});
  c->encoded.assign(k, {});
  const int h = enc_.out_dim();
  c->context.assign(h, 0.0);
  for (int j = 0; j < k; ++j) {
    c->encoded[j] = enc_.forward(inputs[j], &c->enc[j]);
    axpy(1.0 / k, c->encoded[j], c->context);
  }
  std::vector<Vec> logits(k);
  for (int j = 0; j < k; ++j) {
    Vec x = c->encoded[j];
    x.insert(x.end(), c->context.begin(), c->context.end());
    logits[j] = head_.forward(x, &c->head[j]);
  }
  return logits;
}

void GateNet::backward(const std::vector<Vec>& inputs, const Cache& cache,
                       const std::vector<Vec>& dlogits, Vec& enc_grads, Vec& head_grads) const {
  const int k = static_cast<int>(inputs.size());
  const int h = enc_.out_dim();
  if (enc_grads.size() != static_cast<std::size_t>(enc_.n_params()))
    throw std::invalid_argument("GateNet::backward: encoder grad size");
  if (head_grads.size() != static_cast<std::size_t>(head_.n_params()))
    throw std::invalid_argument("GateNet::backward: head grad size");

  std::vector<Vec> dencoded(k, Vec(h, 0.0));
  Vec dcontext(h, 0.0);
  for (int j = 0; j < k; ++j) {
    Vec dx = head_.backward(cache.head[j], dlogits[j], head_grads);
    for (int d = 0; d < h; ++d) {
      dencoded[j][d] += dx[d];
      dcontext[d] += dx[h + d];
    }
  }
  // The context is the mean of the encodings, so every element receives an
  // equal share of the context gradient.
  for (int j = 0; j < k; ++j) {
    Vec total = dencoded[j];
    axpy(1.0 / k, dcontext, total);
    enc_.backward(cache.enc[j], total, enc_grads);
  }
}

Vec GateNet::flatten_params() const {
  Vec out = enc_.flatten_params();
  Vec head = head_.flatten_params();
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

void GateNet::unflatten_params(const Vec& p) {
  if (p.size() != static_cast<std::size_t>(enc_.n_params() + head_.n_params()))
    throw std::invalid_argument("GateNet::unflatten_params: size mismatch");
  Vec enc(p.begin(), p.begin() + enc_.n_params());
  Vec head(p.begin() + enc_.n_params(), p.end());
  enc_.unflatten_params(enc);
  head_.unflatten_params(head);
}

AgentNets AgentNets::make(int obs_dim, int act_dim, int hidden, double lr_critic, double lr_actor,
                          double lr_gate, Rng& rng) {
  AgentNets a;
  a.gate = GateNet(obs_dim, 2, hidden);
  a.gate.init(rng);
  // Linear head: the pooled value of a set equals the mean of per-element
  // values pushed through the head.
  a.critic = SetPoolNet(DenseNet({obs_dim + act_dim, hidden, hidden},
                                 {Activation::kRelu, Activation::kRelu}),
                        nets::Pooling::kMean, DenseNet({hidden, 1}, {Activation::kIdentity}));
  a.critic.init(rng);
  a.actor = DenseNet({obs_dim, hidden, hidden, act_dim},
                     {Activation::kRelu, Activation::kRelu, Activation::kTanh});
  a.actor.init(rng);
  a.critic_target = a.critic;
  a.actor_target = a.actor;
  a.opt_gate = nets::AdamState(a.gate.enc_params() + a.gate.head_params(), lr_gate);
  a.opt_critic = nets::AdamState(a.critic.n_params(), lr_critic);
  a.opt_actor = nets::AdamState(a.actor.n_params(), lr_actor);
  return a;
}

void AgentNets::soft_update_targets(double rate) {
  auto blend = [rate](const Vec& online, Vec target) {
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += rate * (online[i] - target[i]);
    return target;
  };
  critic_target.unflatten_params(blend(critic.flatten_params(), critic_target.flatten_params()));
  actor_target.unflatten_params(blend(actor.flatten_params(), actor_target.flatten_params()));
}

Vec AgentNets::act(const Vec& obs) const { return actor.forward(obs); }
Vec AgentNets::act_target(const Vec& obs) const { return actor_target.forward(obs); }

void ReplayMemory::push(JointStep step) {
  buffer_.push_back(std::move(step));
  while (static_cast<int>(buffer_.size()) > capacity_) buffer_.pop_front();
}

std::vector<int> ReplayMemory::sample_indices(int batch, Rng& rng) const {
  if (buffer_.empty()) throw std::logic_error("ReplayMemory: sampling from an empty buffer");
  std::vector<int> out(batch);
  for (int& i : out) i = rng.uniform_int(static_cast<int>(buffer_.size()));
  return out;
}

SelectResult select_neighbors(const GateNet& gate, const GateConfig& gc, const Vec& obs,
                              const std::vector<Vec>& embeds, Rng& rng) {
  SelectResult res;
  if (embeds.empty()) return res;
  nets::GumbelSampler sampler(gc.tau);
  auto logits = gate.forward(obs, embeds, nullptr);
  res.open_probs.resize(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    auto s = sampler.sample(logits[j], rng);
    res.open.push_back(s.index == 0 ? 1 : 0);
    double z = logits[j][0] - logits[j][1];
    res.open_probs[j] = 1.0 / (1.0 + std::exp(-z));
    res.samples.push_back(std::move(s));
  }
  return res;
}

double critic_value(const nets::SetPoolNet& critic, const std::vector<Vec>& elements) {
  return critic.forward(elements)[0];
}

GateCriticGrads gate_critic_loss(const GateNet& gate, const nets::SetPoolNet& critic,
                                 const GateConfig& gc, const GateCriticSample& sample,
                                 bool relaxed) {
  const int k = static_cast<int>(sample.embeds.size());
  if (static_cast<int>(sample.elements.size()) != k + 1)
    throw std::invalid_argument("gate_critic_loss: elements must be [self] + one per neighbor");
  nets::GumbelSampler sampler(gc.tau);

  GateNet::Cache gate_cache;
  auto logits = gate.forward(sample.obs, sample.embeds, &gate_cache);

  std::vector<Vec> soft(k);
  Vec weights(k + 1, 1.0);
  for (int j = 0; j < k; ++j) {
    soft[j] = sampler.soft(logits[j], sample.noise[j]);
    if (relaxed) {
      weights[j + 1] = soft[j][0];
    } else {
      int arg = (logits[j][0] + sample.noise[j][0] >= logits[j][1] + sample.noise[j][1]) ? 0 : 1;
      weights[j + 1] = arg == 0 ? 1.0 : 0.0;
    }
  }

  SetPoolNet::Cache critic_cache;
  double q = critic.forward(sample.elements, &critic_cache, &weights)[0];
  double defect = q - sample.target;

  GateCriticGrads out;
  out.td_term = defect * defect;
  auto grads = critic.backward(sample.elements, critic_cache, {2.0 * defect});
  out.critic = grads.encoder_params;
  out.critic.insert(out.critic.end(), grads.head_params.begin(), grads.head_params.end());

  // Rate regularizer on the noiseless open probabilities.
  Vec open_prob(k);
  for (int j = 0; j < k; ++j) {
    double z = logits[j][0] - logits[j][1];
    open_prob[j] = 1.0 / (1.0 + std::exp(-z));
  }
  std::vector<int> reg_members;
  if (gc.literal_selected_mean) {
    for (int j = 0; j < k; ++j)
      if (weights[j + 1] > 0.5) reg_members.push_back(j);
  } else {
    for (int j = 0; j < k; ++j) reg_members.push_back(j);
  }
  double mean_open = 0.0;
  if (!reg_members.empty()) {
    for (int j : reg_members) mean_open += open_prob[j];
    mean_open /= static_cast<double>(reg_members.size());
    out.reg_term = gc.alpha * std::fabs(mean_open - gc.eta);
  } else {
    out.reg_term = gc.alpha * gc.eta;  // |0 - eta|, nothing to differentiate
  }
  out.loss = out.td_term + out.reg_term;

  std::vector<Vec> dlogits(k, Vec(2, 0.0));
  for (int j = 0; j < k; ++j) {
    // TD path: gradient reaches the mask weight, then flows through the
    // straight-through softmax into the logits.
    Vec up = {grads.weights[j + 1], 0.0};
    dlogits[j] = sampler.backward(soft[j], up);
  }
  if (!reg_members.empty()) {
    double sgn = (mean_open - gc.eta) > 0 ? 1.0 : ((mean_open - gc.eta) < 0 ? -1.0 : 0.0);
    double coeff = gc.alpha * sgn / static_cast<double>(reg_members.size());
    for (int j : reg_members) {
      double s = open_prob[j];
      double dds = coeff * s * (1.0 - s);
      dlogits[j][0] += dds;
      dlogits[j][1] -= dds;
    }
  }

  out.gate_enc.assign(gate.enc_params(), 0.0);
  out.gate_head.assign(gate.head_params(), 0.0);
  gate.backward(gate.assemble_inputs(sample.obs, sample.embeds), gate_cache, dlogits, out.gate_enc,
                out.gate_head);
  return out;
}

DeepTrainer::DeepTrainer(const DeepConfig& cfg)
    : cfg_(cfg),
      env_(cfg.n, cfg.k),
      memory_(cfg.memory_capacity),
      rng_(cfg.seed),
      sampler_(cfg.gate.tau) {
  Rng init_rng = rng_.fork(1);
  for (int i = 0; i < cfg_.n; ++i)
    agents_.push_back(AgentNets::make(env_.obs_dim(), env_.action_dim(), cfg_.hidden,
                                      cfg_.lr_critic, cfg_.lr_actor, cfg_.lr_gate, init_rng));
  for (int i = 0; i < cfg_.n; ++i) bandits_.emplace_back(cfg_.n, i, 10, 0.1, 0.1);
  rule_cache_.assign(static_cast<std::size_t>(cfg_.n) * cfg_.n, std::nullopt);
  rank_open_.assign(cfg_.k, {0, 0});
}

std::vector<Vec> DeepTrainer::embeds_of(const Vec& obs) const {
  std::vector<Vec> out;
  for (int r = 0; r < cfg_.k; ++r) {
    int off = env_.neighbor_block_offset(r);
    out.push_back({obs[off], obs[off + 1]});
  }
  return out;
}

Vec DeepTrainer::element_of(const Vec& obs, const Vec& action) const {
  Vec e = obs;
  e.insert(e.end(), action.begin(), action.end());
  return e;
}

double DeepTrainer::exploration_sigma() const {
  double frac = cfg_.episodes <= 1 ? 1.0 : static_cast<double>(episode_) / (cfg_.episodes - 1);
  frac = std::min(1.0, frac);
  return cfg_.sigma_start + (cfg_.sigma_end - cfg_.sigma_start) * frac;
}

void DeepTrainer::apply_exchange(int i, int j) {
  auto average = [](Vec a, const Vec& b) {
    for (std::size_t d = 0; d < a.size(); ++d) a[d] = 0.5 * (a[d] + b[d]);
    return a;
  };
  Vec critic_avg = average(agents_[i].critic.flatten_params(), agents_[j].critic.flatten_params());
  Vec actor_avg = average(agents_[i].actor.flatten_params(), agents_[j].actor.flatten_params());
  agents_[i].critic.unflatten_params(critic_avg);
  agents_[j].critic.unflatten_params(critic_avg);
  agents_[i].actor.unflatten_params(actor_avg);
  agents_[j].actor.unflatten_params(actor_avg);
  counters_.param_messages += 2;
  counters_.param_bytes += 2 * static_cast<long long>(critic_avg.size() + actor_avg.size()) * 8;
}

int DeepTrainer::schedule_exchanges() {
  pending_decisions_.clear();
  pending_bandit_rows_.clear();
  if (cfg_.independent || cfg_.scheduler == SchedulerKind::kNone) return 0;

  if (cfg_.scheduler == SchedulerKind::kFull) {
    const int n = cfg_.n;
    Vec critic_mean(agents_[0].critic.n_params(), 0.0);
    Vec actor_mean(agents_[0].actor.n_params(), 0.0);
    for (const auto& a : agents_) {
      axpy(1.0 / n, a.critic.flatten_params(), critic_mean);
      axpy(1.0 / n, a.actor.flatten_params(), actor_mean);
    }
    for (auto& a : agents_) {
      a.critic.unflatten_params(critic_mean);
      a.actor.unflatten_params(actor_mean);
    }
    counters_.param_messages += static_cast<long long>(n) * (n - 1);
    counters_.param_bytes += static_cast<long long>(n) * (n - 1) *
                             static_cast<long long>(critic_mean.size() + actor_mean.size()) * 8;
    return n * (n - 1) / 2;
  }

  int exchanges = 0;
  for (int i = 0; i < cfg_.n; ++i) {
    if (cfg_.scheduler == SchedulerKind::kBandit) {
      auto d = bandits_[i].decide(rng_);
      pending_decisions_.push_back(d);
      if (d.communicate == 0) {
        apply_exchange(i, d.partner);
        ++exchanges;
      }
      continue;
    }
    if (rng_.uniform() >= cfg_.exchange_rate) continue;
    int partner = -1;
    if (cfg_.scheduler == SchedulerKind::kRandom) {
      partner = rng_.uniform_int(cfg_.n - 1);
      if (partner >= i) ++partner;
    } else {  // rule-based: largest L1 drift against the cached copy
      Vec own = agents_[i].critic.flatten_params();
      double best = -1.0;
      bool any_cache = false;
      for (int j = 0; j < cfg_.n; ++j) {
        if (j == i) continue;
        const auto& cache = rule_cache_[static_cast<std::size_t>(i) * cfg_.n + j];
        if (!cache) continue;
        any_cache = true;
        double l1 = 0.0;
        for (std::size_t d = 0; d < own.size(); ++d) l1 += std::fabs(own[d] - (*cache)[d]);
        if (l1 > best) {
          best = l1;
          partner = j;
        }
      }
      if (!any_cache) {
        partner = rng_.uniform_int(cfg_.n - 1);
        if (partner >= i) ++partner;
      }
    }
    apply_exchange(i, partner);
    ++exchanges;
    if (cfg_.scheduler == SchedulerKind::kRule) {
      rule_cache_[static_cast<std::size_t>(i) * cfg_.n + partner] =
          agents_[partner].critic.flatten_params();
      rule_cache_[static_cast<std::size_t>(partner) * cfg_.n + i] =
          agents_[i].critic.flatten_params();
    }
  }
  return exchanges;
}

EpisodeRecord DeepTrainer::run_episode() {
  EpisodeRecord rec;
  rec.episode = episode_;
  long long obs_before = counters_.obs_messages;
  long long param_before = counters_.param_messages;

  schedule_exchanges();

  std::uint64_t ep_seed = cfg_.seed ^ (0x9e3779b97f4a7c15ull * (episode_ + 1));
  auto obs = env_.reset(ep_seed);
  std::vector<std::vector<int>> neighbors(cfg_.n);
  for (int i = 0; i < cfg_.n; ++i) neighbors[i] = env_.neighbor_ids(i);

  double g = 0.0;
  double sigma = exploration_sigma();
  std::vector<std::pair<long long, long long>> ep_rank(cfg_.k, {0, 0});

  for (int t = 0; t < env_.episode_len(); ++t) {
    std::vector<Vec> actions(cfg_.n);
    for (int i = 0; i < cfg_.n; ++i) {
      Vec a = agents_[i].act(obs[i]);
      for (double& x : a) x = std::clamp(x + sigma * rng_.normal(), -1.0, 1.0);
      actions[i] = std::move(a);
    }

    // Rollout-time gate decisions drive the message accounting.
    if (!cfg_.independent) {
      for (int i = 0; i < cfg_.n; ++i) {
        if (cfg_.full_communication) {
          counters_.obs_messages += cfg_.k;
          counters_.obs_bytes += static_cast<long long>(cfg_.k) * (env_.obs_dim() + 2) * 8;
          for (int r = 0; r < cfg_.k; ++r) {
            ++ep_rank[r].first;
            ++ep_rank[r].second;
          }
        } else {
          auto sel = select_neighbors(agents_[i].gate, cfg_.gate, obs[i], embeds_of(obs[i]), rng_);
          for (int r = 0; r < cfg_.k; ++r) {
            ep_rank[r].first += sel.open[r];
            ++ep_rank[r].second;
            if (sel.open[r]) {
              ++counters_.obs_messages;
              counters_.obs_bytes += (env_.obs_dim() + 2) * 8;
            }
          }
        }
      }
    }

    auto step = env_.step(actions);
    JointStep js;
    js.obs = obs;
    js.actions = actions;
    js.rewards = step.rewards;
    js.next_obs = step.obs;
    js.neighbors = neighbors;
    js.next_neighbors.resize(cfg_.n);
    for (int i = 0; i < cfg_.n; ++i) js.next_neighbors[i] = env_.neighbor_ids(i);

    double mean_r = 0.0;
    for (double r : step.rewards) mean_r += r;
    mean_r /= cfg_.n;
    g = mean_r + cfg_.gamma * g;
    rec.sum_return += mean_r;

    obs = step.obs;
    neighbors = js.next_neighbors;
    memory_.push(std::move(js));
  }
  rec.shaped_return = g;

  if (memory_.size() >= cfg_.batch &&
      (cfg_.update_every <= 1 || episode_ % cfg_.update_every == 0)) {
    for (int i = 0; i < cfg_.n; ++i) {
      auto batch = memory_.sample_indices(cfg_.batch, rng_);
      critic_gate_update(i, batch, rng_);
    }
    for (int i = 0; i < cfg_.n; ++i) {
      auto batch = memory_.sample_indices(cfg_.batch, rng_);
      actor_update(i, batch, rng_);
    }
    for (auto& a : agents_) a.soft_update_targets(cfg_.soft_update);
  }

  if (cfg_.scheduler == SchedulerKind::kBandit && !cfg_.independent) {
    for (int i = 0; i < cfg_.n; ++i) {
      auto fb = bandits_[i].after_episode(pending_decisions_[i], g);
      BanditLogRow row;
      row.episode = episode_;
      row.agent = i;
      row.x1 = pending_decisions_[i].communicate;
      row.x2 = pending_decisions_[i].partner;
      row.r1 = fb.high_reward;
      row.r2 = fb.low_reward;
      row.p_communicate = bandits_[i].communicate_probability();
      pending_bandit_rows_.push_back(row);
    }
  }

  rec.obs_messages = counters_.obs_messages - obs_before;
  rec.param_messages = counters_.param_messages - param_before;
  rec.gate_open_by_rank.assign(cfg_.k, 0.0);
  double opens = 0.0, total = 0.0;
  for (int r = 0; r < cfg_.k; ++r) {
    rank_open_[r].first += ep_rank[r].first;
    rank_open_[r].second += ep_rank[r].second;
    rec.gate_open_by_rank[r] =
        ep_rank[r].second ? static_cast<double>(ep_rank[r].first) / ep_rank[r].second : 0.0;
    opens += ep_rank[r].first;
    total += ep_rank[r].second;
  }
  rec.gate_open_rate = total > 0 ? opens / total : 0.0;
  rank_open_history_.push_back(ep_rank);

  ++episode_;
  return rec;
}

DeepTrainer::TdBatchResult DeepTrainer::critic_gate_update(int agent,
                                                           const std::vector<int>& batch,
                                                           Rng& rng) {
  TdBatchResult res;
  AgentNets& agent_nets = agents_[agent];
  Vec critic_g(agent_nets.critic.n_params(), 0.0);
  Vec gate_enc_g(agent_nets.gate.enc_params(), 0.0);
  Vec gate_head_g(agent_nets.gate.head_params(), 0.0);
  const double inv_b = 1.0 / batch.size();

  for (int idx : batch) {
    const JointStep& step = memory_.at(idx);

    // TD target from the target networks with a fresh next-step selection.
    double next_q;
    {
      std::vector<Vec> next_elements;
      next_elements.push_back(
          element_of(step.next_obs[agent], agent_nets.act_target(step.next_obs[agent])));
      Vec next_weights = {1.0};
      if (!cfg_.independent) {
        if (cfg_.full_communication) {
          for (int j : step.next_neighbors[agent]) {
            next_elements.push_back(
                element_of(step.next_obs[j], agents_[j].act_target(step.next_obs[j])));
            next_weights.push_back(1.0);
          }
        } else {
          auto sel = select_neighbors(agent_nets.gate, cfg_.gate, step.next_obs[agent],
                                      embeds_of(step.next_obs[agent]), rng);
          for (std::size_t r = 0; r < step.next_neighbors[agent].size(); ++r) {
            int j = step.next_neighbors[agent][r];
            next_elements.push_back(
                element_of(step.next_obs[j], agents_[j].act_target(step.next_obs[j])));
            next_weights.push_back(sel.open[r] ? 1.0 : 0.0);
          }
        }
      }
      next_q = agent_nets.critic_target.forward(next_elements, nullptr, &next_weights)[0];
    }
    double y = step.rewards[agent] + cfg_.gamma * next_q;

    if (cfg_.independent || cfg_.full_communication) {
      // No gate to train: plain TD on the fixed element set.
      std::vector<Vec> elements;
      elements.push_back(element_of(step.obs[agent], step.actions[agent]));
      Vec weights = {1.0};
      if (cfg_.full_communication)
        for (int j : step.neighbors[agent]) {
          elements.push_back(element_of(step.obs[j], step.actions[j]));
          weights.push_back(1.0);
        }
      SetPoolNet::Cache cache;
      double q = agent_nets.critic.forward(elements, &cache, &weights)[0];
      double defect = q - y;
      res.td_term += defect * defect * inv_b;
      auto grads = agent_nets.critic.backward(elements, cache, {2.0 * defect * inv_b});
      Vec flat = grads.encoder_params;
      flat.insert(flat.end(), grads.head_params.begin(), grads.head_params.end());
      axpy(1.0, flat, critic_g);
      continue;
    }

    GateCriticSample sample;
    sample.obs = step.obs[agent];
    sample.embeds = embeds_of(step.obs[agent]);
    sample.elements.push_back(element_of(step.obs[agent], step.actions[agent]));
    for (int j : step.neighbors[agent])
      sample.elements.push_back(element_of(step.obs[j], step.actions[j]));
    sample.target = y;
    sample.noise.resize(cfg_.k);
    for (auto& nz : sample.noise) nz = {rng.gumbel(), rng.gumbel()};

    auto grads = gate_critic_loss(agent_nets.gate, agent_nets.critic, cfg_.gate, sample,
                                  /*relaxed=*/false);
    res.td_term += grads.td_term * inv_b;
    res.reg_term += grads.reg_term * inv_b;
    axpy(inv_b, grads.critic, critic_g);
    axpy(inv_b, grads.gate_enc, gate_enc_g);
    axpy(inv_b, grads.gate_head, gate_head_g);
  }
  res.loss = res.td_term + res.reg_term;

  Vec critic_params = agent_nets.critic.flatten_params();
  agent_nets.opt_critic.step(critic_params, critic_g);
  agent_nets.critic.unflatten_params(critic_params);

  if (!cfg_.independent && !cfg_.full_communication) {
    Vec gate_params = agent_nets.gate.flatten_params();
    Vec gate_g = gate_enc_g;
    gate_g.insert(gate_g.end(), gate_head_g.begin(), gate_head_g.end());
    agent_nets.opt_gate.step(gate_params, gate_g);
    agent_nets.gate.unflatten_params(gate_params);
  }
  return res;
}

double DeepTrainer::actor_update(int agent, const std::vector<int>& batch, Rng& rng) {
  AgentNets& agent_nets = agents_[agent];
  Vec actor_g(agent_nets.actor.n_params(), 0.0);
  const double inv_b = 1.0 / batch.size();
  double mean_q = 0.0;

  for (int idx : batch) {
    const JointStep& step = memory_.at(idx);
    DenseNet::Cache actor_cache;
    Vec self_action = agent_nets.actor.forward(step.obs[agent], &actor_cache);

    std::vector<Vec> elements;
    elements.push_back(element_of(step.obs[agent], self_action));
    Vec weights = {1.0};
    if (!cfg_.independent) {
      if (cfg_.full_communication) {
        for (int j : step.neighbors[agent]) {
          elements.push_back(element_of(step.obs[j], step.actions[j]));
          weights.push_back(1.0);
        }
      } else {
        auto sel = select_neighbors(agent_nets.gate, cfg_.gate, step.obs[agent],
                                    embeds_of(step.obs[agent]), rng);
        for (std::size_t r = 0; r < step.neighbors[agent].size(); ++r) {
          int j = step.neighbors[agent][r];
          elements.push_back(element_of(step.obs[j], step.actions[j]));
          weights.push_back(sel.open[r] ? 1.0 : 0.0);
        }
      }
    }

    SetPoolNet::Cache cache;
    double q = agent_nets.critic.forward(elements, &cache, &weights)[0];
    mean_q += q * inv_b;
    // Ascend Q: the loss handed to the optimizer is -Q.
    auto grads = agent_nets.critic.backward(elements, cache, {-inv_b});
    const Vec& dself = grads.inputs[0];
    Vec dact(dself.end() - env_.action_dim(), dself.end());
    agent_nets.actor.backward(actor_cache, dact, actor_g);
  }

  Vec actor_params = agent_nets.actor.flatten_params();
  agent_nets.opt_actor.step(actor_params, actor_g);
  agent_nets.actor.unflatten_params(actor_params);
  return mean_q;
}

EvalPoint DeepTrainer::evaluate(int n_episodes) {
  EvalPoint point;
  point.episode = episode_;
  envs::ParticleNav eval_env(cfg_.n, cfg_.k);
  std::vector<double> returns;
  for (int e = 0; e < n_episodes; ++e) {
    std::uint64_t seed = cfg_.seed ^ 0xabcdefull ^ (0x9e3779b97f4a7c15ull * (e + 1));
    auto obs = eval_env.reset(seed);
    double ret = 0.0;
    for (int t = 0; t < eval_env.episode_len(); ++t) {
      std::vector<Vec> actions(cfg_.n);
      for (int i = 0; i < cfg_.n; ++i) actions[i] = agents_[i].act(obs[i]);
      auto step = eval_env.step(actions);
      double mean_r = 0.0;
      for (double r : step.rewards) mean_r += r;
      ret += mean_r / cfg_.n;
      obs = step.obs;
    }
    returns.push_back(ret);
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= returns.size();
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  point.mean_return = mean;
  point.std_return = std::sqrt(var / returns.size());
  return point;
}

void DeepTrainer::train_full_run(std::vector<EpisodeRecord>* episode_log,
                                 std::vector<EvalPoint>* eval_log,
                                 std::vector<BanditLogRow>* bandit_log) {
  for (int e = 0; e < cfg_.episodes; ++e) {
    auto rec = run_episode();
    if (episode_log) episode_log->push_back(rec);
    if (bandit_log)
      for (const auto& row : pending_bandit_rows_) bandit_log->push_back(row);
    if (eval_log && (episode_ % cfg_.eval_every == 0 || episode_ == cfg_.episodes))
      eval_log->push_back(evaluate(cfg_.eval_episodes));
  }
}

Vec DeepTrainer::gate_open_by_rank_since(int episode) const {
  Vec out(cfg_.k, 0.0);
  std::vector<long long> opens(cfg_.k, 0), totals(cfg_.k, 0);
  for (std::size_t e = std::max(0, episode); e < rank_open_history_.size(); ++e)
    for (int r = 0; r < cfg_.k; ++r) {
      opens[r] += rank_open_history_[e][r].first;
      totals[r] += rank_open_history_[e][r].second;
    }
  for (int r = 0; r < cfg_.k; ++r)
    out[r] = totals[r] ? static_cast<double>(opens[r]) / totals[r] : 0.0;
  return out;
}

double DeepTrainer::gate_open_rate_since(int episode) const {
  Vec by_rank = gate_open_by_rank_since(episode);
  double sum = 0.0;
  for (double x : by_rank) sum += x;
  return by_rank.empty() ? 0.0 : sum / by_rank.size();
}

void DeepTrainer::save_agents(const std::string& path_prefix) const {
  std::vector<std::pair<std::string, Vec>> entries;
  for (int i = 0; i < cfg_.n; ++i) {
    std::string tag = "agent" + std::to_string(i);
    entries.emplace_back(tag + ".gate", agents_[i].gate.flatten_params());
    entries.emplace_back(tag + ".critic", agents_[i].critic.flatten_params());
    entries.emplace_back(tag + ".actor", agents_[i].actor.flatten_params());
  }
  nets::save_params(path_prefix, entries);
}

}  // namespace macc::deep_ac
