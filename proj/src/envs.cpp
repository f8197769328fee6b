#include "macc/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace macc::envs {

namespace triangle {

double reward(const std::array<bool, 3>& shapes_up, const std::array<bool, 3>& acts_up) {
  int ups = 0;
  for (bool s : shapes_up) ups += s ? 1 : 0;
  const bool even = (ups % 2 == 0);
  for (int i = 0; i < 3; ++i) {
    // Even count: up-shape agents must go up; odd count: reversed.
    bool want_up = even ? shapes_up[i] : !shapes_up[i];
    if (acts_up[i] != want_up) return 0.0;
  }
  return 1.0;
}

namespace {

const char* kPos[3] = {"L", "M", "R"};

std::string local_label(int pos, bool up) { return std::string(kPos[pos]) + (up ? "^" : "v"); }

// Observation: own position + the three shapes clockwise L->M->R starting
// from one's own position.
std::string obs_label(int pos, const std::array<bool, 3>& shape_at_pos) {
  std::string s(kPos[pos]);
  s += ':';
  for (int d = 0; d < 3; ++d) s += shape_at_pos[(pos + d) % 3] ? '^' : 'v';
  return s;
}

}  // namespace

FiniteEnvBundle build() {
  mg::MgBuilder b(3, 0.95);
  std::vector<std::string> locals;
  for (int p = 0; p < 3; ++p)
    for (bool up : {true, false}) locals.push_back(local_label(p, up));
  locals.push_back("#");
  b.local_state_space_all(locals);
  b.local_action_space_all({"up", "down"});
  b.finalize_actions();

  // All 48 assignments: a permutation of positions across agents, shapes free.
  struct StateInfo {
    int id;
    std::array<int, 3> pos_of_agent;
    std::array<bool, 3> shape_of_agent;  // up?
  };
  std::vector<StateInfo> infos;
  std::array<int, 3> perm = {0, 1, 2};
  std::sort(perm.begin(), perm.end());
  do {
    for (int mask = 0; mask < 8; ++mask) {
      std::array<bool, 3> up{};
      for (int i = 0; i < 3; ++i) up[i] = (mask >> i) & 1;
      std::vector<std::string> labels(3);
      for (int i = 0; i < 3; ++i) labels[i] = local_label(perm[i], up[i]);
      int id = b.add_state(labels);
      b.set_initial(id, 1.0);
      infos.push_back({id, perm, up});
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  int sink = b.add_state({"#", "#", "#"});
  b.set_terminal(sink);

  // Joint actions follow the builder's product order: agent 1 slowest,
  // agent 3 fastest, "up" before "down".
  std::vector<std::array<bool, 3>> act_up_of;
  {
    for (int a0 = 0; a0 < 2; ++a0)
      for (int a1 = 0; a1 < 2; ++a1)
        for (int a2 = 0; a2 < 2; ++a2)
          act_up_of.push_back({a0 == 0, a1 == 0, a2 == 0});
  }
  for (const auto& info : infos) {
    for (int a = 0; a < 8; ++a) {
      b.add_transition(info.id, a, sink, 1.0);
      b.set_shared_reward(info.id, a, reward(info.shape_of_agent, act_up_of[a]));
    }
  }

  mg::FiniteMG game = b.build();

  std::vector<std::string> obs_labels;
  for (int p = 0; p < 3; ++p)
    for (int mask = 0; mask < 8; ++mask) {
      std::array<bool, 3> shape_at_pos{};
      for (int q = 0; q < 3; ++q) shape_at_pos[q] = (mask >> q) & 1;
      obs_labels.push_back(obs_label(p, shape_at_pos));
    }
  obs_labels.push_back("#");
  mg::ObservationMap obs(3, obs_labels);

  for (const auto& info : infos) {
    std::array<bool, 3> shape_at_pos{};
    for (int i = 0; i < 3; ++i) shape_at_pos[info.pos_of_agent[i]] = info.shape_of_agent[i];
    for (int i = 0; i < 3; ++i)
      obs.set_by_label(info.id, i, obs_label(info.pos_of_agent[i], shape_at_pos));
  }
  for (int i = 0; i < 3; ++i) obs.set_by_label(game.n_states() - 1, i, "#");

  obs.validate(game);
  return {std::move(game), std::move(obs)};
}

}  // namespace triangle

namespace kuba {

FiniteEnvBundle build(int n_agents) {
  if (n_agents < 2 || n_agents % 2 != 0)
    throw std::invalid_argument("kuba::build: N must be even and >= 2");
  if (n_agents > 6) throw std::invalid_argument("kuba::build: N > 6 is too large to enumerate");

  mg::MgBuilder b(n_agents, 0.95);
  std::vector<std::string> locals;
  for (int i = 0; i < n_agents; ++i) locals.push_back("s" + std::to_string(i));
  locals.push_back("#");
  b.local_state_space_all(locals);
  b.local_action_space_all({"0", "1"});
  b.finalize_actions();

  // All N! seatings; the played game starts (and stays, for one step) at the
  // identity seating.
  std::vector<int> seat(n_agents);
  std::iota(seat.begin(), seat.end(), 0);
  std::vector<std::pair<int, std::vector<int>>> states;
  int s0 = -1;
  do {
    std::vector<std::string> labels(n_agents);
    for (int i = 0; i < n_agents; ++i) labels[i] = "s" + std::to_string(seat[i]);
    int id = b.add_state(labels);
    states.emplace_back(id, seat);
    bool identity = true;
    for (int i = 0; i < n_agents; ++i) identity &= (seat[i] == i);
    if (identity) s0 = id;
  } while (std::next_permutation(seat.begin(), seat.end()));

  int sink = b.add_state(std::vector<std::string>(n_agents, "#"));
  b.set_terminal(sink);
  b.set_initial(s0, 1.0);

  const int n_actions = 1 << n_agents;
  for (const auto& [id, seating] : states) {
    for (int a = 0; a < n_actions; ++a) {
      b.add_transition(id, a, sink, 1.0);
      // Action bit of agent i: the product order makes the last agent
      // fastest, so agent i's bit sits at position (N-1-i).
      bool rewarding = true;
      for (int i = 0; i < n_agents; ++i) {
        int bit = (a >> (n_agents - 1 - i)) & 1;
        int want = (seating[i] < n_agents / 2) ? 0 : 1;
        if (bit != want) {
          rewarding = false;
          break;
        }
      }
      b.set_shared_reward(id, a, rewarding ? 1.0 : 0.0);
    }
  }

  mg::FiniteMG game = b.build();

  // Identity observations: every agent sees the raw joint state.
  std::vector<std::string> obs_labels;
  for (int s = 0; s < game.n_states(); ++s) obs_labels.push_back(game.state_label(s));
  mg::ObservationMap obs(n_agents, obs_labels, /*full_observability=*/true);
  for (int s = 0; s < game.n_states(); ++s)
    for (int i = 0; i < n_agents; ++i) obs.set(s, i, s);
  obs.validate(game);
  return {std::move(game), std::move(obs)};
}

}  // namespace kuba

CosineToy::CosineToy(int n_agents) : n_(n_agents) {
  if (n_agents < 2) throw std::invalid_argument("CosineToy: N must be >= 2");
  values_.resize(n_);
  for (int i = 0; i < n_; ++i)
    values_[i] = std::cos(static_cast<double>(i) / (n_ - 1) * M_PI);
}

double CosineToy::reward_of_tuple(const std::vector<double>& vals, const std::vector<int>& bits) const {
  int n_pos = 0, n_neg = 0, ones_pos = 0, ones_neg = 0;
  for (int i = 0; i < n_; ++i) {
    if (vals[i] >= 0.0) {
      ++n_pos;
      ones_pos += bits[i];
    } else {
      ++n_neg;
      ones_neg += bits[i];
    }
  }
  double r = 0.0;
  if (n_pos > 0) r += static_cast<double>(ones_pos) / n_pos;
  if (n_neg > 0) r -= static_cast<double>(ones_neg) / n_neg;
  return r;
}

double CosineToy::reward(const std::vector<int>& bits) const {
  if (static_cast<int>(bits.size()) != n_) throw std::invalid_argument("CosineToy::reward: arity");
  return reward_of_tuple(values_, bits);
}

double CosineToy::expected_reward(const std::vector<double>& p_one) const {
  if (static_cast<int>(p_one.size()) != n_)
    throw std::invalid_argument("CosineToy::expected_reward: arity");
  double pos = 0.0, neg = 0.0;
  int n_pos = 0, n_neg = 0;
  for (int i = 0; i < n_; ++i) {
    if (values_[i] >= 0.0) {
      pos += p_one[i];
      ++n_pos;
    } else {
      neg += p_one[i];
      ++n_neg;
    }
  }
  double r = 0.0;
  if (n_pos > 0) r += pos / n_pos;
  if (n_neg > 0) r -= neg / n_neg;
  return r;
}

std::vector<int> CosineToy::optimal_bits() const {
  std::vector<int> bits(n_);
  for (int i = 0; i < n_; ++i) bits[i] = positive(i) ? 1 : 0;
  return bits;
}

double CosineToy::brute_force_max() const {
  if (n_ > 20) throw std::invalid_argument("CosineToy::brute_force_max: N too large");
  double best = -1e300;
  std::vector<int> bits(n_);
  for (long long a = 0; a < (1ll << n_); ++a) {
    for (int i = 0; i < n_; ++i) bits[i] = (a >> i) & 1;
    best = std::max(best, reward(bits));
  }
  return best;
}

namespace {

std::string value_label(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

FiniteEnvBundle CosineToy::build_one_step() const {
  if (n_ > 6) throw std::invalid_argument("CosineToy::build_one_step: N > 6 is too large to enumerate");
  mg::MgBuilder b(n_, kRepeatedDiscount);
  std::vector<std::string> locals;
  for (double v : values_) locals.push_back(value_label(v));
  locals.push_back("#");
  b.local_state_space_all(locals);
  b.local_action_space_all({"0", "1"});
  b.finalize_actions();

  std::vector<int> order(n_);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end());
  std::vector<std::pair<int, std::vector<int>>> states;
  int s0 = -1;
  do {
    std::vector<std::string> labels(n_);
    for (int i = 0; i < n_; ++i) labels[i] = value_label(values_[order[i]]);
    int id = b.add_state(labels);
    states.emplace_back(id, order);
    bool identity = true;
    for (int i = 0; i < n_; ++i) identity &= (order[i] == i);
    if (identity) s0 = id;
  } while (std::next_permutation(order.begin(), order.end()));

  int sink = b.add_state(std::vector<std::string>(n_, "#"));
  b.set_terminal(sink);
  b.set_initial(s0, 1.0);

  const int n_actions = 1 << n_;
  std::vector<int> bits(n_);
  for (const auto& [id, ord] : states) {
    std::vector<double> vals(n_);
    for (int i = 0; i < n_; ++i) vals[i] = values_[ord[i]];
    for (int a = 0; a < n_actions; ++a) {
      for (int i = 0; i < n_; ++i) bits[i] = (a >> (n_ - 1 - i)) & 1;  // "1" sorts after "0"
      b.add_transition(id, a, sink, 1.0);
      b.set_shared_reward(id, a, reward_of_tuple(vals, bits));
    }
  }

  mg::FiniteMG game = b.build();

  // Each agent observes its own value.
  std::vector<std::string> obs_labels = locals;
  mg::ObservationMap obs(n_, obs_labels);
  for (const auto& [id, ord] : states)
    for (int i = 0; i < n_; ++i) obs.set_by_label(id, i, value_label(values_[ord[i]]));
  for (int i = 0; i < n_; ++i) obs.set_by_label(game.n_states() - 1, i, "#");
  obs.validate(game);
  return {std::move(game), std::move(obs)};
}

FiniteEnvBundle CosineToy::build_repeated() const {
  if (n_ > 12) throw std::invalid_argument("CosineToy::build_repeated: joint-action table too large; N <= 12");
  mg::MgBuilder b(n_, kRepeatedDiscount);
  std::vector<std::string> locals;
  for (double v : values_) locals.push_back(value_label(v));
  b.local_state_space_all(locals);
  b.local_action_space_all({"0", "1"});
  b.finalize_actions();

  std::vector<std::string> labels(n_);
  for (int i = 0; i < n_; ++i) labels[i] = value_label(values_[i]);
  int s0 = b.add_state(labels);
  b.set_initial(s0, 1.0);

  const int n_actions = 1 << n_;
  std::vector<int> bits(n_);
  for (int a = 0; a < n_actions; ++a) {
    for (int i = 0; i < n_; ++i) bits[i] = (a >> (n_ - 1 - i)) & 1;
    b.add_transition(s0, a, s0, 1.0);
    b.set_shared_reward(s0, a, reward(bits));
  }

  mg::FiniteMG game = b.build();
  mg::ObservationMap obs(n_, locals);
  for (int i = 0; i < n_; ++i) obs.set_by_label(s0, i, labels[i]);
  obs.validate(game);
  return {std::move(game), std::move(obs)};
}

ParticleNav::ParticleNav(int n_agents, int k_neighbors) : n_(n_agents), k_(k_neighbors) {
  if (n_agents < 2) throw std::invalid_argument("ParticleNav: need at least two agents");
  if (k_neighbors < 1 || k_neighbors > n_agents - 1)
    throw std::invalid_argument("ParticleNav: k must be in [1, N-1]");
}

std::vector<Vec> ParticleNav::reset(std::uint64_t seed) {
  Rng rng(seed);
  pos_.assign(n_, {0.0, 0.0});
  vel_.assign(n_, {0.0, 0.0});
  landmarks_.assign(n_, {0.0, 0.0});
  for (int i = 0; i < n_; ++i) {
    pos_[i] = {rng.uniform(-0.9 * kBoxHalf, 0.9 * kBoxHalf), rng.uniform(-0.9 * kBoxHalf, 0.9 * kBoxHalf)};
    landmarks_[i] = {rng.uniform(-0.9 * kBoxHalf, 0.9 * kBoxHalf), rng.uniform(-0.9 * kBoxHalf, 0.9 * kBoxHalf)};
  }
  t_ = 0;
  trajectory_.clear();
  return observations();
}

std::vector<Vec> ParticleNav::reset_to(const std::vector<std::array<double, 2>>& positions,
                                       const std::vector<std::array<double, 2>>& velocities,
                                       const std::vector<std::array<double, 2>>& landmarks) {
  if (static_cast<int>(positions.size()) != n_ || static_cast<int>(velocities.size()) != n_ ||
      static_cast<int>(landmarks.size()) != n_)
    throw std::invalid_argument("ParticleNav::reset_to: arity");
  pos_ = positions;
  vel_ = velocities;
  landmarks_ = landmarks;
  t_ = 0;
  trajectory_.clear();
  return observations();
}

std::vector<int> ParticleNav::neighbor_ids(int agent) const {
  std::vector<std::pair<double, int>> by_dist;
  for (int j = 0; j < n_; ++j) {
    if (j == agent) continue;
    double dx = pos_[j][0] - pos_[agent][0];
    double dy = pos_[j][1] - pos_[agent][1];
    by_dist.emplace_back(dx * dx + dy * dy, j);
  }
  std::sort(by_dist.begin(), by_dist.end());
  std::vector<int> out;
  for (int r = 0; r < k_; ++r) out.push_back(by_dist[r].second);
  return out;
}

std::vector<Vec> ParticleNav::observations() const {
  std::vector<Vec> out(n_);
  for (int i = 0; i < n_; ++i) {
    Vec o;
    o.reserve(obs_dim());
    o.push_back(pos_[i][0]);
    o.push_back(pos_[i][1]);
    o.push_back(vel_[i][0]);
    o.push_back(vel_[i][1]);
    for (int j : neighbor_ids(i)) {
      o.push_back(pos_[j][0] - pos_[i][0]);
      o.push_back(pos_[j][1] - pos_[i][1]);
    }
    std::vector<std::pair<double, int>> lm;
    for (int l = 0; l < n_; ++l) {
      double dx = landmarks_[l][0] - pos_[i][0];
      double dy = landmarks_[l][1] - pos_[i][1];
      lm.emplace_back(dx * dx + dy * dy, l);
    }
    std::sort(lm.begin(), lm.end());
    for (int r = 0; r < k_ + 1; ++r) {
      int l = lm[r].second;
      o.push_back(landmarks_[l][0] - pos_[i][0]);
      o.push_back(landmarks_[l][1] - pos_[i][1]);
    }
    out[i] = std::move(o);
  }
  return out;
}

Vec ParticleNav::rewards() const {
  // Coverage: negative mean distance from each landmark to its nearest
  // agent (shared), minus one unit per collision the agent is part of.
  double coverage = 0.0;
  for (int l = 0; l < n_; ++l) {
    double best = 1e300;
    for (int i = 0; i < n_; ++i) {
      double dx = pos_[i][0] - landmarks_[l][0];
      double dy = pos_[i][1] - landmarks_[l][1];
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    coverage += best;
  }
  coverage /= n_;

  Vec r(n_, -coverage);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) {
      if (j == i) continue;
      double dx = pos_[i][0] - pos_[j][0];
      double dy = pos_[i][1] - pos_[j][1];
      if (std::sqrt(dx * dx + dy * dy) < kCollisionRadius) r[i] -= 1.0;
    }
  return r;
}

ParticleNav::StepResult ParticleNav::step(const std::vector<Vec>& actions) {
  if (static_cast<int>(actions.size()) != n_) throw std::invalid_argument("ParticleNav::step: arity");
  for (int i = 0; i < n_; ++i) {
    double ax = std::clamp(actions[i][0], -1.0, 1.0);
    double ay = std::clamp(actions[i][1], -1.0, 1.0);
    vel_[i][0] += ax * kDt;
    vel_[i][1] += ay * kDt;
    double speed = std::sqrt(vel_[i][0] * vel_[i][0] + vel_[i][1] * vel_[i][1]);
    if (speed > kMaxSpeed) {
      vel_[i][0] *= kMaxSpeed / speed;
      vel_[i][1] *= kMaxSpeed / speed;
    }
    pos_[i][0] = std::clamp(pos_[i][0] + vel_[i][0] * kDt, -kBoxHalf, kBoxHalf);
    pos_[i][1] = std::clamp(pos_[i][1] + vel_[i][1] * kDt, -kBoxHalf, kBoxHalf);
  }
  ++t_;
  StepResult res;
  res.obs = observations();
  res.rewards = rewards();
  res.done = t_ >= kEpisodeLen;
  for (int i = 0; i < n_; ++i)
    trajectory_.push_back({t_, i, pos_[i][0], pos_[i][1], vel_[i][0], vel_[i][1], res.rewards[i]});
  return res;
}

void ParticleNav::export_trajectory_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ParticleNav: cannot write " + path);
  out << "t,agent,x,y,vx,vy,reward\n";
  out.precision(17);
  for (const auto& row : trajectory_)
    out << row.t << ',' << row.agent << ',' << row.x << ',' << row.y << ',' << row.vx << ','
        << row.vy << ',' << row.reward << '\n';
}

FiniteEnvBundle build_finite(const std::string& name, const EnvParams& params) {
  if (name == "triangle") return triangle::build();
  if (name == "kuba") {
    if (params.n <= 0) throw std::invalid_argument("build_finite: kuba needs n");
    return kuba::build(params.n);
  }
  if (name == "cosine") {
    if (params.n <= 0) throw std::invalid_argument("build_finite: cosine needs n");
    CosineToy toy(params.n);
    if (params.mode == "repeated") return toy.build_repeated();
    if (params.mode == "one_step") return toy.build_one_step();
    throw std::invalid_argument("build_finite: unknown cosine mode " + params.mode);
  }
  throw std::invalid_argument("build_finite: unknown environment " + name);
}

bool is_finite_env(const std::string& name) {
  return name == "triangle" || name == "kuba" || name == "cosine";
}

std::vector<std::string> registered_envs() { return {"triangle", "kuba", "cosine", "particle-nav"}; }

}  // namespace macc::envs
