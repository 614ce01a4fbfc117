#include "baton/envs.hpp"

#include <algorithm>
#include <cmath>

namespace baton {

namespace {

Vec clamp_action(const Vec& a, int dim) {
  if (a.size() != dim) throw DimensionError("env: action dim mismatch");
  if (!a.allFinite()) throw NumericsError("env: non-finite action");
  return a.cwiseMax(real(-1)).cwiseMin(real(1));
}

Vec delayed(std::deque<Vec>& queue, const Vec& a, int delay) {
  if (delay <= 0) return a;
  queue.push_back(a);
  Vec out = queue.front();
  queue.pop_front();
  return out;
}

void prime_delay(std::vector<std::deque<Vec>>& queues, int n, int delay, int act_dim) {
  queues.assign(static_cast<size_t>(n), {});
  for (auto& q : queues) {
    for (int i = 0; i < delay; ++i) q.push_back(Vec::Zero(act_dim));
  }
}

}  // namespace

// --- CorridorGate -------------------------------------------------------

CorridorGateEnv::CorridorGateEnv(CorridorGateConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.n_agents < 2 || cfg_.n_agents > 5) throw ConfigError("corridor_gate: 2..5 agents");
  if (cfg_.gate_width <= 2 * cfg_.agent_radius) {
    throw ConfigError("corridor_gate: gate narrower than an agent");
  }
}

std::vector<Vec> CorridorGateEnv::reset(uint64_t seed) {
  rng_.seed(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  pos_.assign(static_cast<size_t>(cfg_.n_agents), Vec::Zero(2));
  vel_.assign(static_cast<size_t>(cfg_.n_agents), Vec::Zero(2));
  for (int i = 0; i < cfg_.n_agents; ++i) {
    real lane = (cfg_.n_agents == 1)
                    ? real(0)
                    : real(-0.5) + real(i) * (real(1.0) / real(cfg_.n_agents - 1));
    pos_[static_cast<size_t>(i)](0) =
        cfg_.start_x - cfg_.start_stagger * real(i) + static_cast<real>(jitter(rng_));
    pos_[static_cast<size_t>(i)](1) = lane * real(1.4) + static_cast<real>(jitter(rng_));
  }
  prime_delay(delay_queues_, cfg_.n_agents, cfg_.hooks.action_delay, 2);
  t_ = 0;
  done_ = false;
  succeeded_ = false;
  return observe();
}

bool CorridorGateEnv::hits_wall(const Vec& p) const {
  // Dividing wall at x = 0, opening |y| < gate_width / 2.
  if (std::abs(p(0)) > cfg_.wall_half_thickness + cfg_.agent_radius) return false;
  return std::abs(p(1)) > cfg_.gate_width / 2 - cfg_.agent_radius;
}

StepResult CorridorGateEnv::step(const std::vector<Vec>& joint_action) {
  if (done_) throw Error("corridor_gate: step after done");
  if (static_cast<int>(joint_action.size()) != cfg_.n_agents) {
    throw DimensionError("corridor_gate: joint action count mismatch");
  }
  const int n = cfg_.n_agents;
  real wall_hits = 0;

  const real pay_to = cfg_.goal_x + cfg_.clearance;
  std::vector<real> old_prog(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    old_prog[static_cast<size_t>(i)] = std::min(pos_[static_cast<size_t>(i)](0), pay_to);
  }

  for (int i = 0; i < n; ++i) {
    Vec a = clamp_action(joint_action[static_cast<size_t>(i)], 2);
    a = delayed(delay_queues_[static_cast<size_t>(i)], a, cfg_.hooks.action_delay);
    Vec v = a * cfg_.v_max;
    vel_[static_cast<size_t>(i)] = v;
    Vec p = pos_[static_cast<size_t>(i)];
    Vec cand = p + cfg_.dt * v;
    cand(0) = std::clamp(cand(0), -cfg_.arena_half_length, cfg_.arena_half_length);
    cand(1) = std::clamp(cand(1), -cfg_.arena_half_width + cfg_.agent_radius,
                         cfg_.arena_half_width - cfg_.agent_radius);
    if (hits_wall(cand)) {
      wall_hits += 1;
      Vec slide_y = p;  // keep x, take new y
      slide_y(1) = cand(1);
      Vec slide_x = p;  // keep y, take new x
      slide_x(0) = cand(0);
      if (!hits_wall(slide_y)) {
        cand = slide_y;
      } else if (!hits_wall(slide_x)) {
        cand = slide_x;
      } else {
        cand = p;
      }
    }
    pos_[static_cast<size_t>(i)] = cand;
  }

  // Symmetric pairwise separation.
  real collisions = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Vec d = pos_[static_cast<size_t>(j)] - pos_[static_cast<size_t>(i)];
      real dist = d.norm();
      real min_dist = 2 * cfg_.agent_radius;
      if (dist < min_dist) {
        collisions += 1;
        Vec dir = dist > 1e-9 ? Vec(d / dist) : Vec(Vec::Unit(2, 1));
        real push = (min_dist - dist) / 2;
        pos_[static_cast<size_t>(i)] -= push * dir;
        pos_[static_cast<size_t>(j)] += push * dir;
      }
    }
  }

  real progress = 0;
  for (int i = 0; i < n; ++i) {
    progress += std::min(pos_[static_cast<size_t>(i)](0), pay_to) - old_prog[static_cast<size_t>(i)];
  }
  progress /= static_cast<real>(n);

  bool success = true;
  for (int i = 0; i < n; ++i) {
    success = success && pos_[static_cast<size_t>(i)](0) >= cfg_.goal_x;
  }

  real reward = cfg_.progress_coef * progress - cfg_.collision_penalty * collisions -
                cfg_.wall_penalty * wall_hits - cfg_.time_penalty;
  if (success) reward += cfg_.success_bonus;

  t_ += 1;
  StepResult res;
  res.reward = reward;
  res.terminal = success;
  res.done = success || t_ >= cfg_.limit;
  done_ = res.done;
  succeeded_ = success;
  res.obs = observe();
  return res;
}

std::vector<Vec> CorridorGateEnv::observe() {
  std::vector<Vec> obs;
  obs.reserve(static_cast<size_t>(cfg_.n_agents));
  for (int i = 0; i < cfg_.n_agents; ++i) {
    Vec o(obs_dim());
    o(0) = pos_[static_cast<size_t>(i)](0);
    o(1) = pos_[static_cast<size_t>(i)](1);
    int k = 2;
    for (int j = 0; j < cfg_.n_agents; ++j) {
      if (j == i) continue;
      o(k++) = pos_[static_cast<size_t>(j)](0) - pos_[static_cast<size_t>(i)](0);
      o(k++) = pos_[static_cast<size_t>(j)](1) - pos_[static_cast<size_t>(i)](1);
    }
    obs.push_back(apply_hooks(i, std::move(o)));
  }
  return obs;
}

Vec CorridorGateEnv::apply_hooks(int, Vec obs) {
  if (cfg_.hooks.obs_noise_std > 0) {
    std::normal_distribution<double> noise(0, static_cast<double>(cfg_.hooks.obs_noise_std));
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs(i) += static_cast<real>(noise(rng_));
  }
  return obs;
}

// --- PushBox2D ------------------------------------------------------------

PushBox2DEnv::PushBox2DEnv(PushBoxConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.friction_threshold <= 1.0) {
    throw ConfigError("push_box: friction threshold must exceed a single agent's max push");
  }
}

std::vector<Vec> PushBox2DEnv::reset(uint64_t seed) {
  rng_.seed(seed);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  pos_.assign(2, Vec::Zero(2));
  pos_[0] << real(-1.4 + jitter(rng_)), real(0.5 + jitter(rng_));
  pos_[1] << real(-1.4 + jitter(rng_)), real(-0.5 + jitter(rng_));
  box_pos_ << real(-0.4 + jitter(rng_)), real(jitter(rng_));
  box_yaw_ = 0;
  target_ << real(1.2), real(0);
  prime_delay(delay_queues_, 2, cfg_.hooks.action_delay, 2);
  t_ = 0;
  done_ = false;
  return observe();
}

StepResult PushBox2DEnv::step(const std::vector<Vec>& joint_action) {
  if (done_) throw Error("push_box: step after done");
  if (joint_action.size() != 2) throw DimensionError("push_box: joint action count mismatch");

  real old_dist = (box_pos_ - target_).norm();
  Vec net_push = Vec::Zero(2);
  real torque = 0;

  for (int i = 0; i < 2; ++i) {
    Vec a = clamp_action(joint_action[static_cast<size_t>(i)], 2);
    a = delayed(delay_queues_[static_cast<size_t>(i)], a, cfg_.hooks.action_delay);
    Vec v = a * cfg_.v_max;
    pos_[static_cast<size_t>(i)] += cfg_.dt * v;
    Vec rel = box_pos_ - pos_[static_cast<size_t>(i)];
    real dist = rel.norm();
    real contact = cfg_.agent_radius + cfg_.box_radius + real(0.05);
    if (dist < contact && dist > 1e-9) {
      Vec dir = rel / dist;
      real toward = v.dot(dir);
      if (toward > 0) {
        net_push += toward * dir;
        torque += dir(0) * v(1) - dir(1) * v(0);
      }
    }
  }

  real mag = net_push.norm();
  if (mag > cfg_.friction_threshold) {
    Vec box_v = cfg_.box_gain * (mag - cfg_.friction_threshold) * (net_push / mag);
    box_pos_ += cfg_.dt * box_v;
    box_yaw_ += cfg_.dt * cfg_.rot_gain * torque;
  }

  real new_dist = (box_pos_ - target_).norm();
  bool success = new_dist < cfg_.target_radius;
  real reward = cfg_.progress_coef * (old_dist - new_dist) - cfg_.time_penalty;
  if (success) reward += cfg_.success_bonus;

  t_ += 1;
  StepResult res;
  res.reward = reward;
  res.terminal = success;
  res.done = success || t_ >= cfg_.limit;
  done_ = res.done;
  res.obs = observe();
  return res;
}

std::vector<Vec> PushBox2DEnv::observe() {
  std::vector<Vec> obs;
  for (int i = 0; i < 2; ++i) {
    int other = 1 - i;
    Vec o(8);
    o.segment(0, 2) = box_pos_ - pos_[static_cast<size_t>(i)];
    o.segment(2, 2) = target_ - box_pos_;
    o.segment(4, 2) = pos_[static_cast<size_t>(other)] - pos_[static_cast<size_t>(i)];
    o.segment(6, 2) = pos_[static_cast<size_t>(i)];
    obs.push_back(apply_hooks(i, std::move(o)));
  }
  return obs;
}

Vec PushBox2DEnv::apply_hooks(int, Vec obs) {
  if (cfg_.hooks.obs_noise_std > 0) {
    std::normal_distribution<double> noise(0, static_cast<double>(cfg_.hooks.obs_noise_std));
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs(i) += static_cast<real>(noise(rng_));
  }
  return obs;
}

// --- LinearTeam -------------------------------------------------------------

LinearTeamEnv::LinearTeamEnv(LinearTeamConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.n_agents < 1) throw ConfigError("linear_team: need at least one agent");
  if (cfg_.state_dim < 1) throw ConfigError("linear_team: state_dim must be positive");
}

std::vector<Vec> LinearTeamEnv::reset(uint64_t seed) {
  rng_.seed(seed);
  std::uniform_real_distribution<double> init(-1.0, 1.0);
  x_.assign(static_cast<size_t>(cfg_.n_agents), Vec::Zero(cfg_.state_dim));
  for (auto& x : x_) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = static_cast<real>(init(rng_));
  }
  prime_delay(delay_queues_, cfg_.n_agents, cfg_.hooks.action_delay, cfg_.state_dim);
  t_ = 0;
  done_ = false;
  return observe();
}

StepResult LinearTeamEnv::step(const std::vector<Vec>& joint_action) {
  if (done_) throw Error("linear_team: step after done");
  if (static_cast<int>(joint_action.size()) != cfg_.n_agents) {
    throw DimensionError("linear_team: joint action count mismatch");
  }
  std::vector<Vec> acts(static_cast<size_t>(cfg_.n_agents));
  for (int i = 0; i < cfg_.n_agents; ++i) {
    Vec a = clamp_action(joint_action[static_cast<size_t>(i)], cfg_.state_dim);
    acts[static_cast<size_t>(i)] = delayed(delay_queues_[static_cast<size_t>(i)], a,
                                           cfg_.hooks.action_delay);
  }
  std::normal_distribution<double> noise(0, 1);
  real cost = 0;
  for (int i = 0; i < cfg_.n_agents; ++i) {
    Vec next = cfg_.a_diag * x_[static_cast<size_t>(i)] + cfg_.b_diag * acts[static_cast<size_t>(i)];
    if (i > 0) next += cfg_.coupling * acts[static_cast<size_t>(i - 1)];
    if (cfg_.noise_std > 0) {
      for (Eigen::Index k = 0; k < next.size(); ++k) {
        next(k) += cfg_.noise_std * static_cast<real>(noise(rng_));
      }
    }
    x_[static_cast<size_t>(i)] = next;
    cost += next.squaredNorm();
  }
  real reward = -cfg_.reward_scale * cost / static_cast<real>(cfg_.n_agents);

  t_ += 1;
  StepResult res;
  res.reward = reward;
  res.terminal = false;
  res.done = t_ >= cfg_.limit;
  done_ = res.done;
  res.obs = observe();
  return res;
}

std::vector<Vec> LinearTeamEnv::observe() {
  std::vector<Vec> obs;
  for (int i = 0; i < cfg_.n_agents; ++i) {
    obs.push_back(apply_hooks(i, Vec(x_[static_cast<size_t>(i)])));
  }
  return obs;
}

Vec LinearTeamEnv::apply_hooks(int, Vec obs) {
  if (cfg_.hooks.obs_noise_std > 0) {
    std::normal_distribution<double> noise(0, static_cast<double>(cfg_.hooks.obs_noise_std));
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs(i) += static_cast<real>(noise(rng_));
  }
  return obs;
}

LinearTeamEnv::OracleRollout LinearTeamEnv::oracle_rollout(const LinearTeamConfig& cfg,
                                                           const std::vector<Vec>& start,
                                                           const std::vector<Mat>& actions) {
  if (static_cast<int>(start.size()) != cfg.n_agents ||
      static_cast<int>(actions.size()) != cfg.n_agents) {
    throw DimensionError("oracle_rollout: agent count mismatch");
  }
  const int H = static_cast<int>(actions[0].cols());
  OracleRollout out;
  out.states.push_back(start);
  for (int h = 0; h < H; ++h) {
    std::vector<Vec> next(static_cast<size_t>(cfg.n_agents));
    real cost = 0;
    for (int i = 0; i < cfg.n_agents; ++i) {
      Vec a = actions[static_cast<size_t>(i)].col(h).cwiseMax(real(-1)).cwiseMin(real(1));
      Vec x = cfg.a_diag * out.states.back()[static_cast<size_t>(i)] + cfg.b_diag * a;
      if (i > 0) {
        Vec ap = actions[static_cast<size_t>(i - 1)].col(h).cwiseMax(real(-1)).cwiseMin(real(1));
        x += cfg.coupling * ap;
      }
      next[static_cast<size_t>(i)] = x;
      cost += x.squaredNorm();
    }
    out.rewards.push_back(-cfg.reward_scale * cost / static_cast<real>(cfg.n_agents));
    out.states.push_back(std::move(next));
  }
  return out;
}

}  // namespace baton
