#pragma once

#include "baton/common.hpp"

#include <deque>
#include <memory>
#include <vector>

namespace baton {

struct StepResult {
  std::vector<Vec> obs;  // per agent
  real reward = 0;       // shared scalar
  bool done = false;
  bool terminal = false;  // true termination vs. episode-limit truncation
};

// Cooperative dec-POMDP interface: local observations, joint action in
// [-1,1]^act_dim per agent, one shared reward. Deterministic given the
// reset seed.
class Env {
 public:
  virtual ~Env() = default;
  virtual const char* name() const = 0;
  virtual int n_agents() const = 0;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual int episode_limit() const = 0;
  virtual std::vector<Vec> reset(uint64_t seed) = 0;
  virtual StepResult step(const std::vector<Vec>& joint_action) = 0;
};

// Optional perturbation hooks shared by all toy envs; both default off.
struct EnvHooks {
  real obs_noise_std = 0;
  int action_delay = 0;
};

// --- CorridorGate -----------------------------------------------------
// Planar point masses (direct velocity control, one integration step per
// dt) must all pass a gate in a dividing wall that only fits one agent at
// a time. Shared reward: mean forward progress toward the goal line,
// minus collision and time penalties, plus a success bonus.
struct CorridorGateConfig {
  int n_agents = 2;
  real dt = 0.1;            // s
  real v_max = 1.0;         // m/s
  real agent_radius = 0.2;  // m
  real gate_width = 0.7;    // m
  real wall_half_thickness = 0.05;
  real arena_half_width = 1.0;   // |y| bound
  real arena_half_length = 2.0;  // |x| bound
  real start_x = -1.1;
  real start_stagger = 0.2;  // agent i starts at start_x - i * stagger
  real goal_x = 0.6;
  real clearance = 0.5;  // progress keeps paying until goal_x + clearance
  int limit = 50;
  real progress_coef = 1.0;
  real collision_penalty = 1.0;
  real wall_penalty = 0.05;
  real time_penalty = 0.02;
  real success_bonus = 5.0;
  EnvHooks hooks;
};

class CorridorGateEnv : public Env {
 public:
  explicit CorridorGateEnv(CorridorGateConfig cfg);
  const char* name() const override { return "corridor_gate"; }
  int n_agents() const override { return cfg_.n_agents; }
  int obs_dim() const override { return 2 + 2 * (cfg_.n_agents - 1); }
  int act_dim() const override { return 2; }
  int episode_limit() const override { return cfg_.limit; }
  std::vector<Vec> reset(uint64_t seed) override;
  StepResult step(const std::vector<Vec>& joint_action) override;

  const std::vector<Vec>& positions() const { return pos_; }

 private:
  std::vector<Vec> observe();
  bool hits_wall(const Vec& p) const;
  Vec apply_hooks(int agent, Vec obs);

  CorridorGateConfig cfg_;
  std::vector<Vec> pos_, vel_;
  std::vector<std::deque<Vec>> delay_queues_;
  Rng rng_;
  int t_ = 0;
  bool done_ = true;
  bool succeeded_ = false;
};

// --- PushBox2D ---------------------------------------------------------
// Two agents and a quasi-static box: the box moves only while the summed
// contact push exceeds a friction threshold sized so one agent alone can
// never reach it.
struct PushBoxConfig {
  real dt = 0.1;
  real v_max = 1.0;
  real agent_radius = 0.18;
  real box_radius = 0.45;  // contact circle of the box
  real friction_threshold = 1.3;
  real box_gain = 0.8;
  real rot_gain = 0.3;
  real target_radius = 0.3;
  int limit = 60;
  real progress_coef = 1.0;
  real time_penalty = 0.02;
  real success_bonus = 5.0;
  EnvHooks hooks;
};

class PushBox2DEnv : public Env {
 public:
  explicit PushBox2DEnv(PushBoxConfig cfg);
  const char* name() const override { return "push_box"; }
  int n_agents() const override { return 2; }
  int obs_dim() const override { return 8; }
  int act_dim() const override { return 2; }
  int episode_limit() const override { return cfg_.limit; }
  std::vector<Vec> reset(uint64_t seed) override;
  StepResult step(const std::vector<Vec>& joint_action) override;

  Eigen::Vector2d box_position() const { return box_pos_.cast<double>(); }

 private:
  std::vector<Vec> observe();
  Vec apply_hooks(int agent, Vec obs);

  PushBoxConfig cfg_;
  std::vector<Vec> pos_;
  Vec box_pos_{2};
  real box_yaw_ = 0;
  Vec target_{2};
  std::vector<std::deque<Vec>> delay_queues_;
  Rng rng_;
  int t_ = 0;
  bool done_ = true;
};

// --- LinearTeam ---------------------------------------------------------
// Coupled linear dynamics with closed-form rollouts:
//   x^i_{t+1} = A x^i_t + B a^i_t + C a^{i-1}_t + noise,  agent 1 has no
// coupling term. The shared reward is a quadratic in the next state, so a
// world model's prediction error can be scored against an exact oracle.
struct LinearTeamConfig {
  int n_agents = 2;
  int state_dim = 2;
  real a_diag = 0.7;
  real b_diag = 0.5;
  real coupling = 0.5;  // C diagonal; 0 removes cross-agent structure
  real noise_std = 0.0;
  real reward_scale = 0.25;
  int limit = 50;
  EnvHooks hooks;
};

class LinearTeamEnv : public Env {
 public:
  explicit LinearTeamEnv(LinearTeamConfig cfg);
  const char* name() const override { return "linear_team"; }
  int n_agents() const override { return cfg_.n_agents; }
  int obs_dim() const override { return cfg_.state_dim; }
  int act_dim() const override { return cfg_.state_dim; }
  int episode_limit() const override { return cfg_.limit; }
  std::vector<Vec> reset(uint64_t seed) override;
  StepResult step(const std::vector<Vec>& joint_action) override;

  const LinearTeamConfig& config() const { return cfg_; }
  const std::vector<Vec>& states() const { return x_; }

  // Exact noise-free trajectory and per-step rewards from `start` under
  // the given action sequences (actions[agent] is act_dim x H).
  struct OracleRollout {
    std::vector<std::vector<Vec>> states;  // [step 0..H][agent]
    std::vector<real> rewards;             // H entries
  };
  static OracleRollout oracle_rollout(const LinearTeamConfig& cfg,
                                      const std::vector<Vec>& start,
                                      const std::vector<Mat>& actions);

 private:
  std::vector<Vec> observe();
  Vec apply_hooks(int agent, Vec obs);

  LinearTeamConfig cfg_;
  std::vector<Vec> x_;
  std::vector<std::deque<Vec>> delay_queues_;
  Rng rng_;
  int t_ = 0;
  bool done_ = true;
};

}  // namespace baton
