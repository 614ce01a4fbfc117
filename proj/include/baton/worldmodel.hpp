#pragma once

#include "baton/adam.hpp"
#include "baton/checkpoint.hpp"
#include "baton/codec.hpp"
#include "baton/comm.hpp"
#include "baton/mlp.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace baton {

struct AgentConfig {
  int index = 0;  // 0-based position in the communication chain
  int n_agents = 1;
  int obs_dim = 0;
  int act_dim = 0;
  int latent_dim = 64;
  int hidden_dim = 64;
  int num_layers = 2;
  int num_bins = 101;
  int sem_group = 8;
  MessageMode msg_mode = MessageMode::Full;

  real lr = 5e-4;
  real encoder_lr_scale = 0.3;
  real dynamics_coef = 20;
  real reward_coef = 0.1;
  real q_coef = 0.1;
  real step_decay = 0.5;  // lambda weighting of rollout steps
  real gamma = 0.99;
  int horizon = 3;
  int nstep = 20;
  real entropy_coef = 1e-4;
  real target_ema = 0.995;
  real logstd_min = -5;
  real logstd_max = 2;
  real grid_low = -20;
  real grid_high = 20;
  real qscale_ema = 0.99;
  real qscale_floor = 1e-2;

  int msg_dim() const {
    return n_agents * (act_dim + (msg_mode == MessageMode::Full ? latent_dim : 0));
  }
  int msg_slot_width() const {
    return act_dim + (msg_mode == MessageMode::Full ? latent_dim : 0);
  }
  void validate() const;
};

struct LossReport {
  real total = 0;
  real dynamics_loss = 0;  // lambda-weighted sums of batch means
  real reward_loss = 0;
  real q_loss = 0;
  real actor_loss = 0;
  real entropy = 0;
  std::vector<real> step_weights;    // lambda^h
  std::vector<real> step_dynamics;   // unweighted batch means per step
  std::vector<real> step_reward;
  std::vector<real> step_q;
  bool model_step_applied = true;  // false when a NaN gradient skipped the update
  bool actor_step_applied = true;
};

// Contiguous windows sampled from the replay buffer, already materialized
// as per-step column batches. Window b covers transitions t..t+valid_len-1
// of one episode; valid_len is at least the training horizon, and entries
// past valid_len are zero.
struct TrajectoryBatch {
  int batch = 0;
  int window = 0;                     // W = horizon + nstep
  std::vector<std::vector<Mat>> obs;  // [agent][s], s = 0..W, obs_dim x B
  std::vector<std::vector<Mat>> act;  // [agent][s], s = 0..W-1, act_dim x B
  Mat rewards;                        // W x B
  std::vector<int> valid_len;
  std::vector<uint8_t> terminal;  // episode truly terminated at the window's end
};

// Bernoulli keep/drop pattern plus a communication order, sampled once
// per update round.
struct TrainingMasks {
  std::vector<int> order;  // permutation of agent ids
  // keep[receiver][sender] is (steps+1) x B of {0,1}
  std::vector<std::vector<Mat>> keep;
};
TrainingMasks sample_masks(int n_agents, int steps, int batch, real drop_prob, bool permute,
                           Rng& rng);

// Spec-level masking of a single message: each valid slot is zeroed
// (payload and validity) independently with probability drop_prob.
void random_mask(Message& msg, real drop_prob, Rng& rng);
std::vector<int> sample_comm_order(int n_agents, bool permute, Rng& rng);

// Per-receiver message input tensors for one update.
struct MessageViews {
  std::vector<Mat> main;  // s = 0..H-1, msg_dim x B; slots hold predecessors' chained latents
  std::vector<Mat> full;  // s = 0..W, msg_dim x B; slots hold predecessors' encoder latents
};

// Everything the loss graph consumes, precomputed without gradients.
// Latent targets are detached here by construction; finite-difference
// checks perturb parameters against these fixed inputs.
struct ModelLossInputs {
  Mat obs0;
  std::vector<Mat> exec_actions;    // h = 0..H-1
  std::vector<Mat> msgs;            // h = 0..H-1
  std::vector<Mat> latent_targets;  // h = 0..H-1, target for step h+1
  std::vector<Mat> reward_twohot;   // h
  std::vector<Mat> q_twohot;        // h
  Mat td_targets;                   // H x B raw G values
  bool teacher_forced = false;
  std::vector<Mat> teacher_latents;  // h = 0..H-1, encoder latents fed instead of chaining
};

struct ActorLossInputs {
  std::vector<Mat> latents;  // h = 0..H-1, detached rollout latents
  std::vector<Mat> msgs;     // h
  std::vector<Mat> noise;    // act_dim x B reparameterization draws per h
  real q_scale = 1;
};

// One agent's model bundle: five MLP heads, their Adam states, the EMA
// target critic, the two-hot grid and the Q percentile scaler.
class AgentModel {
 public:
  AgentConfig cfg;
  Mlp encoder, dynamics, reward_head, critic, actor;
  std::vector<Mat> target_critic;
  AdamState adam_encoder, adam_dynamics, adam_reward, adam_critic, adam_actor;
  codec::BinGrid grid;
  codec::PercentileScaler qscale;
  int64_t skipped_steps = 0;

  static AgentModel create(const AgentConfig& cfg, uint64_t seed);

  // -- inference (no gradients, batched over columns) --
  Mat encode(const Mat& obs) const;
  Vec encode(const Vec& obs) const;

  struct StepOut {
    Mat z_next;
    Mat r_logits;
  };
  StepOut predict_step(const Mat& z, const Mat& a, const Mat& e) const;
  std::pair<Vec, Vec> predict_step(const Vec& z, const Vec& a, const Message& e) const;

  Mat critic_logits(const Mat& z, const Mat& a, const Mat& e, bool use_target) const;
  Vec critic_values(const Mat& z, const Mat& a, const Mat& e, bool use_target) const;
  real critic_value(const Vec& z, const Vec& a, const Message& e, bool use_target) const;

  struct ActorOut {
    Mat mean;
    Mat log_std;
  };
  ActorOut actor_forward(const Mat& z, const Mat& e) const;
  // Reparameterized tanh-squashed Gaussian sample; log_prob includes the
  // change-of-variables correction. Deterministic mode returns tanh(mean).
  Vec actor_sample(const Vec& z, const Vec& e_input, bool stochastic, Rng& rng,
                   real* log_prob = nullptr) const;
  Vec actor_sample(const Vec& z, const Message& e, bool stochastic, Rng& rng,
                   real* log_prob = nullptr) const;
  Mat actor_sample_batch(const Mat& z, const Mat& e, bool stochastic, Rng& rng) const;

  void sync_target();               // hard copy critic -> target
  void update_target(real ema);     // target = ema*target + (1-ema)*live
  void zero_grads();

  Mat assemble(const Mat& z, const Mat& a, const Mat& e) const;
  Mat assemble_actor(const Mat& z, const Mat& e) const;

  void save_state(StateMap& state, const std::string& prefix) const;
  void load_state(const StateMap& state, const std::string& prefix);

  int64_t param_count() const;
};

// Chained open-loop latents under executed actions: s = 0 holds the
// encoder latent, s = 1..steps the dynamics predictions.
std::vector<Mat> rollout_latents(const AgentModel& m, const TrajectoryBatch& batch,
                                 const std::vector<Mat>& msgs, int steps);

// n-step TD targets with truncation at episode end. enc_self and
// msg_full index steps 0..W.
Mat compute_td_targets(const AgentModel& m, const TrajectoryBatch& batch,
                       const std::vector<Mat>& enc_self, const std::vector<Mat>& msg_full);

ModelLossInputs prepare_model_loss(const AgentModel& m, const TrajectoryBatch& batch,
                                   const MessageViews& views, bool teacher_forced = false);

// Builds the Eq.-style rollout loss graph over the fixed inputs. When
// accumulate_grads is set, runs backward and leaves gradients on the
// heads (caller owns the optimizer step).
LossReport model_loss(AgentModel& m, const ModelLossInputs& inputs, bool accumulate_grads);

ActorLossInputs prepare_actor_loss(const AgentModel& m, const TrajectoryBatch& batch,
                                   const MessageViews& views, Rng& rng);

// Entropy-regularized planner-prior objective: maximizes Q/scale plus
// entropy; critic and dynamics enter frozen.
real actor_loss(AgentModel& m, const ActorLossInputs& inputs, bool accumulate_grads,
                real* entropy_out);

// Message views for every agent under the mask's communication order,
// rebuilt from the current models without touching any parameters.
std::vector<MessageViews> build_all_views(const std::vector<AgentModel>& agents,
                                          const TrajectoryBatch& batch,
                                          const TrainingMasks& masks);

struct UpdateOptions {
  real drop_prob = 0;
  bool permute = false;
  bool update_actors = true;
  bool teacher_forced = false;
};

// One round of the sequential scheme: agents update in (optionally
// permuted) order, each conditioning on message content rebuilt from the
// most recently updated predecessor models; messages enter detached.
// Reports are indexed by agent id.
std::vector<LossReport> sequential_update(std::vector<AgentModel>& agents,
                                          const TrajectoryBatch& batch,
                                          const UpdateOptions& opts, Rng& rng);

}  // namespace baton
