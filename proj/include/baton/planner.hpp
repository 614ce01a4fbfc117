#pragma once

#include "baton/comm.hpp"
#include "baton/worldmodel.hpp"

#include <optional>
#include <vector>

namespace baton {

// Diagonal Gaussian over an H-step action sequence; columns are steps.
struct ActionDistribution {
  Mat mean;  // act_dim x H, within [-1, 1]
  Mat std;   // act_dim x H, >= sigma_floor
};

struct PlannerConfig {
  int horizon = 3;
  int iterations = 6;
  real temperature = 0.5;
  int num_samples = 512;   // Gaussian candidates per iteration
  int actor_samples = 24;  // actor-rollout candidates per iteration
  int elites = 64;
  real discount = 0.99;
  real kl_threshold = 0;    // 0 disables early stopping
  real cutoff_ratio = 0.25;  // f_c / f_s for noise smoothing; 0 disables
  real sigma_init = 0.5;
  real sigma_floor = 0.05;

  void validate() const;
};

struct CandidateSet {
  std::vector<Mat> actions;  // per step h: act_dim x N
  Vec values;                // -inf marks a discarded candidate
  std::vector<uint8_t> from_actor;
  int discarded = 0;
  int count() const { return actions.empty() ? 0 : static_cast<int>(actions[0].cols()); }
};

// What the planner needs from a world model. Batches are column-wise;
// the message input e is shared across candidates at a given step.
class PlannerModel {
 public:
  virtual ~PlannerModel() = default;
  virtual int latent_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual Vec encode(const Vec& obs) const = 0;
  // Advances latents one step; when reward is non-null also fills the
  // decoded reward at (z, a, e).
  virtual Mat step(const Mat& z, const Mat& a, const Vec& e, Vec* reward) const = 0;
  virtual Vec q_value(const Mat& z, const Mat& a, const Vec& e) const = 0;
  virtual Mat actor_act(const Mat& z, const Vec& e, bool stochastic, Rng& rng) const = 0;
};

class AgentModelView final : public PlannerModel {
 public:
  explicit AgentModelView(const AgentModel& m) : m_(&m) {}
  int latent_dim() const override { return m_->cfg.latent_dim; }
  int act_dim() const override { return m_->cfg.act_dim; }
  Vec encode(const Vec& obs) const override { return m_->encode(obs); }
  Mat step(const Mat& z, const Mat& a, const Vec& e, Vec* reward) const override;
  Vec q_value(const Mat& z, const Mat& a, const Vec& e) const override;
  Mat actor_act(const Mat& z, const Vec& e, bool stochastic, Rng& rng) const override;

 private:
  const AgentModel* m_;
};

// First-order Butterworth low-pass (bilinear transform, unity DC gain)
// applied independently to each column, time running down the rows:
//   y[t] = (1-beta)/2 * (x[t] + x[t-1]) + beta * y[t-1],
//   beta = (1 - tan(pi fc/fs)) / (1 + tan(pi fc/fs)),  y[0] = x[0].
Mat lowpass_filter(const Mat& x, real cutoff_ratio);

CandidateSet sample_candidates(const ActionDistribution& dist, const PlannerModel& model,
                               const Vec& z0, const std::vector<Vec>& msg_inputs,
                               const PlannerConfig& cfg, Rng& rng);

// H-step return of every candidate: discounted decoded rewards plus the
// discounted terminal critic value at the rolled-out latent. Pure given
// parameters; non-finite values are discarded with a note on stderr.
void evaluate_candidates(CandidateSet& set, const PlannerModel& model, const Vec& z0,
                         const std::vector<Vec>& msg_inputs, const PlannerConfig& cfg);

// Elite-weighted refit: top-M candidates by value, weights
// exp(temperature * (V - V_max)), floored std, mean clamped to bounds.
ActionDistribution update_distribution(const ActionDistribution& dist, const CandidateSet& set,
                                       const PlannerConfig& cfg);

real kl_diag_gaussian(const ActionDistribution& p, const ActionDistribution& q);

struct PlanResult {
  Vec action;  // first step of the final mean
  ActionDistribution dist;
  PredictedTrajectory trajectory;  // H+1 slices for the outgoing message
  int iterations_used = 0;
  int discarded = 0;
};

// Iterates sample -> evaluate -> refit up to cfg.iterations times,
// stopping early when KL(new || old) < kl_threshold. Warm starts shift
// the previous mean one step (last step repeated); std resets to
// sigma_init every call. incoming holds one Message per rollout step
// (H+1), or a single Message reused across steps.
PlanResult plan(const PlannerModel& model, const Vec& obs, const std::vector<Message>& incoming,
                const std::optional<ActionDistribution>& warm, const PlannerConfig& cfg,
                uint64_t seed, long t0 = 0);

}  // namespace baton
