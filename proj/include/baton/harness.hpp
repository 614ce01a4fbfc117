#pragma once

#include "baton/config.hpp"
#include "baton/envs.hpp"
#include "baton/metrics.hpp"
#include "baton/planner.hpp"
#include "baton/replay.hpp"

#include <functional>
#include <memory>
#include <string>

namespace baton {

std::unique_ptr<Env> make_env(const RunConfig& cfg);
AgentConfig make_agent_config(const RunConfig& cfg, const Env& env, int index);
std::vector<AgentModel> make_agents(const RunConfig& cfg, const Env& env);
PlannerConfig make_planner_config(const RunConfig& cfg);

void save_run_checkpoint(const std::string& path, const std::vector<AgentModel>& agents,
                         int64_t env_steps);
// Builds agents from cfg and hydrates them; throws DimensionError when the
// checkpoint was produced under different dimensions.
std::vector<AgentModel> load_run_checkpoint(const std::string& path, const RunConfig& cfg,
                                            const Env& env, int64_t* env_steps = nullptr);

struct StepLog {
  long t = 0;
  const std::vector<Vec>* obs = nullptr;       // observations before the step
  const std::vector<Vec>* actions = nullptr;
  real reward = 0;
  bool done = false;
};

struct EpisodeStats {
  Episode episode;
  real episode_return = 0;
  bool success = false;
  real mean_plan_iterations = 0;
  real mean_step_ms = 0;
  int64_t drops = 0;
  int64_t cache_hits = 0;
  int64_t cache_misses = 0;  // dropped slots the cache could not serve
};

// One episode under the sequential plan-and-pass protocol: agents plan in
// index order, each conditioning on the (possibly dropped / cached)
// intentions of its predecessors, and the first action of every final
// mean is executed jointly.
EpisodeStats run_episode(Env& env, const std::vector<AgentModel>& agents,
                         const PlannerConfig& pcfg, uint64_t env_seed, uint64_t plan_seed,
                         const LinkModel& link, bool use_cache,
                         const std::function<void(const StepLog&)>& logger = nullptr);

struct TrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  int64_t env_steps = 0;
  int64_t episodes = 0;
  real last_eval_success = 0;
  bool stopped_early = false;
};

TrainResult train(const RunConfig& cfg);

struct EvalSummary {
  int episodes = 0;
  real mean_return = 0;
  real success_rate = 0;
  real mean_plan_iterations = 0;
  real mean_step_ms = 0;
  int64_t drops = 0;
  int64_t cache_hits = 0;
  int64_t cache_misses = 0;
  std::string to_json() const;
};

EvalSummary evaluate(const std::string& checkpoint_path, const RunConfig& cfg);

struct AblationRow {
  int horizon = 0;
  real dyn_mse = 0;
  real rew_mse = 0;
};

struct AblationResult {
  std::vector<AblationRow> sequential;     // rows for horizons 1..H
  std::vector<AblationRow> decentralized;
  int64_t params_per_agent = 0;
  std::string to_json() const;
};

// Fig.-8-style comparison on LinearTeamEnv: random-action data, matched
// architectures and budgets, dynamics/reward MSE against the closed-form
// oracle at horizons 1..H. The decentralized variant is the same model
// trained with every message slot dropped.
AblationResult ablate_prediction(const RunConfig& cfg);

// Episode-log (jsonl) to plot-ready CSV.
void export_traj(const std::string& log_path, const std::string& out_path);

uint64_t obs_digest(const Vec& obs);

}  // namespace baton
