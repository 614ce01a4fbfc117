#include "baton/harness.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace baton {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

static double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::unique_ptr<Env> make_env(const RunConfig& cfg) {
  EnvHooks hooks;
  hooks.obs_noise_std = cfg.get_real("env.obs_noise_std");
  hooks.action_delay = static_cast<int>(cfg.get_int("env.action_delay"));
  const std::string name = cfg.get_str("env.name");
  if (name == "corridor_gate") {
    CorridorGateConfig c;
    c.n_agents = static_cast<int>(cfg.get_int("env.n_agents"));
    c.gate_width = cfg.get_real("corridor.gate_width");
    c.goal_x = cfg.get_real("corridor.goal_x");
    c.limit = static_cast<int>(cfg.get_int("corridor.limit"));
    c.collision_penalty = cfg.get_real("corridor.collision_penalty");
    c.start_stagger = cfg.get_real("corridor.start_stagger");
    c.hooks = hooks;
    return std::make_unique<CorridorGateEnv>(c);
  }
  if (name == "push_box") {
    PushBoxConfig c;
    c.limit = static_cast<int>(cfg.get_int("pushbox.limit"));
    c.hooks = hooks;
    return std::make_unique<PushBox2DEnv>(c);
  }
  if (name == "linear_team") {
    LinearTeamConfig c;
    c.n_agents = static_cast<int>(cfg.get_int("env.n_agents"));
    c.state_dim = static_cast<int>(cfg.get_int("linear.state_dim"));
    c.coupling = cfg.get_real("linear.coupling");
    c.noise_std = cfg.get_real("linear.noise_std");
    c.limit = static_cast<int>(cfg.get_int("linear.limit"));
    c.hooks = hooks;
    return std::make_unique<LinearTeamEnv>(c);
  }
  throw ConfigError("unknown env.name '" + name + "'");
}

AgentConfig make_agent_config(const RunConfig& cfg, const Env& env, int index) {
  AgentConfig a;
  a.index = index;
  a.n_agents = env.n_agents();
  a.obs_dim = env.obs_dim();
  a.act_dim = env.act_dim();
  a.latent_dim = static_cast<int>(cfg.get_int("model.latent_dim"));
  a.hidden_dim = static_cast<int>(cfg.get_int("model.hidden_dim"));
  a.num_layers = static_cast<int>(cfg.get_int("model.num_layers"));
  a.num_bins = static_cast<int>(cfg.get_int("model.num_bins"));
  const std::string mode = cfg.get_str("model.msg_mode");
  if (mode == "full") {
    a.msg_mode = MessageMode::Full;
  } else if (mode == "action_only") {
    a.msg_mode = MessageMode::ActionOnly;
  } else {
    throw ConfigError("model.msg_mode must be full or action_only");
  }
  a.grid_low = cfg.get_real("model.grid_low");
  a.grid_high = cfg.get_real("model.grid_high");
  a.lr = cfg.get_real("train.lr");
  a.encoder_lr_scale = cfg.get_real("train.encoder_lr_scale");
  a.dynamics_coef = cfg.get_real("train.dynamics_coef");
  a.reward_coef = cfg.get_real("train.reward_coef");
  a.q_coef = cfg.get_real("train.q_coef");
  a.step_decay = cfg.get_real("train.step_decay");
  a.gamma = cfg.get_real("train.gamma");
  a.horizon = static_cast<int>(cfg.get_int("planner.horizon"));
  a.nstep = static_cast<int>(cfg.get_int("train.nstep"));
  a.entropy_coef = cfg.get_real("train.entropy_coef");
  a.target_ema = cfg.get_real("train.target_ema");
  a.qscale_ema = cfg.get_real("train.qscale_ema");
  a.qscale_floor = cfg.get_real("train.qscale_floor");
  return a;
}

std::vector<AgentModel> make_agents(const RunConfig& cfg, const Env& env) {
  std::vector<AgentModel> agents;
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed"));
  for (int i = 0; i < env.n_agents(); ++i) {
    agents.push_back(AgentModel::create(make_agent_config(cfg, env, i),
                                        seed_stream(seed, 0x6d6f64656cULL, i)));
  }
  return agents;
}

PlannerConfig make_planner_config(const RunConfig& cfg) {
  PlannerConfig p;
  p.horizon = static_cast<int>(cfg.get_int("planner.horizon"));
  p.iterations = static_cast<int>(cfg.get_int("planner.iterations"));
  p.temperature = cfg.get_real("planner.temperature");
  p.num_samples = static_cast<int>(cfg.get_int("planner.num_samples"));
  p.actor_samples = static_cast<int>(cfg.get_int("planner.actor_samples"));
  p.elites = static_cast<int>(cfg.get_int("planner.elites"));
  p.discount = cfg.get_real("train.gamma");
  p.kl_threshold = cfg.get_real("planner.kl_threshold");
  p.cutoff_ratio = cfg.get_real("planner.cutoff_ratio");
  p.sigma_init = cfg.get_real("planner.sigma_init");
  p.sigma_floor = cfg.get_real("planner.sigma_floor");
  p.validate();
  return p;
}

// --- checkpoints --------------------------------------------------------

void save_run_checkpoint(const std::string& path, const std::vector<AgentModel>& agents,
                         int64_t env_steps) {
  StateMap st;
  const AgentConfig& c = agents[0].cfg;
  st.put_scalar("meta/n_agents", static_cast<real>(agents.size()));
  st.put_scalar("meta/obs_dim", static_cast<real>(c.obs_dim));
  st.put_scalar("meta/act_dim", static_cast<real>(c.act_dim));
  st.put_scalar("meta/latent_dim", static_cast<real>(c.latent_dim));
  st.put_scalar("meta/hidden_dim", static_cast<real>(c.hidden_dim));
  st.put_scalar("meta/num_layers", static_cast<real>(c.num_layers));
  st.put_scalar("meta/num_bins", static_cast<real>(c.num_bins));
  st.put_scalar("meta/msg_mode", static_cast<real>(static_cast<int>(c.msg_mode)));
  st.put_scalar("meta/env_steps", static_cast<real>(env_steps));
  for (size_t i = 0; i < agents.size(); ++i) {
    agents[i].save_state(st, "agent" + std::to_string(i) + "/");
  }
  save_checkpoint(path, st);
}

std::vector<AgentModel> load_run_checkpoint(const std::string& path, const RunConfig& cfg,
                                            const Env& env, int64_t* env_steps) {
  StateMap st = load_checkpoint(path);
  std::vector<AgentModel> agents = make_agents(cfg, env);
  const AgentConfig& c = agents[0].cfg;
  auto check = [&](const char* key, real want) {
    const real got = st.get_scalar(key);
    if (got != want) {
      throw DimensionError(std::string("checkpoint mismatch on ") + key + ": file has " +
                           std::to_string(static_cast<double>(got)) + ", config builds " +
                           std::to_string(static_cast<double>(want)));
    }
  };
  check("meta/n_agents", static_cast<real>(agents.size()));
  check("meta/obs_dim", static_cast<real>(c.obs_dim));
  check("meta/act_dim", static_cast<real>(c.act_dim));
  check("meta/latent_dim", static_cast<real>(c.latent_dim));
  check("meta/hidden_dim", static_cast<real>(c.hidden_dim));
  check("meta/num_layers", static_cast<real>(c.num_layers));
  check("meta/num_bins", static_cast<real>(c.num_bins));
  check("meta/msg_mode", static_cast<real>(static_cast<int>(c.msg_mode)));
  for (size_t i = 0; i < agents.size(); ++i) {
    agents[i].load_state(st, "agent" + std::to_string(i) + "/");
  }
  if (env_steps) *env_steps = static_cast<int64_t>(st.get_scalar("meta/env_steps"));
  return agents;
}

// --- episode collection -------------------------------------------------

uint64_t obs_digest(const Vec& obs) {
  // FNV-1a over the raw little-endian doubles
  uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    double v = static_cast<double>(obs(i));
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

EpisodeStats run_episode(Env& env, const std::vector<AgentModel>& agents,
                         const PlannerConfig& pcfg, uint64_t env_seed, uint64_t plan_seed,
                         const LinkModel& link, bool use_cache,
                         const std::function<void(const StepLog&)>& logger) {
  const int n = env.n_agents();
  const int H = pcfg.horizon;
  const AgentConfig& mc = agents[0].cfg;

  std::vector<Vec> obs = env.reset(env_seed);
  std::vector<CommCache> caches(static_cast<size_t>(n), CommCache(n));
  std::vector<std::optional<ActionDistribution>> warm(static_cast<size_t>(n));
  std::vector<PredictedTrajectory> intentions(static_cast<size_t>(n));

  std::vector<std::vector<Vec>> obs_hist(static_cast<size_t>(n));
  std::vector<std::vector<Vec>> act_hist(static_cast<size_t>(n));
  std::vector<real> rewards;

  EpisodeStats stats;
  int64_t iter_acc = 0;
  double ms_acc = 0;
  long t = 0;
  bool terminal = false;

  while (true) {
    for (int i = 0; i < n; ++i) obs_hist[static_cast<size_t>(i)].push_back(obs[static_cast<size_t>(i)]);
    const auto t0 = Clock::now();
    std::vector<Vec> actions(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<Message> sched(static_cast<size_t>(H) + 1,
                                 empty_message(n, mc.act_dim, mc.latent_dim, mc.msg_mode));
      for (int j = 0; j < i; ++j) {
        if (link.delivered(j, i, t)) {
          caches[static_cast<size_t>(i)].store(j, intentions[static_cast<size_t>(j)]);
          for (int h = 0; h <= H; ++h) {
            sched[static_cast<size_t>(h)].append_slot(
                j, intentions[static_cast<size_t>(j)].latents.col(h),
                intentions[static_cast<size_t>(j)].actions.col(h));
          }
        } else {
          stats.drops += 1;
          if (use_cache) {
            bool any = false;
            for (int h = 0; h <= H; ++h) {
              auto slice = caches[static_cast<size_t>(i)].lookup(j, t + h);
              if (slice.has_value()) {
                sched[static_cast<size_t>(h)].append_slot(j, slice->first, slice->second,
                                                          /*from_cache=*/true);
                any = true;
              }
            }
            if (any) {
              stats.cache_hits += 1;
            } else {
              stats.cache_misses += 1;
            }
          } else {
            stats.cache_misses += 1;
          }
        }
      }
      AgentModelView view(agents[static_cast<size_t>(i)]);
      PlanResult res = plan(view, obs[static_cast<size_t>(i)], sched,
                            warm[static_cast<size_t>(i)], pcfg,
                            seed_stream(plan_seed, static_cast<uint64_t>(t), i), t);
      warm[static_cast<size_t>(i)] = res.dist;
      intentions[static_cast<size_t>(i)] = res.trajectory;
      actions[static_cast<size_t>(i)] = res.action;
      iter_acc += res.iterations_used;
    }
    StepResult sr = env.step(actions);
    ms_acc += ms_since(t0);

    for (int i = 0; i < n; ++i) act_hist[static_cast<size_t>(i)].push_back(actions[static_cast<size_t>(i)]);
    rewards.push_back(sr.reward);
    stats.episode_return += sr.reward;
    if (logger) {
      StepLog log;
      log.t = t;
      log.obs = &obs;
      log.actions = &actions;
      log.reward = sr.reward;
      log.done = sr.done;
      logger(log);
    }
    obs = sr.obs;
    t += 1;
    if (sr.done) {
      terminal = sr.terminal;
      for (int i = 0; i < n; ++i) obs_hist[static_cast<size_t>(i)].push_back(obs[static_cast<size_t>(i)]);
      break;
    }
  }

  const int T = static_cast<int>(rewards.size());
  stats.success = terminal;
  stats.mean_plan_iterations = static_cast<real>(iter_acc) / static_cast<real>(T * n);
  stats.mean_step_ms = static_cast<real>(ms_acc / T);
  stats.episode.terminal = terminal;
  stats.episode.rewards = Vec(T);
  for (int s = 0; s < T; ++s) stats.episode.rewards(s) = rewards[static_cast<size_t>(s)];
  for (int i = 0; i < n; ++i) {
    Mat o(env.obs_dim(), T + 1);
    for (int s = 0; s <= T; ++s) o.col(s) = obs_hist[static_cast<size_t>(i)][static_cast<size_t>(s)];
    Mat a(env.act_dim(), T);
    for (int s = 0; s < T; ++s) a.col(s) = act_hist[static_cast<size_t>(i)][static_cast<size_t>(s)];
    stats.episode.obs.push_back(std::move(o));
    stats.episode.act.push_back(std::move(a));
  }
  return stats;
}

// --- training loop --------------------------------------------------------

TrainResult train(const RunConfig& cfg) {
  const std::string out_dir = cfg.get_str("out.dir");
  fs::create_directories(out_dir);

  std::unique_ptr<Env> env = make_env(cfg);
  std::vector<AgentModel> agents = make_agents(cfg, *env);
  PlannerConfig pcfg = make_planner_config(cfg);

  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed"));
  const int64_t max_steps = cfg.get_int("train.max_env_steps");
  const int batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  const int epochs = static_cast<int>(cfg.get_int("train.epochs_per_episode"));
  const int warmup = static_cast<int>(cfg.get_int("train.warmup_episodes"));
  const int window = pcfg.horizon + static_cast<int>(cfg.get_int("train.nstep"));
  const int eval_every = static_cast<int>(cfg.get_int("train.eval_every_episodes"));
  const int eval_episodes = static_cast<int>(cfg.get_int("train.eval_episodes"));
  const real stop_success = cfg.get_real("train.stop_success");
  const int stop_consecutive = static_cast<int>(cfg.get_int("train.stop_consecutive"));
  const real max_minutes = cfg.get_real("train.max_minutes");
  const int checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every"));

  UpdateOptions uopts;
  uopts.drop_prob = cfg.get_real("train.mask_drop_prob");
  uopts.permute = cfg.get_bool("train.mask_permute");
  uopts.update_actors = true;

  ReplayBuffer buffer(cfg.get_int("train.buffer_capacity"));
  MetricsWriter metrics(out_dir + "/metrics.csv");
  const std::string ckpt_path = out_dir + "/checkpoint.bin";

  Rng update_rng(seed_stream(seed, 0x75706474ULL));
  LinkModel clean_link;  // collection runs without injected drops

  TrainResult result;
  result.metrics_path = out_dir + "/metrics.csv";
  result.checkpoint_path = ckpt_path;

  const auto t_begin = Clock::now();
  int consecutive = 0;

  while (result.env_steps < max_steps) {
    EpisodeStats ep = run_episode(*env, agents, pcfg,
                                  seed_stream(seed, 0x656e76ULL, result.episodes),
                                  seed_stream(seed, 0x706c616eULL, result.episodes), clean_link,
                                  /*use_cache=*/true);
    result.env_steps += ep.episode.length();
    result.episodes += 1;
    buffer.add(std::move(ep.episode));

    MetricsRow row;
    row.step = result.env_steps;
    row.episode = result.episodes;
    row.episode_return = ep.episode_return;
    row.success = ep.success ? 1 : 0;
    row.plan_iters = ep.mean_plan_iterations;
    row.step_ms = ep.mean_step_ms;

    if (result.episodes >= warmup && buffer.can_sample(pcfg.horizon)) {
      std::vector<LossReport> reports;
      for (int e = 0; e < epochs; ++e) {
        TrajectoryBatch batch = buffer.sample(batch_size, window, pcfg.horizon, update_rng);
        reports = sequential_update(agents, batch, uopts, update_rng);
      }
      real qs = 0;
      for (size_t i = 0; i < reports.size(); ++i) {
        row.dyn_loss += reports[i].dynamics_loss / static_cast<real>(reports.size());
        row.rew_loss += reports[i].reward_loss / static_cast<real>(reports.size());
        row.q_loss += reports[i].q_loss / static_cast<real>(reports.size());
        row.actor_loss += reports[i].actor_loss / static_cast<real>(reports.size());
        row.entropy += reports[i].entropy / static_cast<real>(reports.size());
        qs += agents[i].qscale.scale / static_cast<real>(reports.size());
      }
      row.q_scale = qs;
    }
    metrics.append(row);

    if (checkpoint_every > 0 && result.episodes % checkpoint_every == 0) {
      save_run_checkpoint(ckpt_path, agents, result.env_steps);
    }

    if (eval_every > 0 && result.episodes % eval_every == 0 &&
        result.episodes >= warmup) {
      int hits = 0;
      for (int e = 0; e < eval_episodes; ++e) {
        EpisodeStats es = run_episode(*env, agents, pcfg,
                                      seed_stream(seed, 0x7165766cULL, result.episodes, e),
                                      seed_stream(seed, 0x7170ULL, result.episodes, e),
                                      clean_link, true);
        hits += es.success ? 1 : 0;
      }
      result.last_eval_success =
          eval_episodes > 0 ? static_cast<real>(hits) / eval_episodes : real(0);
      std::cerr << "train: episode " << result.episodes << " steps " << result.env_steps
                << " return " << ep.episode_return << " eval_success "
                << result.last_eval_success << "\n";
      if (result.last_eval_success >= stop_success) {
        consecutive += 1;
        if (consecutive >= stop_consecutive) {
          result.stopped_early = true;
          break;
        }
      } else {
        consecutive = 0;
      }
    }
    if (max_minutes > 0 && ms_since(t_begin) > static_cast<double>(max_minutes) * 60000.0) {
      std::cerr << "train: wall-clock budget reached\n";
      break;
    }
  }

  save_run_checkpoint(ckpt_path, agents, result.env_steps);
  return result;
}

// --- evaluation -------------------------------------------------------------

std::string EvalSummary::to_json() const {
  json j;
  j["episodes"] = episodes;
  j["mean_return"] = static_cast<double>(mean_return);
  j["success_rate"] = static_cast<double>(success_rate);
  j["mean_plan_iterations"] = static_cast<double>(mean_plan_iterations);
  j["mean_step_ms"] = static_cast<double>(mean_step_ms);
  j["drops"] = drops;
  j["cache_hits"] = cache_hits;
  j["cache_misses"] = cache_misses;
  return j.dump(2);
}

EvalSummary evaluate(const std::string& checkpoint_path, const RunConfig& cfg) {
  std::unique_ptr<Env> env = make_env(cfg);
  std::vector<AgentModel> agents = load_run_checkpoint(checkpoint_path, cfg, *env);
  PlannerConfig pcfg = make_planner_config(cfg);
  pcfg.kl_threshold = cfg.get_real("planner.kl_threshold");

  const int episodes = static_cast<int>(cfg.get_int("eval.episodes"));
  const uint64_t eseed = static_cast<uint64_t>(cfg.get_int("eval.seed"));
  LinkModel link;
  link.drop_prob = cfg.get_real("eval.drop_prob");
  link.seed = seed_stream(eseed, 0x6c696e6bULL);
  const bool use_cache = cfg.get_bool("eval.cache");

  std::ofstream log_out;
  std::function<void(const StepLog&)> logger;
  int log_episode = 0;
  if (cfg.get_bool("eval.log_episodes")) {
    fs::create_directories(cfg.get_str("out.dir"));
    log_out.open(cfg.get_str("out.dir") + "/episodes.jsonl", std::ios::trunc);
    logger = [&](const StepLog& s) {
      json rec;
      rec["episode"] = log_episode;
      rec["t"] = s.t;
      json digests = json::array();
      json acts = json::array();
      for (const Vec& o : *s.obs) {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(obs_digest(o)));
        digests.push_back(std::string(hex));
      }
      for (const Vec& a : *s.actions) {
        json av = json::array();
        for (Eigen::Index k = 0; k < a.size(); ++k) av.push_back(static_cast<double>(a(k)));
        acts.push_back(av);
      }
      rec["digest"] = digests;
      rec["act"] = acts;
      rec["r"] = static_cast<double>(s.reward);
      rec["done"] = s.done;
      log_out << rec.dump() << "\n";
    };
  }

  EvalSummary sum;
  sum.episodes = episodes;
  for (int e = 0; e < episodes; ++e) {
    log_episode = e;
    EpisodeStats es = run_episode(*env, agents, pcfg, seed_stream(eseed, 0x656e76ULL, e),
                                  seed_stream(eseed, 0x706c616eULL, e), link, use_cache,
                                  logger ? logger : std::function<void(const StepLog&)>());
    sum.mean_return += es.episode_return;
    sum.success_rate += es.success ? 1 : 0;
    sum.mean_plan_iterations += es.mean_plan_iterations;
    sum.mean_step_ms += es.mean_step_ms;
    sum.drops += es.drops;
    sum.cache_hits += es.cache_hits;
    sum.cache_misses += es.cache_misses;
  }
  if (episodes > 0) {
    sum.mean_return /= episodes;
    sum.success_rate /= episodes;
    sum.mean_plan_iterations /= episodes;
    sum.mean_step_ms /= episodes;
  }
  return sum;
}

// --- prediction ablation ------------------------------------------------------

std::string AblationResult::to_json() const {
  json j;
  auto rows = [](const std::vector<AblationRow>& v) {
    json arr = json::array();
    for (const AblationRow& r : v) {
      arr.push_back({{"horizon", r.horizon},
                     {"dyn_mse", static_cast<double>(r.dyn_mse)},
                     {"rew_mse", static_cast<double>(r.rew_mse)}});
    }
    return arr;
  };
  j["sequential"] = rows(sequential);
  j["decentralized"] = rows(decentralized);
  j["params_per_agent"] = params_per_agent;
  return j.dump(2);
}

namespace {

// Batched chained rollout of every agent over oracle windows, returning
// per-horizon squared errors against the oracle-encoded targets.
void score_variant(const std::vector<AgentModel>& agents, const LinearTeamConfig& ec,
                   const std::vector<Mat>& obs0,                 // [agent] obs x N
                   const std::vector<std::vector<Mat>>& acts,    // [agent][h] act x N
                   const std::vector<std::vector<Mat>>& oracle_obs,  // [agent][h 0..H] obs x N
                   const Mat& oracle_rewards,                    // H x N
                   bool with_messages, std::vector<AblationRow>* out) {
  const int n = static_cast<int>(agents.size());
  const int H = static_cast<int>(acts[0].size());
  const int N = static_cast<int>(obs0[0].cols());
  const int dz = agents[0].cfg.latent_dim;

  std::vector<Mat> z(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) z[static_cast<size_t>(i)] = agents[static_cast<size_t>(i)].encode(obs0[static_cast<size_t>(i)]);

  out->assign(static_cast<size_t>(H), AblationRow{});
  for (int h = 0; h < H; ++h) {
    std::vector<Mat> z_next(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const AgentModel& m = agents[static_cast<size_t>(i)];
      Mat e = Mat::Zero(m.cfg.msg_dim(), N);
      if (with_messages) {
        const int w = m.cfg.msg_slot_width();
        for (int j = 0; j < i; ++j) {
          if (m.cfg.msg_mode == MessageMode::Full) {
            e.middleRows(j * w, m.cfg.latent_dim) = z[static_cast<size_t>(j)];
            e.middleRows(j * w + m.cfg.latent_dim, m.cfg.act_dim) =
                acts[static_cast<size_t>(j)][static_cast<size_t>(h)];
          } else {
            e.middleRows(j * w, m.cfg.act_dim) = acts[static_cast<size_t>(j)][static_cast<size_t>(h)];
          }
        }
      }
      AgentModel::StepOut so =
          m.predict_step(z[static_cast<size_t>(i)], acts[static_cast<size_t>(i)][static_cast<size_t>(h)], e);
      Mat target = m.encode(oracle_obs[static_cast<size_t>(i)][static_cast<size_t>(h + 1)]);
      (*out)[static_cast<size_t>(h)].dyn_mse +=
          (so.z_next - target).array().square().sum() / static_cast<real>(dz * N * n);
      Vec rhat = codec::twohot_decode_batch(so.r_logits, m.grid);
      (*out)[static_cast<size_t>(h)].rew_mse +=
          (rhat.transpose() - oracle_rewards.row(h)).array().square().sum() /
          static_cast<real>(N * n);
      z_next[static_cast<size_t>(i)] = so.z_next;
    }
    z = z_next;
    (*out)[static_cast<size_t>(h)].horizon = h + 1;
  }
  (void)ec;
}

}  // namespace

AblationResult ablate_prediction(const RunConfig& cfg) {
  if (cfg.get_str("env.name") != "linear_team") {
    throw ConfigError("ablate-prediction requires env.name = linear_team");
  }
  std::unique_ptr<Env> env_base = make_env(cfg);
  auto* env = dynamic_cast<LinearTeamEnv*>(env_base.get());
  const LinearTeamConfig ec = env->config();
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed"));
  const int n = env->n_agents();
  const int H = static_cast<int>(cfg.get_int("planner.horizon"));
  const int window = H + static_cast<int>(cfg.get_int("train.nstep"));

  // Random-action data.
  const int64_t collect_steps = cfg.get_int("ablate.collect_steps");
  ReplayBuffer buffer(collect_steps + env->episode_limit());
  Rng act_rng(seed_stream(seed, 0xab0c01ULL));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  int64_t steps = 0;
  int64_t ep_idx = 0;
  while (steps < collect_steps) {
    std::vector<Vec> obs = env->reset(seed_stream(seed, 0xab0e02ULL, ep_idx++));
    Episode ep;
    std::vector<std::vector<Vec>> oh(static_cast<size_t>(n)), ah(static_cast<size_t>(n));
    std::vector<real> rh;
    while (true) {
      for (int i = 0; i < n; ++i) oh[static_cast<size_t>(i)].push_back(obs[static_cast<size_t>(i)]);
      std::vector<Vec> acts(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        Vec a(env->act_dim());
        for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = static_cast<real>(uni(act_rng));
        acts[static_cast<size_t>(i)] = a;
      }
      StepResult sr = env->step(acts);
      for (int i = 0; i < n; ++i) ah[static_cast<size_t>(i)].push_back(acts[static_cast<size_t>(i)]);
      rh.push_back(sr.reward);
      obs = sr.obs;
      if (sr.done) {
        for (int i = 0; i < n; ++i) oh[static_cast<size_t>(i)].push_back(obs[static_cast<size_t>(i)]);
        break;
      }
    }
    const int T = static_cast<int>(rh.size());
    ep.rewards = Vec(T);
    for (int s = 0; s < T; ++s) ep.rewards(s) = rh[static_cast<size_t>(s)];
    for (int i = 0; i < n; ++i) {
      Mat o(env->obs_dim(), T + 1), a(env->act_dim(), T);
      for (int s = 0; s <= T; ++s) o.col(s) = oh[static_cast<size_t>(i)][static_cast<size_t>(s)];
      for (int s = 0; s < T; ++s) a.col(s) = ah[static_cast<size_t>(i)][static_cast<size_t>(s)];
      ep.obs.push_back(std::move(o));
      ep.act.push_back(std::move(a));
    }
    ep.terminal = false;
    steps += T;
    buffer.add(std::move(ep));
  }

  // Matched variants: identical seeds, identical batches; only the message
  // content differs (drop_prob 1 zeroes every slot for the decentralized arm).
  std::vector<AgentModel> seq = make_agents(cfg, *env);
  std::vector<AgentModel> dec = make_agents(cfg, *env);

  const int updates = static_cast<int>(cfg.get_int("ablate.updates"));
  const int batch_size = static_cast<int>(cfg.get_int("ablate.batch_size"));
  Rng b1(seed_stream(seed, 0xabba7ULL)), b2(seed_stream(seed, 0xabba7ULL));
  Rng u1(seed_stream(seed, 0xab0b5ULL)), u2(seed_stream(seed, 0xab0b5ULL));
  UpdateOptions seq_opts, dec_opts;
  seq_opts.drop_prob = 0;
  seq_opts.permute = false;
  seq_opts.update_actors = false;
  dec_opts = seq_opts;
  dec_opts.drop_prob = 1;
  for (int u = 0; u < updates; ++u) {
    TrajectoryBatch batch1 = buffer.sample(batch_size, window, H, b1);
    sequential_update(seq, batch1, seq_opts, u1);
    TrajectoryBatch batch2 = buffer.sample(batch_size, window, H, b2);
    sequential_update(dec, batch2, dec_opts, u2);
  }

  // Fresh oracle windows.
  const int N = static_cast<int>(cfg.get_int("ablate.eval_windows"));
  std::vector<Mat> obs0(static_cast<size_t>(n), Mat(env->obs_dim(), N));
  std::vector<std::vector<Mat>> acts(static_cast<size_t>(n),
                                     std::vector<Mat>(static_cast<size_t>(H), Mat(env->act_dim(), N)));
  std::vector<std::vector<Mat>> oracle_obs(
      static_cast<size_t>(n), std::vector<Mat>(static_cast<size_t>(H) + 1, Mat(env->obs_dim(), N)));
  Mat oracle_rewards(H, N);
  Rng ev_rng(seed_stream(seed, 0xabe7aULL));
  for (int w = 0; w < N; ++w) {
    env->reset(seed_stream(seed, 0xab5eedULL, w));
    std::vector<Vec> starts = env->states();
    std::vector<Mat> a_seq(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      Mat a(env->act_dim(), H);
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = static_cast<real>(uni(ev_rng));
      }
      a_seq[static_cast<size_t>(i)] = a;
    }
    LinearTeamEnv::OracleRollout oracle = LinearTeamEnv::oracle_rollout(ec, starts, a_seq);
    for (int i = 0; i < n; ++i) {
      obs0[static_cast<size_t>(i)].col(w) = starts[static_cast<size_t>(i)];
      for (int h = 0; h < H; ++h) {
        acts[static_cast<size_t>(i)][static_cast<size_t>(h)].col(w) =
            a_seq[static_cast<size_t>(i)].col(h);
      }
      for (int h = 0; h <= H; ++h) {
        oracle_obs[static_cast<size_t>(i)][static_cast<size_t>(h)].col(w) =
            oracle.states[static_cast<size_t>(h)][static_cast<size_t>(i)];
      }
    }
    for (int h = 0; h < H; ++h) oracle_rewards(h, w) = oracle.rewards[static_cast<size_t>(h)];
  }
  (void)ev_rng;

  AblationResult res;
  res.params_per_agent = seq[0].param_count();
  if (seq[0].param_count() != dec[0].param_count()) {
    throw Error("ablate: variant parameter counts diverged");
  }
  score_variant(seq, ec, obs0, acts, oracle_obs, oracle_rewards, true, &res.sequential);
  score_variant(dec, ec, obs0, acts, oracle_obs, oracle_rewards, false, &res.decentralized);
  return res;
}

void export_traj(const std::string& log_path, const std::string& out_path) {
  std::ifstream in(log_path);
  if (!in) throw Error("export-traj: cannot open " + log_path);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw Error("export-traj: cannot open " + out_path);

  std::string line;
  bool wrote_header = false;
  size_t n_agents = 0, act_dim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (...) {
      continue;  // partial trailing line
    }
    const auto& acts = rec.at("act");
    if (!wrote_header) {
      n_agents = acts.size();
      act_dim = acts[0].size();
      out << "episode,t,reward,done";
      for (size_t i = 0; i < n_agents; ++i) {
        for (size_t k = 0; k < act_dim; ++k) out << ",a" << i << "_" << k;
      }
      for (size_t i = 0; i < n_agents; ++i) out << ",digest" << i;
      out << "\n";
      wrote_header = true;
    }
    out << rec.at("episode").get<int64_t>() << "," << rec.at("t").get<int64_t>() << ","
        << rec.at("r").get<double>() << "," << (rec.at("done").get<bool>() ? 1 : 0);
    for (size_t i = 0; i < n_agents; ++i) {
      for (size_t k = 0; k < act_dim; ++k) out << "," << acts[i][k].get<double>();
    }
    for (size_t i = 0; i < n_agents; ++i) {
      out << "," << rec.at("digest")[i].get<std::string>();
    }
    out << "\n";
  }
}

}  // namespace baton
