#include "baton/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>

namespace baton {

const std::vector<ConfigKey>& RunConfig::schema() {
  static const std::vector<ConfigKey> keys = {
      {"env.name", KeyType::Str, "corridor_gate",
       "environment: corridor_gate | push_box | linear_team"},
      {"env.n_agents", KeyType::Int, "2", "number of agents"},
      {"env.obs_noise_std", KeyType::Real, "0", "observation noise hook (default off)"},
      {"env.action_delay", KeyType::Int, "0", "action delay hook in steps (default off)"},
      {"corridor.gate_width", KeyType::Real, "0.7", "gate opening in meters"},
      {"corridor.goal_x", KeyType::Real, "0.6", "goal line past the gate"},
      {"corridor.limit", KeyType::Int, "50", "episode step limit"},
      {"corridor.collision_penalty", KeyType::Real, "1.0", "penalty per overlapping pair-step"},
      {"corridor.start_stagger", KeyType::Real, "0.2", "per-index start offset along x"},
      {"pushbox.limit", KeyType::Int, "60", "episode step limit"},
      {"linear.coupling", KeyType::Real, "0.5", "predecessor-action coupling strength C"},
      {"linear.noise_std", KeyType::Real, "0", "process noise (oracle scoring assumes 0)"},
      {"linear.limit", KeyType::Int, "50", "episode step limit"},
      {"linear.state_dim", KeyType::Int, "2", "per-agent state dimension"},

      {"model.latent_dim", KeyType::Int, "64", "latent size, multiple of 8"},
      {"model.hidden_dim", KeyType::Int, "64", "MLP width"},
      {"model.num_layers", KeyType::Int, "2", "hidden layers per head"},
      {"model.num_bins", KeyType::Int, "101", "discrete-regression bins"},
      {"model.msg_mode", KeyType::Str, "full", "message content: full | action_only"},
      {"model.grid_low", KeyType::Real, "-20", "bin range low (symlog space)"},
      {"model.grid_high", KeyType::Real, "20", "bin range high (symlog space)"},

      {"train.seed", KeyType::Int, "1", "master seed"},
      {"train.max_env_steps", KeyType::Int, "200000", "environment step budget"},
      {"train.batch_size", KeyType::Int, "1000", "windows per update"},
      {"train.buffer_capacity", KeyType::Int, "1000000", "replay capacity in transitions"},
      {"train.epochs_per_episode", KeyType::Int, "1", "update rounds after each episode"},
      {"train.warmup_episodes", KeyType::Int, "2", "episodes collected before updates start"},
      {"train.lr", KeyType::Real, "5e-4", "Adam learning rate"},
      {"train.encoder_lr_scale", KeyType::Real, "0.3", "encoder learning-rate multiplier"},
      {"train.dynamics_coef", KeyType::Real, "20", "dynamics loss coefficient"},
      {"train.reward_coef", KeyType::Real, "0.1", "reward loss coefficient"},
      {"train.q_coef", KeyType::Real, "0.1", "critic loss coefficient"},
      {"train.step_decay", KeyType::Real, "0.5", "per-rollout-step loss weight decay"},
      {"train.gamma", KeyType::Real, "0.99", "discount factor"},
      {"train.nstep", KeyType::Int, "20", "n-step TD target length"},
      {"train.entropy_coef", KeyType::Real, "1e-4", "actor entropy coefficient"},
      {"train.target_ema", KeyType::Real, "0.995", "target-critic EMA rate per update"},
      {"train.qscale_ema", KeyType::Real, "0.99", "percentile-scale EMA"},
      {"train.qscale_floor", KeyType::Real, "0.01", "percentile-scale floor"},
      {"train.mask_drop_prob", KeyType::Real, "0.2", "training-time message drop probability"},
      {"train.mask_permute", KeyType::Bool, "true", "permute communication order per update"},
      {"train.eval_every_episodes", KeyType::Int, "10", "episodes between progress evals (0 off)"},
      {"train.eval_episodes", KeyType::Int, "5", "episodes per progress eval"},
      {"train.stop_success", KeyType::Real, "1.0", "progress-eval success rate that counts"},
      {"train.stop_consecutive", KeyType::Int, "2", "consecutive hits before early stop"},
      {"train.max_minutes", KeyType::Real, "0", "wall-clock budget in minutes (0 unlimited)"},
      {"train.checkpoint_every", KeyType::Int, "50", "episodes between periodic checkpoints"},

      {"planner.horizon", KeyType::Int, "3", "rollout horizon H"},
      {"planner.iterations", KeyType::Int, "6", "planning iterations K"},
      {"planner.temperature", KeyType::Real, "0.5", "elite weighting temperature"},
      {"planner.num_samples", KeyType::Int, "512", "Gaussian candidates per iteration"},
      {"planner.actor_samples", KeyType::Int, "24", "actor candidates per iteration"},
      {"planner.elites", KeyType::Int, "64", "elite set size"},
      {"planner.kl_threshold", KeyType::Real, "0", "early-stop KL threshold (0 off)"},
      {"planner.cutoff_ratio", KeyType::Real, "0.25", "noise low-pass cutoff f_c/f_s (0 off)"},
      {"planner.sigma_init", KeyType::Real, "0.5", "stddev reset each environment step"},
      {"planner.sigma_floor", KeyType::Real, "0.05", "stddev floor"},

      {"eval.episodes", KeyType::Int, "50", "evaluation episodes"},
      {"eval.drop_prob", KeyType::Real, "0", "per-link message drop probability"},
      {"eval.cache", KeyType::Bool, "true", "substitute cached predictions on drops"},
      {"eval.seed", KeyType::Int, "7777", "evaluation seed"},
      {"eval.log_episodes", KeyType::Bool, "false", "write per-step episode logs (jsonl)"},

      {"ablate.collect_steps", KeyType::Int, "20000", "random-action steps to collect"},
      {"ablate.updates", KeyType::Int, "1200", "training updates per model variant"},
      {"ablate.batch_size", KeyType::Int, "256", "windows per ablation update"},
      {"ablate.eval_windows", KeyType::Int, "500", "oracle windows for the MSE table"},

      {"out.dir", KeyType::Str, "runs/latest", "output directory"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const ConfigKey& k : schema()) values_[k.name] = k.default_value;
}

const ConfigKey& RunConfig::key_info(const std::string& key) const {
  for (const ConfigKey& k : schema()) {
    if (key == k.name) return k;
  }
  throw ConfigError("unknown config key: " + key);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const ConfigKey& info = key_info(key);
  switch (info.type) {
    case KeyType::Str:
      break;
    case KeyType::Int: {
      size_t pos = 0;
      try {
        (void)std::stoll(value, &pos);
      } catch (...) {
        pos = 0;
      }
      if (pos != value.size() || value.empty()) {
        throw ConfigError("config key " + key + " expects an integer, got '" + value + "'");
      }
      break;
    }
    case KeyType::Real: {
      size_t pos = 0;
      try {
        (void)std::stod(value, &pos);
      } catch (...) {
        pos = 0;
      }
      if (pos != value.size() || value.empty()) {
        throw ConfigError("config key " + key + " expects a real, got '" + value + "'");
      }
      break;
    }
    case KeyType::Bool:
      if (value != "true" && value != "false" && value != "0" && value != "1") {
        throw ConfigError("config key " + key + " expects true|false, got '" + value + "'");
      }
      break;
  }
  values_[key] = value;
}

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

const std::string& RunConfig::get_str(const std::string& key) const {
  key_info(key);
  return values_.at(key);
}

int64_t RunConfig::get_int(const std::string& key) const {
  if (key_info(key).type != KeyType::Int) throw ConfigError(key + " is not an integer key");
  return std::stoll(values_.at(key));
}

real RunConfig::get_real(const std::string& key) const {
  const KeyType t = key_info(key).type;
  if (t != KeyType::Real && t != KeyType::Int) throw ConfigError(key + " is not a real key");
  return static_cast<real>(std::stod(values_.at(key)));
}

bool RunConfig::get_bool(const std::string& key) const {
  if (key_info(key).type != KeyType::Bool) throw ConfigError(key + " is not a boolean key");
  const std::string& v = values_.at(key);
  return v == "true" || v == "1";
}

void RunConfig::print_schema(std::ostream& os) {
  const char* type_names[] = {"str", "int", "real", "bool"};
  for (const ConfigKey& k : schema()) {
    os << k.name << " (" << type_names[static_cast<int>(k.type)] << ", default " << k.default_value
       << ") - " << k.doc << "\n";
  }
}

}  // namespace baton
