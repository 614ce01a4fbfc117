#include "baton/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// Every config key doubles as a CLI flag; a flag set on the command line
// overrides the config file.
struct KeyOverrides {
  std::vector<std::pair<std::string, std::string>> values;
};

void add_config_flags(CLI::App* app, KeyOverrides* overrides) {
  for (const baton::ConfigKey& k : baton::RunConfig::schema()) {
    std::string flag = std::string("--") + k.name;
    app->add_option_function<std::string>(
           flag,
           [overrides, name = std::string(k.name)](const std::string& v) {
             overrides->values.emplace_back(name, v);
           },
           k.doc)
        ->type_name(k.type == baton::KeyType::Str    ? "STR"
                    : k.type == baton::KeyType::Int  ? "INT"
                    : k.type == baton::KeyType::Real ? "REAL"
                                                     : "BOOL");
  }
}

baton::RunConfig resolve_config(const std::string& config_path, const KeyOverrides& overrides) {
  baton::RunConfig cfg;
  if (!config_path.empty()) cfg.load_file(config_path);
  for (const auto& [k, v] : overrides.values) cfg.set(k, v);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential world-model planning for cooperative multi-agent control"};
  app.require_subcommand(0, 1);

  std::string config_path;
  KeyOverrides overrides;

  auto* train_cmd = app.add_subcommand("train", "train agents and write checkpoint + metrics");
  train_cmd->add_option("--config", config_path, "config file (key = value lines)");
  add_config_flags(train_cmd, &overrides);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint; prints a JSON summary");
  std::string checkpoint;
  eval_cmd->add_option("--config", config_path, "config file (key = value lines)");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  add_config_flags(eval_cmd, &overrides);

  auto* ablate_cmd = app.add_subcommand(
      "ablate-prediction", "sequential vs decentralized prediction error on linear_team");
  ablate_cmd->add_option("--config", config_path, "config file (key = value lines)");
  add_config_flags(ablate_cmd, &overrides);

  auto* export_cmd = app.add_subcommand("export-traj", "episode log (jsonl) to CSV");
  std::string log_path, out_path;
  export_cmd->add_option("--log", log_path, "episodes.jsonl written by eval")->required();
  export_cmd->add_option("--out", out_path, "output CSV path")->required();

  auto* schema_cmd = app.add_subcommand("schema", "print the config schema");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(train_cmd)) {
      baton::RunConfig cfg = resolve_config(config_path, overrides);
      baton::TrainResult res = baton::train(cfg);
      std::cout << "{\n  \"checkpoint\": \"" << res.checkpoint_path << "\",\n  \"metrics\": \""
                << res.metrics_path << "\",\n  \"env_steps\": " << res.env_steps
                << ",\n  \"episodes\": " << res.episodes
                << ",\n  \"last_eval_success\": " << static_cast<double>(res.last_eval_success)
                << ",\n  \"stopped_early\": " << (res.stopped_early ? "true" : "false") << "\n}\n";
    } else if (app.got_subcommand(eval_cmd)) {
      baton::RunConfig cfg = resolve_config(config_path, overrides);
      baton::EvalSummary sum = baton::evaluate(checkpoint, cfg);
      std::cout << sum.to_json() << "\n";
    } else if (app.got_subcommand(ablate_cmd)) {
      baton::RunConfig cfg = resolve_config(config_path, overrides);
      cfg.set("env.name", "linear_team");
      baton::AblationResult res = baton::ablate_prediction(cfg);
      std::cout << res.to_json() << "\n";
    } else if (app.got_subcommand(export_cmd)) {
      baton::export_traj(log_path, out_path);
    } else if (app.got_subcommand(schema_cmd)) {
      baton::RunConfig::print_schema(std::cout);
    } else {
      std::cout << app.help();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
