// Command-line front end for the demo -> reward -> policy -> evaluation pipeline.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad configuration,
// 3 an upstream artifact is missing.

#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "clb/io.hpp"
#include "clb/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<int> scenarios;
  std::optional<std::string> sampler;
};

clb::RunConfig load_config(const GlobalOptions& opts) {
  nlohmann::json j = nlohmann::json::object();
  if (!opts.config.empty()) {
    try {
      j = clb::read_json_file(opts.config);
    } catch (const std::exception& e) {
      throw clb::ConfigError(std::string("cannot read config: ") + e.what());
    }
  }
  if (opts.seed) j["seed"] = *opts.seed;
  if (opts.out) j["out"] = *opts.out;
  if (!opts.scenarios.empty()) j["scenarios"] = opts.scenarios;
  if (opts.sampler) j["sampler"] = *opts.sampler;
  clb::RunConfig cfg = clb::RunConfig::from_json(j);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cellular load balancing from ranked demonstrations"};
  app.require_subcommand(1);

  GlobalOptions opts;
  app.add_option("--config", opts.config, "JSON run configuration");
  app.add_option("--seed", opts.seed, "Master seed");
  app.add_option("--out", opts.out, "Output directory");
  app.add_option("--scenario", opts.scenarios, "Traffic scenario id (repeatable)")
      ->check(CLI::Range(1, 4));
  app.add_option("--sampler", opts.sampler, "Pair sampler")
      ->check(CLI::IsMember({"tcs", "contiguous"}));

  using Command = std::function<void(const clb::RunConfig&, std::ostream&)>;
  std::vector<std::pair<CLI::App*, Command>> commands{
      {app.add_subcommand("collect-demos", "Roll out the random controller and rank the demonstrations"),
       clb::cmd_collect_demos},
      {app.add_subcommand("train-reward", "Fit the reward network on sampled sub-trajectory pairs"),
       clb::cmd_train_reward},
      {app.add_subcommand("train-policy", "Train a PPO policy against a learned reward"),
       clb::cmd_train_policy},
      {app.add_subcommand("evaluate", "Evaluate controllers on held-out seeds"), clb::cmd_evaluate},
      {app.add_subcommand("report", "Aggregate evaluation and reward results"), clb::cmd_report},
  };
  for (auto& [sub, cmd] : commands) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const clb::RunConfig cfg = load_config(opts);
    for (auto& [sub, cmd] : commands) {
      if (sub->parsed()) cmd(cfg, std::cerr);
    }
  } catch (const clb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const clb::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
