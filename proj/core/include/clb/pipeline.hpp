#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clb/env_mdp.hpp"
#include "clb/kpi_rank.hpp"
#include "clb/policy_ppo.hpp"
#include "clb/reward_trex.hpp"

namespace clb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An upstream stage has not produced the file a command needs.
class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(const std::filesystem::path& path)
      : std::runtime_error("missing artifact: " + path.string()), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct EvalConfig {
  std::vector<std::uint64_t> seeds{101, 102, 103};
  std::vector<std::string> controllers{"ours", "fixed", "adaptive", "demos", "trex-contiguous"};
  double adaptive_gain = 10.0;
};

struct RunConfig {
  std::vector<int> scenarios{1};
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  SamplerKind sampler = SamplerKind::kTcs;
  EnvConfig env;
  KpiConfig kpi;
  int demo_count = 100;
  double train_fraction = 0.7;
  RewardTrainConfig reward;
  PpoConfig ppo;
  EvalConfig eval;
  nlohmann::json scenario_overrides = nlohmann::json::object();  // keyed by scenario id

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; wrong types and unknown values throw ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  /// Hash of everything except the output directory.
  std::string hash() const;
};

/// Methods evaluate knows about.
const std::vector<std::string>& known_methods();

std::filesystem::path scenario_dir(const RunConfig& cfg, int scenario);
std::filesystem::path demos_dir(const RunConfig& cfg, int scenario);
std::filesystem::path reward_dir(const RunConfig& cfg, int scenario, SamplerKind sampler);
std::filesystem::path policy_dir(const RunConfig& cfg, int scenario, SamplerKind sampler);
std::filesystem::path evaluate_dir(const RunConfig& cfg, int scenario);
std::filesystem::path report_dir(const RunConfig& cfg);

LoadBalancingEnv make_env(const RunConfig& cfg, int scenario);

/// Demonstrations listed in the demos manifest, in file order.
std::vector<Trajectory> load_demos(const RunConfig& cfg, int scenario);

void cmd_collect_demos(const RunConfig& cfg, std::ostream& log);
void cmd_train_reward(const RunConfig& cfg, std::ostream& log);
void cmd_train_policy(const RunConfig& cfg, std::ostream& log);
void cmd_evaluate(const RunConfig& cfg, std::ostream& log);
void cmd_report(const RunConfig& cfg, std::ostream& log);

}  // namespace clb
