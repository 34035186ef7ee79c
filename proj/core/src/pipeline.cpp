#include "clb/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>

#include "clb/controllers.hpp"
#include "clb/io.hpp"
#include "clb/scenario_config.hpp"

namespace clb {
namespace fs = std::filesystem;
namespace {

using nlohmann::json;

std::string fnv_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string traj_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%03d.json", i);
  return buf;
}

json config_json_without_out(const RunConfig& cfg) {
  json j = cfg.to_json();
  j.erase("out");
  return j;
}

/// Writes `contents` into `dir/name` and remembers its hash for the manifest.
class StageWriter {
 public:
  explicit StageWriter(fs::path dir) : dir_(std::move(dir)) {}

  void text(const std::string& name, const std::string& contents) {
    write_text_file(dir_ / name, contents);
    files_[name] = fnv_hex(contents);
  }
  void json_file(const std::string& name, const json& j) { text(name, j.dump(1) + "\n"); }
  template <typename F>
  void csv(const std::string& name, F&& fill) {
    std::ostringstream os;
    fill(os);
    text(name, os.str());
  }

  void manifest(const std::string& stage, const RunConfig& cfg, int scenario, json extra = json::object()) {
    json m = std::move(extra);
    m["stage"] = stage;
    if (scenario > 0) m["scenario"] = scenario;
    m["seed"] = cfg.seed;
    m["config_hash"] = cfg.hash();
    m["config"] = config_json_without_out(cfg);
    m["files"] = files_;
    write_json_file(dir_ / "manifest.json", m);
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::map<std::string, std::string> files_;
};

void require(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError(path);
}

// Paths recorded inside artifacts are relative to the output root so a run is
// byte-identical wherever it is written.
std::string out_relative(const RunConfig& cfg, const fs::path& p) {
  return p.lexically_relative(cfg.out).generic_string();
}

std::string seed_tag(const RunConfig& cfg) { return "seed" + std::to_string(cfg.seed); }

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void write_kpi_outputs(StageWriter& w, const std::string& method, const KpiReport& report,
                       std::span<const Trajectory> trajectories, const KpiConfig& kpi) {
  w.csv(method + "_kpi.csv", [&](std::ostream& os) { write_kpi_report_csv(os, report); });
  w.csv(method + "_timeseries.csv",
        [&](std::ostream& os) { write_kpi_timeseries_csv(os, method, trajectories, kpi); });
}

json kpi_summary_json(const KpiReport& r) {
  return json{{"method", r.method},
              {"trajectories", r.trajectories},
              {"t_min", {{"mean", r.t_min.mean}, {"std", r.t_min.std}}},
              {"t_std", {{"mean", r.t_std.mean}, {"std", r.t_std.std}}},
              {"t_cc", {{"mean", r.t_cc.mean}, {"std", r.t_cc.std}}}};
}

}  // namespace

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods{"ours",   "fixed",  "adaptive",
                                                "demos",  "trex-contiguous", "random"};
  return methods;
}

void RunConfig::validate() const {
  try {
    if (scenarios.empty()) throw ConfigError("at least one scenario is required");
    for (int id : scenarios) {
      const std::string key = std::to_string(id);
      const TrafficScenario s =
          load_scenario(id, scenario_overrides.contains(key) ? scenario_overrides.at(key) : json());
      if (s.ue_count <= 0) throw ConfigError("scenario " + key + ": ue_count must be positive");
    }
    if (env.horizon <= 0 || env.ticks_per_hour <= 0 || !(env.tick_seconds > 0.0)) {
      throw ConfigError("env: horizon, ticks_per_hour and tick_seconds must be positive");
    }
    if (demo_count < 2) throw ConfigError("demos.count must be at least 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw ConfigError("demos.train_fraction must lie in (0, 1)");
    }
    if (reward.pairs <= 0 || reward.epochs < 0 || reward.batch_size <= 0 || reward.hidden <= 0) {
      throw ConfigError("reward: pairs, batch_size and hidden must be positive, epochs >= 0");
    }
    if (reward.sub_length <= 0 || reward.sub_length > env.horizon) {
      throw ConfigError("reward.sub_length must lie in [1, horizon]");
    }
    if (!(reward.adam.learning_rate > 0.0)) throw ConfigError("reward learning rate must be positive");
    ppo.validate();
    kpi.validate();
    if (!(eval.adaptive_gain > 0.0)) throw ConfigError("evaluate.adaptive_gain must be positive");
    for (const auto& m : eval.controllers) {
      const auto& known = known_methods();
      if (std::find(known.begin(), known.end(), m) == known.end()) {
        throw ConfigError("evaluate: unknown controller '" + m + "'");
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

json RunConfig::to_json() const {
  return json{{"scenarios", scenarios},
              {"seed", seed},
              {"out", out.generic_string()},
              {"sampler", sampler_name(sampler)},
              {"env", env},
              {"kpi", kpi},
              {"demos", {{"count", demo_count}, {"train_fraction", train_fraction}}},
              {"reward", reward},
              {"ppo", ppo},
              {"evaluate",
               {{"seeds", eval.seeds},
                {"controllers", eval.controllers},
                {"adaptive_gain", eval.adaptive_gain}}},
              {"scenario_overrides", scenario_overrides}};
}

RunConfig RunConfig::from_json(const json& j) {
  static const std::vector<std::string> keys{"scenarios", "seed",   "out",  "sampler",
                                             "env",       "kpi",    "demos", "reward",
                                             "ppo",       "evaluate", "scenario_overrides"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  RunConfig cfg;
  try {
    read_key(j, "scenarios", cfg.scenarios);
    read_key(j, "seed", cfg.seed);
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    if (j.contains("sampler")) cfg.sampler = sampler_from_name(j.at("sampler").get<std::string>());
    if (j.contains("env")) clb::from_json(j.at("env"), cfg.env);
    if (j.contains("kpi")) cfg.kpi = j.at("kpi").get<KpiConfig>();
    if (j.contains("demos")) {
      read_key(j.at("demos"), "count", cfg.demo_count);
      read_key(j.at("demos"), "train_fraction", cfg.train_fraction);
    }
    if (j.contains("reward")) cfg.reward = j.at("reward").get<RewardTrainConfig>();
    if (j.contains("ppo")) cfg.ppo = j.at("ppo").get<PpoConfig>();
    if (j.contains("evaluate")) {
      const json& e = j.at("evaluate");
      read_key(e, "seeds", cfg.eval.seeds);
      read_key(e, "controllers", cfg.eval.controllers);
      read_key(e, "adaptive_gain", cfg.eval.adaptive_gain);
    }
    if (j.contains("scenario_overrides")) {
      cfg.scenario_overrides = j.at("scenario_overrides");
      if (!cfg.scenario_overrides.is_object()) throw ConfigError("scenario_overrides must be an object");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string RunConfig::hash() const { return config_hash(config_json_without_out(*this)); }

fs::path scenario_dir(const RunConfig& cfg, int scenario) {
  return cfg.out / ("scenario" + std::to_string(scenario));
}
fs::path demos_dir(const RunConfig& cfg, int scenario) { return scenario_dir(cfg, scenario) / "demos"; }
fs::path reward_dir(const RunConfig& cfg, int scenario, SamplerKind sampler) {
  return scenario_dir(cfg, scenario) / "reward" / (sampler_name(sampler) + "_" + seed_tag(cfg));
}
fs::path policy_dir(const RunConfig& cfg, int scenario, SamplerKind sampler) {
  return scenario_dir(cfg, scenario) / "policy" / (sampler_name(sampler) + "_" + seed_tag(cfg));
}
fs::path evaluate_dir(const RunConfig& cfg, int scenario) {
  return scenario_dir(cfg, scenario) / "evaluate" / seed_tag(cfg);
}
fs::path report_dir(const RunConfig& cfg) { return cfg.out / "report"; }

LoadBalancingEnv make_env(const RunConfig& cfg, int scenario) {
  const std::string key = std::to_string(scenario);
  const json overrides = cfg.scenario_overrides.contains(key) ? cfg.scenario_overrides.at(key) : json();
  return LoadBalancingEnv(cfg.env, load_scenario(scenario, overrides));
}

std::vector<Trajectory> load_demos(const RunConfig& cfg, int scenario) {
  const fs::path dir = demos_dir(cfg, scenario);
  const fs::path manifest_path = dir / "manifest.json";
  require(manifest_path);
  const json manifest = read_json_file(manifest_path);
  std::vector<Trajectory> demos;
  for (const auto& name : manifest.at("trajectories")) {
    const fs::path path = dir / name.get<std::string>();
    require(path);
    demos.push_back(load_trajectory(path));
  }
  return demos;
}

void cmd_collect_demos(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  for (int scenario : cfg.scenarios) {
    LoadBalancingEnv env = make_env(cfg, scenario);
    RandomController controller(cfg.seed);
    Rng env_seeds = make_rng(cfg.seed, 0x64656d6f);
    StageWriter w(demos_dir(cfg, scenario));
    std::vector<Trajectory> demos;
    std::vector<std::string> names;
    for (int i = 0; i < cfg.demo_count; ++i) {
      demos.push_back(rollout(controller, env, env_seeds(), cfg.env.horizon));
      names.push_back(traj_name(i));
      w.text(names.back(), trajectory_to_json(demos.back()).dump() + "\n");
      log << "scenario " << scenario << ": demo " << i + 1 << "/" << cfg.demo_count << "\n";
    }
    const DemoSet ds = make_demo_set(demos, cfg.kpi, cfg.train_fraction);
    json ranking = json::array();
    json train = json::array();
    json extrap = json::array();
    for (std::size_t r = 0; r < ds.ranked.size(); ++r) {
      const std::string& name = names[ds.source_index[r]];
      const bool is_train = r < ds.train_count;
      ranking.push_back(json{{"file", name}, {"rank", r}, {"return", ds.returns[r]},
                             {"partition", is_train ? "train" : "extrapolation"}});
      (is_train ? train : extrap).push_back(name);
    }
    w.manifest("collect-demos", cfg, scenario,
               json{{"trajectories", names},
                    {"ranking", ranking},
                    {"train", train},
                    {"extrapolation", extrap},
                    {"has_ties", ds.has_ties}});
    log << "scenario " << scenario << ": " << train.size() << " train / " << extrap.size()
        << " extrapolation demos\n";
  }
}

void cmd_train_reward(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  for (int scenario : cfg.scenarios) {
    const DemoSet ds = make_demo_set(load_demos(cfg, scenario), cfg.kpi, cfg.train_fraction);
    if (ds.train_count < 2) {
      throw ConfigError("train-reward needs at least 2 training demonstrations, got " +
                        std::to_string(ds.train_count));
    }
    RewardTrainConfig rc = cfg.reward;
    rc.sampler = cfg.sampler;
    log << "scenario " << scenario << ": training " << sampler_name(rc.sampler) << " reward ("
        << rc.pairs << " pairs, " << rc.epochs << " epochs)\n";
    const RewardTrainResult result = train_reward(ds, rc, cfg.seed);
    const ExtrapolationReport rep = extrapolation_report(result.model, ds);
    const RankedView view{ds.train(), ds.train_returns()};
    const auto pairs = sample_pairs(rc.sampler, view, rc.pairs, rc.sub_length, pair_sampling_seed(cfg.seed));
    const double mislabel = mislabel_rate(pairs, cfg.kpi);

    StageWriter w(reward_dir(cfg, scenario, rc.sampler));
    w.json_file("model.json", result.model.to_json());
    w.csv("training_log.csv", [&](std::ostream& os) { write_training_log_csv(os, result.log); });
    w.csv("scatter.csv", [&](std::ostream& os) { write_scatter_csv(os, rep.scatter); });
    const json summary{{"sampler", sampler_name(rc.sampler)},
                       {"seed", cfg.seed},
                       {"pearson_train", optional_number(rep.pearson_train)},
                       {"pearson_extrap", optional_number(rep.pearson_extrap)},
                       {"mislabel_rate", mislabel},
                       {"final_loss", result.log.empty() ? json(nullptr) : json(result.log.back().mean_loss)}};
    w.json_file("summary.json", summary);
    w.manifest("train-reward", cfg, scenario, json{{"sampler", sampler_name(rc.sampler)}});
    if (!rep.pearson_train || !rep.pearson_extrap) {
      log << "warning: constant predictions, Pearson correlation undefined\n";
    }
    log << "scenario " << scenario << ": pearson train " << summary["pearson_train"].dump()
        << ", extrapolation " << summary["pearson_extrap"].dump() << ", mislabel rate " << mislabel
        << "\n";
  }
}

void cmd_train_policy(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  for (int scenario : cfg.scenarios) {
    const fs::path model_path = reward_dir(cfg, scenario, cfg.sampler) / "model.json";
    require(model_path);
    const RewardModel reward = RewardModel::from_json(read_json_file(model_path));
    LoadBalancingEnv env = make_env(cfg, scenario);
    log << "scenario " << scenario << ": PPO on the " << sampler_name(cfg.sampler) << " reward, "
        << cfg.ppo.total_timesteps << " steps\n";
    const PolicyTrainResult result = train_policy(env, reward, cfg.ppo, cfg.seed);
    StageWriter w(policy_dir(cfg, scenario, cfg.sampler));
    w.json_file("policy.json", result.policy.to_json());
    w.csv("learning_curve.csv", [&](std::ostream& os) { write_learning_curve_csv(os, result.curve); });
    w.manifest("train-policy", cfg, scenario,
               json{{"sampler", sampler_name(cfg.sampler)}, {"reward_model", out_relative(cfg, model_path)}});
  }
}

void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (cfg.eval.controllers.empty()) log << "warning: no controllers configured, writing an empty report\n";
  for (int scenario : cfg.scenarios) {
    // Fail before simulating anything if an upstream artifact is missing.
    auto policy_path = [&](SamplerKind s) { return policy_dir(cfg, scenario, s) / "policy.json"; };
    for (const auto& m : cfg.eval.controllers) {
      if (m == "ours") require(policy_path(SamplerKind::kTcs));
      if (m == "trex-contiguous") require(policy_path(SamplerKind::kContiguous));
      if (m == "demos") require(demos_dir(cfg, scenario) / "manifest.json");
    }

    LoadBalancingEnv env = make_env(cfg, scenario);
    StageWriter w(evaluate_dir(cfg, scenario));
    json table = json::array();
    for (const auto& m : cfg.eval.controllers) {
      KpiReport report;
      std::vector<Trajectory> trajectories;
      if (m == "demos") {
        trajectories = load_demos(cfg, scenario);
        report = kpi_report_from_trajectories(trajectories, cfg.kpi, m);
      } else {
        std::unique_ptr<Controller> controller;
        if (m == "ours" || m == "trex-contiguous") {
          const auto path = policy_path(m == "ours" ? SamplerKind::kTcs : SamplerKind::kContiguous);
          controller = std::make_unique<PolicyController>(ActorCritic::from_json(read_json_file(path)), m);
        } else if (m == "fixed") {
          controller = std::make_unique<FixedRuleController>();
        } else if (m == "adaptive") {
          controller = std::make_unique<AdaptiveRuleController>(cfg.eval.adaptive_gain);
        } else {
          controller = std::make_unique<RandomController>(cfg.seed);
        }
        const Evaluation eval =
            evaluate_controller(*controller, env, cfg.eval.seeds, cfg.kpi, m, cfg.env.horizon);
        for (const auto& rec : eval.rollouts) {
          trajectories.push_back(rec.trajectory);
          w.csv(m + "_cell_stats_" + std::to_string(rec.trajectory.seed) + ".csv",
                [&](std::ostream& os) { write_cell_stats_csv(os, rec.cell_stats); });
        }
        report = eval.report;
      }
      write_kpi_outputs(w, m, report, trajectories, cfg.kpi);
      table.push_back(kpi_summary_json(report));
      log << "scenario " << scenario << ": " << m << " T_min " << report.t_min.mean << " T_std "
          << report.t_std.mean << " T_cc " << report.t_cc.mean << "\n";
    }
    w.csv("kpi_table.csv", [&](std::ostream& os) {
      os << "method,trajectories,t_min_mean,t_min_std,t_std_mean,t_std_std,t_cc_mean,t_cc_std\n";
      os.precision(17);
      for (const auto& r : table) {
        os << r["method"].get<std::string>() << ',' << r["trajectories"].get<int>() << ','
           << r["t_min"]["mean"].get<double>() << ',' << r["t_min"]["std"].get<double>() << ','
           << r["t_std"]["mean"].get<double>() << ',' << r["t_std"]["std"].get<double>() << ','
           << r["t_cc"]["mean"].get<double>() << ',' << r["t_cc"]["std"].get<double>() << '\n';
      }
    });
    w.json_file("kpi_table.json", table);
    w.manifest("evaluate", cfg, scenario, json{{"eval_seeds", cfg.eval.seeds}});
  }
}

void cmd_report(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  StageWriter w(report_dir(cfg));
  std::ostringstream summary, pearson;
  summary.precision(17);
  pearson.precision(17);
  summary << "scenario,method,t_min_mean,t_min_std,t_std_mean,t_std_std,t_cc_mean,t_cc_std,status\n";
  pearson << "scenario,sampler,seed,pearson_train,pearson_extrap,mislabel_rate,status\n";
  json missing = json::array();
  auto mark_missing = [&](const fs::path& p) {
    missing.push_back(out_relative(cfg, p));
    log << "warning: missing " << p.generic_string() << "\n";
  };

  for (int scenario : cfg.scenarios) {
    const fs::path eval_dir = evaluate_dir(cfg, scenario);
    const fs::path table_path = eval_dir / "kpi_table.json";
    json table = json::array();
    if (fs::exists(table_path)) {
      table = read_json_file(table_path);
    } else {
      mark_missing(table_path);
    }
    std::ostringstream series;
    series << "method,trajectory,hour,t_min,t_std,t_cc\n";
    for (const auto& m : cfg.eval.controllers) {
      auto it = std::find_if(table.begin(), table.end(), [&](const json& r) { return r["method"] == m; });
      summary << scenario << ',' << m << ',';
      if (it == table.end()) {
        summary << ",,,,,,missing\n";
        continue;
      }
      const json& r = *it;
      summary << r["t_min"]["mean"].get<double>() << ',' << r["t_min"]["std"].get<double>() << ','
              << r["t_std"]["mean"].get<double>() << ',' << r["t_std"]["std"].get<double>() << ','
              << r["t_cc"]["mean"].get<double>() << ',' << r["t_cc"]["std"].get<double>() << ",ok\n";
      const fs::path ts = eval_dir / (m + "_timeseries.csv");
      if (!fs::exists(ts)) {
        mark_missing(ts);
        continue;
      }
      std::istringstream in(read_text_file(ts));
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) series << line << '\n';
    }
    w.text("scenario" + std::to_string(scenario) + "_timeseries.csv", series.str());

    for (SamplerKind s : {SamplerKind::kTcs, SamplerKind::kContiguous}) {
      const fs::path dir = reward_dir(cfg, scenario, s);
      pearson << scenario << ',' << sampler_name(s) << ',' << cfg.seed << ',';
      if (!fs::exists(dir / "summary.json")) {
        mark_missing(dir / "summary.json");
        pearson << ",,,missing\n";
        continue;
      }
      const json sj = read_json_file(dir / "summary.json");
      auto cell = [](const json& v) { return v.is_null() ? std::string() : v.dump(); };
      pearson << cell(sj["pearson_train"]) << ',' << cell(sj["pearson_extrap"]) << ','
              << cell(sj["mislabel_rate"]) << ",ok\n";
      if (fs::exists(dir / "scatter.csv")) {
        w.text("scenario" + std::to_string(scenario) + "_" + sampler_name(s) + "_scatter.csv",
               read_text_file(dir / "scatter.csv"));
      } else {
        mark_missing(dir / "scatter.csv");
      }
    }
  }
  w.text("summary.csv", summary.str());
  w.text("pearson.csv", pearson.str());
  w.manifest("report", cfg, 0, json{{"missing", missing}});
  log << "report written to " << report_dir(cfg).generic_string() << "\n";
}

}  // namespace clb
