#include "clb/env_mdp.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "clb/io.hpp"

namespace clb {

int action_lower_bound(int component) {
  return component < kIulbDim ? kIulbWeightMin : kMlbOffsetMin;
}

int action_upper_bound(int component) {
  return component < kIulbDim ? kIulbWeightMax : kMlbOffsetMax;
}

int clamp_action(ActionVec& action) {
  int clamped = 0;
  for (int k = 0; k < kActionDim; ++k) {
    auto& v = action[static_cast<std::size_t>(k)];
    const int c = std::clamp(v, action_lower_bound(k), action_upper_bound(k));
    if (c != v) {
      v = c;
      ++clamped;
    }
  }
  return clamped;
}

ActionVec neutral_action() {
  ActionVec a{};
  for (int k = 0; k < kIulbDim; ++k) a[static_cast<std::size_t>(k)] = 5;
  return a;
}

SectorLbParams decode_action(const ActionVec& action, double iulb_load_trigger) {
  SectorLbParams p;
  p.iulb.load_trigger = iulb_load_trigger;
  p.iulb.weights.assign(action.begin(), action.begin() + kIulbDim);
  for (int c = 0; c < kCellsPerSector; ++c) {
    const auto base = static_cast<std::size_t>(kIulbDim + 3 * c);
    p.mlb.cells.push_back(MlbCellOffsets{.source_trigger_offset = action[base],
                                         .target_admit_offset = action[base + 1],
                                         .ho_quality_offset = action[base + 2]});
  }
  return p;
}

EnvState encode_state(std::span<const CellStats> sector_stats) {
  if (sector_stats.size() != static_cast<std::size_t>(kCellsPerSector)) {
    throw std::invalid_argument("state encoding expects one stats entry per cell of the sector");
  }
  EnvState s{};
  for (std::size_t c = 0; c < sector_stats.size(); ++c) {
    s[c] = sector_stats[c].active_ues;
    s[kCellsPerSector + c] = sector_stats[c].ip_throughput_mbps;
    s[2 * kCellsPerSector + c] = std::clamp(sector_stats[c].prb_util, 0.0, 1.0);
  }
  return s;
}

LoadBalancingEnv::LoadBalancingEnv(EnvConfig config, TrafficScenario scenario)
    : LoadBalancingEnv(std::make_shared<const Topology>(build_topology(config.topology)), config,
                       std::move(scenario)) {}

LoadBalancingEnv::LoadBalancingEnv(std::shared_ptr<const Topology> topology, EnvConfig config,
                                   TrafficScenario scenario)
    : config_(std::move(config)), scenario_(std::move(scenario)), topology_(std::move(topology)) {
  if (!topology_) throw std::invalid_argument("topology is required");
  if (topology_->cells_per_sector() != kCellsPerSector) {
    throw std::invalid_argument("the MDP is defined for four cells per sector");
  }
  if (config_.controlled_enb < 0 || config_.controlled_enb >= topology_->config.enb_count ||
      config_.controlled_sector_in_enb < 0 ||
      config_.controlled_sector_in_enb >= topology_->config.sectors_per_enb) {
    throw std::invalid_argument("controlled sector does not exist");
  }
  if (!(config_.tick_seconds > 0.0) || config_.ticks_per_hour <= 0 || config_.horizon <= 0) {
    throw std::invalid_argument("invalid time discretisation");
  }
  controlled_sector_ =
      config_.controlled_enb * topology_->config.sectors_per_enb + config_.controlled_sector_in_enb;
}

EnvState LoadBalancingEnv::reset(std::uint64_t seed) {
  seed_ = seed;
  sim_ = init_scenario(topology_, config_.radio, scenario_, seed);
  params_ = default_lb_params(*topology_);
  for (auto& sector : params_.sectors) sector.iulb.load_trigger = config_.iulb_load_trigger;
  clamp_warnings_ = 0;
  ready_ = true;
  return run_hour();  // warm-up under default parameters
}

EnvState LoadBalancingEnv::step(const ActionVec& action) {
  if (!ready_) throw std::logic_error("step called before reset");
  ActionVec bounded = action;
  clamp_warnings_ += static_cast<std::uint64_t>(clamp_action(bounded));
  params_.sectors[static_cast<std::size_t>(controlled_sector_)] =
      decode_action(bounded, config_.iulb_load_trigger);
  return run_hour();
}

EnvState LoadBalancingEnv::run_hour() {
  reset_window(sim_);
  for (int t = 0; t < config_.ticks_per_hour; ++t) step_sim(sim_, params_, config_.tick_seconds);
  last_stats_ = cell_stats(sim_, controlled_sector_);
  return encode_state(last_stats_);
}

Trajectory rollout(Controller& controller, LoadBalancingEnv& env, std::uint64_t seed, int horizon) {
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  Trajectory traj;
  traj.scenario = env.scenario().id;
  traj.seed = seed;
  traj.controller = controller.tag();
  traj.states.reserve(static_cast<std::size_t>(horizon));
  traj.actions.reserve(static_cast<std::size_t>(horizon));
  controller.reset();
  EnvState state = env.reset(seed);
  for (int t = 0; t < horizon; ++t) {
    ActionVec action = controller.act(state);
    clamp_action(action);
    state = env.step(action);
    traj.actions.push_back(action);
    traj.states.push_back(state);
  }
  return traj;
}

nlohmann::json trajectory_to_json(const Trajectory& trajectory) {
  nlohmann::json j;
  j["scenario"] = trajectory.scenario;
  j["seed"] = trajectory.seed;
  j["controller"] = trajectory.controller;
  j["states"] = trajectory.states;
  j["actions"] = trajectory.actions;
  return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  try {
    t.scenario = j.at("scenario").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.controller = j.at("controller").get<std::string>();
    t.states = j.at("states").get<std::vector<EnvState>>();
    t.actions = j.at("actions").get<std::vector<ActionVec>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed trajectory: ") + e.what());
  }
  if (t.states.size() != t.actions.size()) {
    throw std::invalid_argument("trajectory states and actions differ in length");
  }
  return t;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  write_text_file(path, trajectory_to_json(trajectory).dump() + "\n");
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  return trajectory_from_json(read_json_file(path));
}

void write_states_csv(std::ostream& os, const Trajectory& trajectory) {
  os << "step";
  for (int c = 1; c <= kCellsPerSector; ++c) os << ",s_ue_c" << c;
  for (int c = 1; c <= kCellsPerSector; ++c) os << ",s_ip_c" << c;
  for (int c = 1; c <= kCellsPerSector; ++c) os << ",s_prb_c" << c;
  os << '\n';
  const auto old = os.precision(17);
  for (std::size_t t = 0; t < trajectory.states.size(); ++t) {
    os << t;
    for (double v : trajectory.states[t]) os << ',' << v;
    os << '\n';
  }
  os.precision(old);
}

}  // namespace clb
