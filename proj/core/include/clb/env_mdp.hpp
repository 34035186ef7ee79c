#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clb/sim_net.hpp"

namespace clb {

inline constexpr int kCellsPerSector = 4;
inline constexpr int kStateDim = 3 * kCellsPerSector;
inline constexpr int kIulbDim = kCellsPerSector;
inline constexpr int kActionDim = kCellsPerSector + 3 * kCellsPerSector;

/// [s_ue(c1..c4), s_ip(c1..c4), s_prb(c1..c4)] averaged over the last control hour.
using EnvState = std::array<double, kStateDim>;

/// [w(c1..c4), then per cell (source_trigger, target_admit, ho_quality)].
using ActionVec = std::array<int, kActionDim>;

inline std::span<const double, kCellsPerSector> state_ue(const EnvState& s) {
  return std::span<const double, kCellsPerSector>(s.data(), kCellsPerSector);
}
inline std::span<const double, kCellsPerSector> state_ip(const EnvState& s) {
  return std::span<const double, kCellsPerSector>(s.data() + kCellsPerSector, kCellsPerSector);
}
inline std::span<const double, kCellsPerSector> state_prb(const EnvState& s) {
  return std::span<const double, kCellsPerSector>(s.data() + 2 * kCellsPerSector, kCellsPerSector);
}

int action_lower_bound(int component);
int action_upper_bound(int component);

/// Clamps every component into its bounds; returns how many were out of range.
int clamp_action(ActionVec& action);

/// IULB weights 5 and MLB offsets 0.
ActionVec neutral_action();

SectorLbParams decode_action(const ActionVec& action, double iulb_load_trigger);

EnvState encode_state(std::span<const CellStats> sector_stats);

struct EnvConfig {
  TopologyConfig topology;
  RadioConfig radio;
  double tick_seconds = 10.0;
  int ticks_per_hour = 360;
  int horizon = 168;
  int controlled_enb = 0;
  int controlled_sector_in_enb = 0;
  double iulb_load_trigger = 0.3;
};

/// One controlled sector of the simulated network, stepped one hour at a time.
/// Every other sector runs the default parameters.
class LoadBalancingEnv {
 public:
  LoadBalancingEnv(EnvConfig config, TrafficScenario scenario);
  LoadBalancingEnv(std::shared_ptr<const Topology> topology, EnvConfig config,
                   TrafficScenario scenario);

  EnvState reset(std::uint64_t seed);
  EnvState step(const ActionVec& action);

  const EnvConfig& config() const { return config_; }
  const TrafficScenario& scenario() const { return scenario_; }
  const std::shared_ptr<const Topology>& topology() const { return topology_; }
  const SimState& sim() const { return sim_; }
  int controlled_sector() const { return controlled_sector_; }
  std::uint64_t clamp_warnings() const { return clamp_warnings_; }
  std::uint64_t seed() const { return seed_; }
  bool ready() const { return ready_; }
  const std::vector<CellStats>& last_sector_stats() const { return last_stats_; }

 private:
  EnvState run_hour();

  EnvConfig config_;
  TrafficScenario scenario_;
  std::shared_ptr<const Topology> topology_;
  int controlled_sector_ = 0;
  NetworkLbParams params_;
  SimState sim_;
  std::vector<CellStats> last_stats_;
  std::uint64_t clamp_warnings_ = 0;
  std::uint64_t seed_ = 0;
  bool ready_ = false;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual ActionVec act(const EnvState& state) = 0;
  virtual std::string tag() const = 0;
  // Called at the start of every rollout.
  virtual void reset() {}
};

struct Trajectory {
  int scenario = 0;
  std::uint64_t seed = 0;
  std::string controller;
  std::vector<EnvState> states;
  std::vector<ActionVec> actions;

  bool operator==(const Trajectory&) const = default;
};

/// states[t] is the hour-averaged state observed after actions[t] was applied.
Trajectory rollout(Controller& controller, LoadBalancingEnv& env, std::uint64_t seed,
                   int horizon = 168);

nlohmann::json trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& j);
void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory load_trajectory(const std::filesystem::path& path);
void write_states_csv(std::ostream& os, const Trajectory& trajectory);

}  // namespace clb
