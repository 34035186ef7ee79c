#pragma once

#include <nlohmann/json.hpp>

#include "clb/env_mdp.hpp"
#include "clb/sim_net.hpp"

namespace clb {

// JSON views of the simulator configuration. Readers start from the current
// value of the target and only overwrite keys that are present.

void to_json(nlohmann::json& j, const TopologyConfig& cfg);
void from_json(const nlohmann::json& j, TopologyConfig& cfg);

void to_json(nlohmann::json& j, const RadioConfig& cfg);
void from_json(const nlohmann::json& j, RadioConfig& cfg);

/// The diurnal profile is written as its 24 values. On input it may be given
/// as "diurnal_profile" (24 values) or as "diurnal": {peak_trough_ratio,
/// peak_hour, trough_hour}.
void to_json(nlohmann::json& j, const TrafficScenario& s);
void from_json(const nlohmann::json& j, TrafficScenario& s);

void to_json(nlohmann::json& j, const EnvConfig& cfg);
void from_json(const nlohmann::json& j, EnvConfig& cfg);

/// Built-in scenario `id` with any overrides from `overrides` applied.
TrafficScenario load_scenario(int id, const nlohmann::json& overrides);

}  // namespace clb
