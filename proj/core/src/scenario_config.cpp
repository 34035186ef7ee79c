#include "clb/scenario_config.hpp"

#include <stdexcept>

namespace clb {
namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const TopologyConfig& cfg) {
  j = nlohmann::json{{"enb_count", cfg.enb_count},
                     {"sectors_per_enb", cfg.sectors_per_enb},
                     {"cells_per_sector", cfg.cells_per_sector},
                     {"inter_site_distance", cfg.inter_site_distance},
                     {"carrier_capacity_mbps", cfg.carrier_capacity_mbps},
                     {"carrier_prb_count", cfg.carrier_prb_count},
                     {"carrier_signal_offset_db", cfg.carrier_signal_offset_db},
                     {"coverage_radius", cfg.coverage_radius}};
}

void from_json(const nlohmann::json& j, TopologyConfig& cfg) {
  read(j, "enb_count", cfg.enb_count);
  read(j, "sectors_per_enb", cfg.sectors_per_enb);
  read(j, "cells_per_sector", cfg.cells_per_sector);
  read(j, "inter_site_distance", cfg.inter_site_distance);
  read(j, "carrier_capacity_mbps", cfg.carrier_capacity_mbps);
  read(j, "carrier_prb_count", cfg.carrier_prb_count);
  read(j, "carrier_signal_offset_db", cfg.carrier_signal_offset_db);
  read(j, "coverage_radius", cfg.coverage_radius);
}

void to_json(nlohmann::json& j, const RadioConfig& cfg) {
  j = nlohmann::json{{"reference_signal_db", cfg.reference_signal_db},
                     {"reference_distance", cfg.reference_distance},
                     {"min_distance", cfg.min_distance},
                     {"path_loss_exponent", cfg.path_loss_exponent},
                     {"back_lobe_db", cfg.back_lobe_db},
                     {"beamwidth_deg", cfg.beamwidth_deg},
                     {"max_efficiency", cfg.max_efficiency},
                     {"noise", cfg.noise}};
}

void from_json(const nlohmann::json& j, RadioConfig& cfg) {
  read(j, "reference_signal_db", cfg.reference_signal_db);
  read(j, "reference_distance", cfg.reference_distance);
  read(j, "min_distance", cfg.min_distance);
  read(j, "path_loss_exponent", cfg.path_loss_exponent);
  read(j, "back_lobe_db", cfg.back_lobe_db);
  read(j, "beamwidth_deg", cfg.beamwidth_deg);
  read(j, "max_efficiency", cfg.max_efficiency);
  read(j, "noise", cfg.noise);
}

void to_json(nlohmann::json& j, const TrafficScenario& s) {
  j = nlohmann::json{{"id", s.id},
                     {"ue_count", s.ue_count},
                     {"packet_mean_bits", s.packet_mean_bits},
                     {"packet_sigma", s.packet_sigma},
                     {"request_interval_mean_s", s.request_interval_mean_s},
                     {"speed_min", s.speed_min},
                     {"speed_max", s.speed_max},
                     {"diurnal_profile", s.diurnal_profile}};
}

void from_json(const nlohmann::json& j, TrafficScenario& s) {
  read(j, "id", s.id);
  read(j, "ue_count", s.ue_count);
  read(j, "packet_mean_bits", s.packet_mean_bits);
  read(j, "packet_sigma", s.packet_sigma);
  read(j, "request_interval_mean_s", s.request_interval_mean_s);
  read(j, "speed_min", s.speed_min);
  read(j, "speed_max", s.speed_max);
  if (j.contains("diurnal_profile")) {
    const auto values = j.at("diurnal_profile").get<std::vector<double>>();
    if (values.size() != s.diurnal_profile.size()) {
      throw std::invalid_argument("diurnal_profile needs 24 values");
    }
    for (std::size_t h = 0; h < values.size(); ++h) {
      if (!(values[h] >= 0.0)) throw std::invalid_argument("diurnal multipliers must be >= 0");
      s.diurnal_profile[h] = values[h];
    }
  } else if (j.contains("diurnal")) {
    const auto& d = j.at("diurnal");
    s.diurnal_profile = make_diurnal_profile(d.value("peak_trough_ratio", 4.0), d.value("peak_hour", 20),
                                             d.value("trough_hour", 4));
  }
}

void to_json(nlohmann::json& j, const EnvConfig& cfg) {
  j = nlohmann::json{{"topology", cfg.topology},
                     {"radio", cfg.radio},
                     {"tick_seconds", cfg.tick_seconds},
                     {"ticks_per_hour", cfg.ticks_per_hour},
                     {"horizon", cfg.horizon},
                     {"controlled_enb", cfg.controlled_enb},
                     {"controlled_sector_in_enb", cfg.controlled_sector_in_enb},
                     {"iulb_load_trigger", cfg.iulb_load_trigger}};
}

void from_json(const nlohmann::json& j, EnvConfig& cfg) {
  if (j.contains("topology")) from_json(j.at("topology"), cfg.topology);
  if (j.contains("radio")) from_json(j.at("radio"), cfg.radio);
  read(j, "tick_seconds", cfg.tick_seconds);
  read(j, "ticks_per_hour", cfg.ticks_per_hour);
  read(j, "horizon", cfg.horizon);
  read(j, "controlled_enb", cfg.controlled_enb);
  read(j, "controlled_sector_in_enb", cfg.controlled_sector_in_enb);
  read(j, "iulb_load_trigger", cfg.iulb_load_trigger);
}

TrafficScenario load_scenario(int id, const nlohmann::json& overrides) {
  TrafficScenario s = default_scenario(id);
  if (!overrides.is_null()) from_json(overrides, s);
  s.id = id;
  return s;
}

}  // namespace clb
