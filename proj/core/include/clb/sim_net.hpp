#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "clb/lb_params.hpp"
#include "clb/rng.hpp"

namespace clb {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Vec2&) const = default;
};

using CellId = int;

struct TopologyConfig {
  int enb_count = 7;
  int sectors_per_enb = 3;
  int cells_per_sector = 4;
  double inter_site_distance = 500.0;
  // Per-carrier properties, one entry per carrier index.
  std::vector<double> carrier_capacity_mbps = {10.0, 20.0, 20.0, 40.0};
  std::vector<int> carrier_prb_count = {25, 50, 50, 100};
  std::vector<double> carrier_signal_offset_db = {0.0, -1.0, -2.0, -3.0};
  // Radius of the disc UEs live in; <= 0 derives it from the layout.
  double coverage_radius = 0.0;
};

struct Cell {
  CellId id = 0;
  int enb = 0;
  int sector = 0;  // global sector index: enb * sectors_per_enb + local sector
  double sector_azimuth_deg = 0.0;
  int carrier = 0;
  double capacity_mbps = 0.0;
  int prb_count = 0;
  double signal_offset_db = 0.0;
};

struct Topology {
  TopologyConfig config;
  std::vector<Vec2> enb_positions;
  std::vector<Cell> cells;
  double coverage_radius = 0.0;

  int sector_count() const { return config.enb_count * config.sectors_per_enb; }
  int cells_per_sector() const { return config.cells_per_sector; }
  CellId cell_id(int sector, int carrier) const {
    return sector * config.cells_per_sector + carrier;
  }
  std::span<const Cell> sector_cells(int sector) const {
    return std::span<const Cell>(cells).subspan(
        static_cast<std::size_t>(sector * config.cells_per_sector),
        static_cast<std::size_t>(config.cells_per_sector));
  }
};

/// Hex-7 style layout: one site at the origin, the rest on a ring of radius
/// inter_site_distance. Sectors point at 0, 120 and 240 degrees.
Topology build_topology(const TopologyConfig& config);

/// Log-distance path loss with a parabolic sector pattern.
struct RadioConfig {
  double reference_signal_db = 40.0;  // S0 at reference_distance on boresight
  double reference_distance = 35.0;
  double min_distance = 10.0;
  double path_loss_exponent = 3.5;
  double back_lobe_db = 20.0;
  double beamwidth_deg = 70.0;
  double max_efficiency = 6.0;  // bits/s/Hz cap before normalisation
  double noise = 1.0;           // linear noise floor relative to the signal unit
};

double signal_quality(const RadioConfig& radio, const Topology& topology, Vec2 position,
                      const Cell& cell);

/// Spectral efficiency normalised so a boresight UE at the reference distance gets 1.
double spectral_efficiency(const RadioConfig& radio, double signal_db);

struct TrafficScenario {
  int id = 1;
  int ue_count = 200;
  double packet_mean_bits = 100e6;
  double packet_sigma = 0.8;  // sigma of the underlying normal
  double request_interval_mean_s = 30.0;
  double speed_min = 0.5;
  double speed_max = 10.0;
  std::array<double, 24> diurnal_profile{};
};

/// 24 hourly multipliers with mean 1, max/min = peak_trough_ratio, rising
/// along a half cosine from the trough hour to the peak hour and falling back.
std::array<double, 24> make_diurnal_profile(double peak_trough_ratio = 4.0, int peak_hour = 20,
                                            int trough_hour = 4);

/// Built-in scenarios 1-4.
TrafficScenario default_scenario(int id);

enum class UeMode : std::uint8_t { kIdle, kActive };

struct Ue {
  int id = 0;
  Vec2 position;
  double speed = 0.0;
  Vec2 direction{1.0, 0.0};  // unit heading
  UeMode mode = UeMode::kIdle;
  int camped_sector = 0;
  int camped_carrier = 0;
  CellId serving_cell = 0;
  double backlog_bits = 0.0;
  double next_request_time = 0.0;
  // Link to the camped sector, refreshed whenever the UE (re)camps or hands over.
  double sector_signal_db = 0.0;  // before the carrier offset
  double efficiency = 0.0;        // toward serving_cell

  bool operator==(const Ue&) const = default;
};

struct CellStats {
  double ip_throughput_mbps = 0.0;  // x_i
  double prb_util = 0.0;
  double active_ues = 0.0;
  double idle_ues = 0.0;

  bool operator==(const CellStats&) const = default;
};

/// Per-cell sums over the current measurement window.
struct CellAccumulator {
  double served_bits = 0.0;
  double active_seconds = 0.0;  // UE-seconds spent transferring
  double prb_seconds = 0.0;
  double active_count_seconds = 0.0;
  double idle_count_seconds = 0.0;

  bool operator==(const CellAccumulator&) const = default;
};

struct SimCounters {
  std::uint64_t requests = 0;
  std::uint64_t reselections = 0;
  std::uint64_t handovers = 0;
  std::vector<std::uint64_t> reselections_by_sector;
  std::vector<std::uint64_t> handovers_by_sector;
  double offered_bits = 0.0;
  double served_bits = 0.0;

  bool operator==(const SimCounters&) const = default;
};

struct SimState {
  std::shared_ptr<const Topology> topology;
  RadioConfig radio;
  TrafficScenario scenario;
  double clock = 0.0;
  std::vector<Ue> ues;
  std::vector<CellAccumulator> window;
  double window_seconds = 0.0;
  std::vector<CellStats> tick_stats;  // instantaneous stats of the last tick
  double mlb_base_trigger_mbps = 0.0;
  SimCounters counters;
  Rng traffic_rng;
  Rng lb_rng;

  // Per-tick work buffers; not part of the observable state.
  struct Scratch {
    std::vector<int> active_count;
    std::vector<double> served;
    std::vector<double> active_seconds;
    std::vector<double> prb_seconds;
    std::vector<int> idle_count;
    std::vector<std::vector<int>> active_by_cell;
  };
  Scratch scratch;

  bool operator==(const SimState& other) const;
};

SimState init_scenario(std::shared_ptr<const Topology> topology, const RadioConfig& radio,
                       const TrafficScenario& scenario, std::uint64_t seed);

/// Default parameters for every sector: equal IULB weights, zero MLB offsets.
NetworkLbParams default_lb_params(const Topology& topology);

/// Sector index whose cells give the strongest signal at `position`.
int best_sector(const RadioConfig& radio, const Topology& topology, Vec2 position);

/// Re-derives ue.efficiency for its serving cell from the cached sector signal.
void refresh_efficiency(const SimState& state, Ue& ue);

/// 20th percentile of single-UE throughput over a fixed grid covering the disc.
double unloaded_base_trigger(const RadioConfig& radio, const Topology& topology);

/// Advances the simulation by one tick and returns the instantaneous per-cell stats.
const std::vector<CellStats>& step_sim(SimState& state, const NetworkLbParams& params, double dt);

/// Windowed stats for one cell since the last reset_window call.
CellStats window_cell_stats(const SimState& state, CellId cell);

/// Windowed stats for the N_C cells of `sector`.
std::vector<CellStats> cell_stats(const SimState& state, int sector);

/// Starts a new measurement window (control boundary).
void reset_window(SimState& state);

int hour_of_day(double clock_seconds);

struct CellStatsRow {
  int hour = 0;
  CellId cell = 0;
  CellStats stats;
};

void write_cell_stats_csv(std::ostream& os, std::span<const CellStatsRow> rows);

}  // namespace clb
