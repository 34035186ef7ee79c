#include "clb/sim_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "clb/lb_mech.hpp"

namespace clb {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kBacklogEpsilonBits = 1e-6;

// Bearing differences stay within (-540, 540), so two conditional shifts suffice.
double wrap_degrees(double angle) {
  if (angle > 180.0) angle -= 360.0;
  if (angle > 180.0) angle -= 360.0;
  if (angle < -180.0) angle += 360.0;
  if (angle < -180.0) angle += 360.0;
  return angle;
}

double raw_efficiency(const RadioConfig& radio, double signal_db) {
  constexpr double kDbToNeper = std::numbers::ln10 / 10.0;
  return std::min(radio.max_efficiency, std::log2(1.0 + std::exp(signal_db * kDbToNeper) / radio.noise));
}

double antenna_loss_db(const RadioConfig& radio, double off_boresight_deg) {
  const double ratio = off_boresight_deg / radio.beamwidth_deg;
  return std::min(12.0 * ratio * ratio, radio.back_lobe_db);
}

double path_loss_db(const RadioConfig& radio, double distance) {
  const double d = std::max(distance, radio.min_distance);
  return 10.0 * radio.path_loss_exponent * std::log10(d / radio.reference_distance);
}

void move_ue(Ue& ue, double dt, double radius) {
  double remaining = ue.speed * dt;
  double dx = ue.direction.x;
  double dy = ue.direction.y;
  for (int bounce = 0; bounce < 4 && remaining > 0.0; ++bounce) {
    const double nx = ue.position.x + dx * remaining;
    const double ny = ue.position.y + dy * remaining;
    if (nx * nx + ny * ny <= radius * radius) {
      ue.position = {nx, ny};
      break;
    }
    // Distance along the heading to the boundary: |p + t d| = R.
    const double b = ue.position.x * dx + ue.position.y * dy;
    const double c = ue.position.x * ue.position.x + ue.position.y * ue.position.y - radius * radius;
    const double t = std::max(0.0, -b + std::sqrt(std::max(0.0, b * b - c)));
    const double step = std::min(t, remaining);
    ue.position = {ue.position.x + dx * step, ue.position.y + dy * step};
    remaining -= step;
    const double norm = std::hypot(ue.position.x, ue.position.y);
    const double mx = ue.position.x / norm;
    const double my = ue.position.y / norm;
    const double dot = dx * mx + dy * my;
    dx -= 2.0 * dot * mx;
    dy -= 2.0 * dot * my;
    const double len = std::hypot(dx, dy);
    dx /= len;
    dy /= len;
  }
  ue.direction = {dx, dy};
}

struct SectorPick {
  int sector = 0;
  double signal_db = -1e300;  // before the carrier offset
};

SectorPick strongest_sector(const RadioConfig& radio, const Topology& topology, Vec2 position) {
  // Path loss is monotone in distance and antenna loss is non-negative, so a
  // site can only win if its boresight signal beats the best one found so far.
  const int ns = topology.config.sectors_per_enb;
  const int enb_count = topology.config.enb_count;
  std::array<double, 8> dist2{};
  int nearest = 0;
  for (int e = 0; e < enb_count; ++e) {
    const Vec2 site = topology.enb_positions[static_cast<std::size_t>(e)];
    const double dx = position.x - site.x;
    const double dy = position.y - site.y;
    dist2[static_cast<std::size_t>(e)] = dx * dx + dy * dy;
    if (dist2[static_cast<std::size_t>(e)] < dist2[static_cast<std::size_t>(nearest)]) nearest = e;
  }
  SectorPick best;
  const auto scan_site = [&](int e) {
    const Vec2 site = topology.enb_positions[static_cast<std::size_t>(e)];
    const double dx = position.x - site.x;
    const double dy = position.y - site.y;
    const double base =
        radio.reference_signal_db - path_loss_db(radio, std::sqrt(dist2[static_cast<std::size_t>(e)]));
    if (base < best.signal_db) return;
    const double bearing = std::atan2(dy, dx) / kDeg;
    for (int s = 0; s < ns; ++s) {
      const int sector = e * ns + s;
      const double azimuth =
          topology.cells[static_cast<std::size_t>(topology.cell_id(sector, 0))].sector_azimuth_deg;
      const double signal = base - antenna_loss_db(radio, wrap_degrees(bearing - azimuth));
      if (signal > best.signal_db || (signal == best.signal_db && sector < best.sector)) {
        best = {sector, signal};
      }
    }
  };
  scan_site(nearest);
  // Distance beyond which even a boresight signal cannot beat the best one.
  const double reach = std::max(radio.min_distance,
                                radio.reference_distance *
                                    std::exp(std::numbers::ln10 *
                                             (radio.reference_signal_db - best.signal_db) /
                                             (10.0 * radio.path_loss_exponent)));
  for (int e = 0; e < enb_count; ++e) {
    if (e != nearest && dist2[static_cast<std::size_t>(e)] <= reach * reach) scan_site(e);
  }
  return best;
}

void camp_on_strongest(const SimState& state, Ue& ue) {
  const SectorPick pick = strongest_sector(state.radio, *state.topology, ue.position);
  ue.camped_sector = pick.sector;
  ue.serving_cell = state.topology->cell_id(pick.sector, ue.camped_carrier);
  ue.sector_signal_db = pick.signal_db;
  refresh_efficiency(state, ue);
}

}  // namespace

Topology build_topology(const TopologyConfig& config) {
  if (config.enb_count <= 0 || config.sectors_per_enb <= 0 || config.cells_per_sector <= 0) {
    throw std::invalid_argument("topology counts must be positive");
  }
  if (config.enb_count > 7) {
    throw std::invalid_argument("the hexagonal layout supports at most 7 eNBs");
  }
  if (!(config.inter_site_distance > 0.0)) {
    throw std::invalid_argument("inter_site_distance must be positive");
  }
  const auto nc = static_cast<std::size_t>(config.cells_per_sector);
  if (config.carrier_capacity_mbps.size() != nc || config.carrier_prb_count.size() != nc ||
      config.carrier_signal_offset_db.size() != nc) {
    throw std::invalid_argument("per-carrier vectors must have cells_per_sector entries");
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (!(config.carrier_capacity_mbps[c] > 0.0) || config.carrier_prb_count[c] <= 0) {
      throw std::invalid_argument("carrier capacity and PRB count must be positive");
    }
  }

  Topology topology;
  topology.config = config;
  topology.enb_positions.push_back({0.0, 0.0});
  for (int k = 1; k < config.enb_count; ++k) {
    const double angle = 60.0 * (k - 1) * kDeg;
    topology.enb_positions.push_back(
        {config.inter_site_distance * std::cos(angle), config.inter_site_distance * std::sin(angle)});
  }
  topology.coverage_radius = config.coverage_radius > 0.0 ? config.coverage_radius
                             : config.enb_count > 1       ? 1.5 * config.inter_site_distance
                                                          : 0.75 * config.inter_site_distance;

  for (int enb = 0; enb < config.enb_count; ++enb) {
    for (int s = 0; s < config.sectors_per_enb; ++s) {
      const int sector = enb * config.sectors_per_enb + s;
      const double azimuth = 360.0 * s / config.sectors_per_enb;
      for (int c = 0; c < config.cells_per_sector; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        topology.cells.push_back(Cell{.id = topology.cell_id(sector, c),
                                      .enb = enb,
                                      .sector = sector,
                                      .sector_azimuth_deg = azimuth,
                                      .carrier = c,
                                      .capacity_mbps = config.carrier_capacity_mbps[ci],
                                      .prb_count = config.carrier_prb_count[ci],
                                      .signal_offset_db = config.carrier_signal_offset_db[ci]});
      }
    }
  }
  return topology;
}

double signal_quality(const RadioConfig& radio, const Topology& topology, Vec2 position,
                      const Cell& cell) {
  const Vec2 site = topology.enb_positions[static_cast<std::size_t>(cell.enb)];
  const double dx = position.x - site.x;
  const double dy = position.y - site.y;
  const double bearing = std::atan2(dy, dx) / kDeg;
  return radio.reference_signal_db + cell.signal_offset_db -
         path_loss_db(radio, std::hypot(dx, dy)) -
         antenna_loss_db(radio, wrap_degrees(bearing - cell.sector_azimuth_deg));
}

double spectral_efficiency(const RadioConfig& radio, double signal_db) {
  // The normaliser only depends on three radio fields; remember the last one.
  thread_local double key[3] = {std::nan(""), 0.0, 0.0};
  thread_local double norm = 1.0;
  if (key[0] != radio.reference_signal_db || key[1] != radio.max_efficiency || key[2] != radio.noise) {
    key[0] = radio.reference_signal_db;
    key[1] = radio.max_efficiency;
    key[2] = radio.noise;
    norm = raw_efficiency(radio, radio.reference_signal_db);
  }
  return raw_efficiency(radio, signal_db) / norm;
}

std::array<double, 24> make_diurnal_profile(double peak_trough_ratio, int peak_hour,
                                            int trough_hour) {
  if (!(peak_trough_ratio >= 1.0)) throw std::invalid_argument("peak_trough_ratio must be >= 1");
  const int rise = ((peak_hour - trough_hour) % 24 + 24) % 24;
  if (rise == 0) throw std::invalid_argument("peak and trough hours must differ");
  const int fall = 24 - rise;
  // Raw shape in [-1, 1]; scaled so that max/min equals the requested ratio.
  const double amplitude = (peak_trough_ratio - 1.0) / (peak_trough_ratio + 1.0);
  std::array<double, 24> profile{};
  for (int h = 0; h < 24; ++h) {
    const int since_trough = ((h - trough_hour) % 24 + 24) % 24;
    double shape;
    if (since_trough <= rise) {
      shape = -std::cos(std::numbers::pi * since_trough / rise);
    } else {
      shape = std::cos(std::numbers::pi * (since_trough - rise) / fall);
    }
    profile[static_cast<std::size_t>(h)] = 1.0 + amplitude * shape;
  }
  double mean = 0.0;
  for (double v : profile) mean += v;
  mean /= 24.0;
  for (double& v : profile) v /= mean;
  return profile;
}

TrafficScenario default_scenario(int id) {
  TrafficScenario s;
  s.id = id;
  s.diurnal_profile = make_diurnal_profile();
  switch (id) {
    case 1:
      s.ue_count = 200;
      s.packet_mean_bits = 100e6;
      s.packet_sigma = 0.8;
      s.request_interval_mean_s = 30.0;
      break;
    case 2:
      s.ue_count = 240;
      s.packet_mean_bits = 60e6;
      s.packet_sigma = 1.0;
      s.request_interval_mean_s = 24.0;
      s.speed_max = 3.0;
      break;
    case 3:
      s.ue_count = 160;
      s.packet_mean_bits = 160e6;
      s.packet_sigma = 0.6;
      s.request_interval_mean_s = 36.0;
      break;
    case 4:
      s.ue_count = 220;
      s.packet_mean_bits = 80e6;
      s.packet_sigma = 0.8;
      s.request_interval_mean_s = 27.0;
      s.speed_min = 2.0;
      s.speed_max = 15.0;
      break;
    default:
      throw std::invalid_argument("unknown built-in scenario id");
  }
  return s;
}

bool SimState::operator==(const SimState& o) const {
  return topology == o.topology && clock == o.clock && ues == o.ues && window == o.window &&
         window_seconds == o.window_seconds && tick_stats == o.tick_stats &&
         mlb_base_trigger_mbps == o.mlb_base_trigger_mbps && counters == o.counters &&
         traffic_rng == o.traffic_rng && lb_rng == o.lb_rng;
}

int best_sector(const RadioConfig& radio, const Topology& topology, Vec2 position) {
  return strongest_sector(radio, topology, position).sector;
}

void refresh_efficiency(const SimState& state, Ue& ue) {
  const Cell& cell = state.topology->cells[static_cast<std::size_t>(ue.serving_cell)];
  ue.efficiency = spectral_efficiency(state.radio, ue.sector_signal_db + cell.signal_offset_db);
}

double unloaded_base_trigger(const RadioConfig& radio, const Topology& topology) {
  constexpr int kGrid = 41;
  const double r = topology.coverage_radius;
  std::vector<double> samples;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const Vec2 p{r * (2.0 * i / (kGrid - 1) - 1.0), r * (2.0 * j / (kGrid - 1) - 1.0)};
      if (p.x * p.x + p.y * p.y > r * r) continue;
      const int sector = best_sector(radio, topology, p);
      for (const Cell& cell : topology.sector_cells(sector)) {
        samples.push_back(cell.capacity_mbps *
                          spectral_efficiency(radio, signal_quality(radio, topology, p, cell)));
      }
    }
  }
  std::sort(samples.begin(), samples.end());
  return samples[static_cast<std::size_t>(0.2 * static_cast<double>(samples.size() - 1))];
}

SimState init_scenario(std::shared_ptr<const Topology> topology, const RadioConfig& radio,
                       const TrafficScenario& scenario, std::uint64_t seed) {
  if (!topology) throw std::invalid_argument("topology is required");
  if (scenario.ue_count <= 0) throw std::invalid_argument("ue_count must be positive");
  if (!(scenario.speed_min >= 0.0) || scenario.speed_max < scenario.speed_min) {
    throw std::invalid_argument("invalid UE speed range");
  }
  if (!(scenario.packet_mean_bits > 0.0) || !(scenario.request_interval_mean_s > 0.0)) {
    throw std::invalid_argument("traffic parameters must be positive");
  }

  SimState state;
  state.topology = topology;
  state.radio = radio;
  state.scenario = scenario;
  state.traffic_rng = make_rng(seed, 1);
  state.lb_rng = make_rng(seed, 2);
  state.mlb_base_trigger_mbps = unloaded_base_trigger(radio, *topology);
  state.window.assign(topology->cells.size(), CellAccumulator{});
  state.tick_stats.assign(topology->cells.size(), CellStats{});
  state.counters.reselections_by_sector.assign(static_cast<std::size_t>(topology->sector_count()), 0);
  state.counters.handovers_by_sector.assign(static_cast<std::size_t>(topology->sector_count()), 0);

  const double radius = topology->coverage_radius;
  const int nc = topology->cells_per_sector();
  Rng& rng = state.traffic_rng;
  state.ues.resize(static_cast<std::size_t>(scenario.ue_count));
  for (int i = 0; i < scenario.ue_count; ++i) {
    Ue& ue = state.ues[static_cast<std::size_t>(i)];
    ue.id = i;
    const double r = radius * std::sqrt(uniform01(rng));
    const double theta = kTwoPi * uniform01(rng);
    ue.position = {r * std::cos(theta), r * std::sin(theta)};
    const double heading = kTwoPi * uniform01(rng);
    ue.direction = {std::cos(heading), std::sin(heading)};
    ue.speed = uniform(rng, scenario.speed_min, scenario.speed_max);
    ue.camped_carrier = uniform_int(rng, 0, nc - 1);
    ue.next_request_time = exponential(rng, scenario.request_interval_mean_s);
    camp_on_strongest(state, ue);
  }
  return state;
}

NetworkLbParams default_lb_params(const Topology& topology) {
  NetworkLbParams params;
  const auto nc = static_cast<std::size_t>(topology.cells_per_sector());
  params.sectors.resize(static_cast<std::size_t>(topology.sector_count()));
  for (auto& sector : params.sectors) {
    sector.iulb.weights.assign(nc, 5);
    sector.mlb.cells.assign(nc, MlbCellOffsets{});
  }
  return params;
}

int hour_of_day(double clock_seconds) {
  return static_cast<int>(std::floor(clock_seconds / 3600.0)) % 24;
}

const std::vector<CellStats>& step_sim(SimState& state, const NetworkLbParams& params, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const Topology& topology = *state.topology;
  if (params.sectors.size() != static_cast<std::size_t>(topology.sector_count())) {
    throw std::invalid_argument("lb params must cover every sector");
  }
  const std::size_t cell_count = topology.cells.size();
  const double multiplier =
      state.scenario.diurnal_profile[static_cast<std::size_t>(hour_of_day(state.clock))];
  const double minute_before = std::floor(state.clock / 60.0);
  const double hour_before = std::floor(state.clock / 3600.0);
  state.clock += dt;
  const bool new_minute = std::floor(state.clock / 60.0) != minute_before;
  const bool new_hour = std::floor(state.clock / 3600.0) != hour_before;

  // Mobility and request arrivals. UEs follow their strongest sector, keeping
  // their carrier: active UEs every simulated minute, idle UEs every hour.
  for (Ue& ue : state.ues) {
    move_ue(ue, dt, topology.coverage_radius);
    if (new_hour || (new_minute && ue.mode == UeMode::kActive)) {
      camp_on_strongest(state, ue);
    }
    while (state.clock >= ue.next_request_time) {
      const double bits =
          multiplier * lognormal_with_mean(state.traffic_rng, state.scenario.packet_mean_bits,
                                           state.scenario.packet_sigma);
      ue.next_request_time +=
          exponential(state.traffic_rng, state.scenario.request_interval_mean_s);
      ++state.counters.requests;
      state.counters.offered_bits += bits;
      if (ue.mode == UeMode::kIdle) {
        ue.mode = UeMode::kActive;
        camp_on_strongest(state, ue);
      }
      ue.backlog_bits += bits;
    }
  }

  // Equal resource split among the active UEs of each cell.
  SimState::Scratch& scratch = state.scratch;
  scratch.active_count.assign(cell_count, 0);
  scratch.served.assign(cell_count, 0.0);
  scratch.active_seconds.assign(cell_count, 0.0);
  scratch.prb_seconds.assign(cell_count, 0.0);
  auto& active_count = scratch.active_count;
  auto& served = scratch.served;
  auto& active_seconds = scratch.active_seconds;
  auto& prb_seconds = scratch.prb_seconds;
  for (const Ue& ue : state.ues) {
    if (ue.mode == UeMode::kActive) ++active_count[static_cast<std::size_t>(ue.serving_cell)];
  }
  for (Ue& ue : state.ues) {
    if (ue.mode != UeMode::kActive) continue;
    const auto ci = static_cast<std::size_t>(ue.serving_cell);
    const Cell& cell = topology.cells[ci];
    const double share = 1.0 / active_count[ci];
    const double rate_bps = cell.capacity_mbps * 1e6 * share * ue.efficiency;
    const double bits = std::min(ue.backlog_bits, rate_bps * dt);
    const double busy = rate_bps > 0.0 ? bits / rate_bps : 0.0;
    served[ci] += bits;
    active_seconds[ci] += busy;
    prb_seconds[ci] += share * busy;
    ue.backlog_bits -= bits;
    if (ue.backlog_bits <= kBacklogEpsilonBits) {
      ue.backlog_bits = 0.0;
      ue.mode = UeMode::kIdle;
    }
  }

  for (std::size_t c = 0; c < cell_count; ++c) {
    CellStats& tick = state.tick_stats[c];
    tick.ip_throughput_mbps = active_seconds[c] > 0.0 ? served[c] / active_seconds[c] / 1e6 : 0.0;
    tick.prb_util = std::clamp(prb_seconds[c] / dt, 0.0, 1.0);
    state.counters.served_bits += served[c];
  }

  state.counters.reselections += static_cast<std::uint64_t>(
      detail::apply_iulb_sectors(state, params.sectors, -1, state.lb_rng));
  // MLB reads the window including this tick's service.
  for (std::size_t c = 0; c < cell_count; ++c) {
    CellAccumulator& acc = state.window[c];
    acc.served_bits += served[c];
    acc.active_seconds += active_seconds[c];
    acc.prb_seconds += prb_seconds[c];
  }
  state.window_seconds += dt;
  auto& active_by_cell = scratch.active_by_cell;
  active_by_cell.resize(cell_count);
  for (auto& list : active_by_cell) list.clear();
  for (const Ue& ue : state.ues) {
    if (ue.mode == UeMode::kActive) {
      active_by_cell[static_cast<std::size_t>(ue.serving_cell)].push_back(ue.id);
    }
  }
  for (int sector = 0; sector < topology.sector_count(); ++sector) {
    const SectorLbParams& sp = params.sectors[static_cast<std::size_t>(sector)];
    const int handovers = detail::apply_mlb_sector(state, sector, sp.mlb, active_by_cell);
    state.counters.handovers += static_cast<std::uint64_t>(handovers);
    state.counters.handovers_by_sector[static_cast<std::size_t>(sector)] +=
        static_cast<std::uint64_t>(handovers);
  }

  // Occupancy after all moves.
  scratch.idle_count.assign(cell_count, 0);
  auto& idles = scratch.idle_count;
  std::size_t total = 0;
  for (const Ue& ue : state.ues) {
    if (ue.mode == UeMode::kIdle) ++idles[static_cast<std::size_t>(ue.serving_cell)];
  }
  for (std::size_t c = 0; c < cell_count; ++c) {
    const auto actives = static_cast<int>(active_by_cell[c].size());
    state.tick_stats[c].active_ues = actives;
    state.tick_stats[c].idle_ues = idles[c];
    state.window[c].active_count_seconds += actives * dt;
    state.window[c].idle_count_seconds += idles[c] * dt;
    total += static_cast<std::size_t>(actives + idles[c]);
  }
  if (total != state.ues.size()) throw std::logic_error("UE conservation violated");
  return state.tick_stats;
}

CellStats window_cell_stats(const SimState& state, CellId cell) {
  const CellAccumulator& acc = state.window.at(static_cast<std::size_t>(cell));
  CellStats stats;
  if (state.window_seconds <= 0.0) return stats;
  stats.ip_throughput_mbps = acc.active_seconds > 0.0 ? acc.served_bits / acc.active_seconds / 1e6 : 0.0;
  stats.prb_util = std::clamp(acc.prb_seconds / state.window_seconds, 0.0, 1.0);
  stats.active_ues = acc.active_count_seconds / state.window_seconds;
  stats.idle_ues = acc.idle_count_seconds / state.window_seconds;
  return stats;
}

std::vector<CellStats> cell_stats(const SimState& state, int sector) {
  const Topology& topology = *state.topology;
  if (sector < 0 || sector >= topology.sector_count()) {
    throw std::out_of_range("sector does not exist");
  }
  std::vector<CellStats> out;
  for (const Cell& cell : topology.sector_cells(sector)) out.push_back(window_cell_stats(state, cell.id));
  return out;
}

void reset_window(SimState& state) {
  std::fill(state.window.begin(), state.window.end(), CellAccumulator{});
  state.window_seconds = 0.0;
}

void write_cell_stats_csv(std::ostream& os, std::span<const CellStatsRow> rows) {
  os << "hour,cell_id,x_i,prb_util,active,idle\n";
  const auto old = os.precision(17);
  for (const auto& row : rows) {
    os << row.hour << ',' << row.cell << ',' << row.stats.ip_throughput_mbps << ','
       << row.stats.prb_util << ',' << row.stats.active_ues << ',' << row.stats.idle_ues << '\n';
  }
  os.precision(old);
}

}  // namespace clb
