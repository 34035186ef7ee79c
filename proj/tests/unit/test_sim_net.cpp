#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "clb/lb_mech.hpp"
#include "clb/sim_net.hpp"
#include "test_util.hpp"

namespace clb {
namespace {

TEST(Topology, DefaultLayoutCounts) {
  const Topology t = build_topology(TopologyConfig{});
  EXPECT_EQ(t.cells.size(), 84u);
  EXPECT_EQ(t.sector_count(), 21);
  for (std::size_t i = 0; i < t.cells.size(); ++i) EXPECT_EQ(t.cells[i].id, static_cast<int>(i));
}

TEST(Topology, SingleSiteSitsAtOrigin) {
  TopologyConfig cfg;
  cfg.enb_count = 1;
  const Topology t = build_topology(cfg);
  EXPECT_EQ(t.cells.size(), 12u);
  ASSERT_EQ(t.enb_positions.size(), 1u);
  EXPECT_EQ(t.enb_positions[0], (Vec2{0.0, 0.0}));
  for (const Cell& c : t.cells) EXPECT_EQ(c.enb, 0);
}

TEST(Topology, RingSitesAreEquidistantFromNeighbours) {
  const Topology t = build_topology(TopologyConfig{});
  const double isd = t.config.inter_site_distance;
  EXPECT_EQ(t.enb_positions[0], (Vec2{0.0, 0.0}));
  auto dist = [&](int a, int b) {
    return std::hypot(t.enb_positions[a].x - t.enb_positions[b].x,
                      t.enb_positions[a].y - t.enb_positions[b].y);
  };
  // In a regular hexagon the side equals the circumradius.
  for (int k = 1; k <= 6; ++k) {
    const int next = k % 6 + 1;
    const int prev = (k + 4) % 6 + 1;
    EXPECT_NEAR(dist(0, k), isd, 1e-9);
    EXPECT_NEAR(dist(k, next), isd, 1e-9);
    EXPECT_NEAR(dist(k, prev), isd, 1e-9);
    EXPECT_NEAR(dist(k, (k + 1) % 6 + 1), std::sqrt(3.0) * isd, 1e-9);
    EXPECT_NEAR(dist(k, (k + 2) % 6 + 1), 2.0 * isd, 1e-9);
  }
}

TEST(Topology, RejectsBadConfig) {
  TopologyConfig cfg;
  cfg.enb_count = 0;
  EXPECT_THROW(build_topology(cfg), std::invalid_argument);
  cfg = {};
  cfg.enb_count = 8;
  EXPECT_THROW(build_topology(cfg), std::invalid_argument);
  cfg = {};
  cfg.carrier_prb_count.pop_back();
  EXPECT_THROW(build_topology(cfg), std::invalid_argument);
  cfg = {};
  cfg.carrier_capacity_mbps[1] = 0.0;
  EXPECT_THROW(build_topology(cfg), std::invalid_argument);
}

TEST(Radio, ReferencePointGivesReferenceSignal) {
  const Topology t = build_topology(TopologyConfig{});
  const RadioConfig radio;
  const Cell& c = t.cells[0];  // centre site, sector azimuth 0, carrier offset 0
  ASSERT_EQ(c.signal_offset_db, 0.0);
  EXPECT_NEAR(signal_quality(radio, t, {radio.reference_distance, 0.0}, c), radio.reference_signal_db,
              1e-12);
  EXPECT_NEAR(spectral_efficiency(radio, radio.reference_signal_db), 1.0, 1e-12);
}

TEST(Radio, DoublingDistanceDropsByPathLossSlope) {
  const Topology t = build_topology(TopologyConfig{});
  const RadioConfig radio;
  const double d0 = radio.reference_distance;
  const double s1 = signal_quality(radio, t, {d0, 0.0}, t.cells[0]);
  const double s2 = signal_quality(radio, t, {2.0 * d0, 0.0}, t.cells[0]);
  const double expected = 10.0 * radio.path_loss_exponent * std::log10(2.0);
  EXPECT_NEAR(s1 - s2, expected, 1e-12);
  EXPECT_NEAR(expected, 10.54, 0.01);
}

TEST(Radio, BackLobeAttenuation) {
  const Topology t = build_topology(TopologyConfig{});
  const RadioConfig radio;
  const double d0 = radio.reference_distance;
  const double front = signal_quality(radio, t, {d0, 0.0}, t.cells[0]);
  const double back = signal_quality(radio, t, {-d0, 0.0}, t.cells[0]);
  EXPECT_NEAR(front - back, radio.back_lobe_db, 1e-12);
}

TEST(Radio, EfficiencyIsMonotoneAndCapped) {
  const RadioConfig radio;
  double prev = 0.0;
  for (double s = -20.0; s <= 120.0; s += 1.0) {
    const double e = spectral_efficiency(radio, s);
    EXPECT_GE(e, prev);
    prev = e;
  }
  const double at_reference = std::min(
      radio.max_efficiency, std::log2(1.0 + std::pow(10.0, radio.reference_signal_db / 10.0) / radio.noise));
  EXPECT_NEAR(prev, radio.max_efficiency / at_reference, 1e-12);
}

TEST(Diurnal, ProfileHasUnitMeanAndRequestedRatio) {
  const auto p = make_diurnal_profile(4.0, 20, 4);
  double mean = 0.0, lo = 1e9, hi = 0.0;
  for (double v : p) {
    mean += v / 24.0;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_NEAR(mean, 1.0, 1e-12);
  EXPECT_NEAR(hi / lo, 4.0, 1e-12);
  EXPECT_EQ(hi, p[20]);
  EXPECT_EQ(lo, p[4]);
  EXPECT_THROW(make_diurnal_profile(0.5), std::invalid_argument);
  EXPECT_THROW(make_diurnal_profile(2.0, 5, 5), std::invalid_argument);
}

TEST(Scenario, BuiltInsAndUnknownId) {
  for (int id = 1; id <= 4; ++id) EXPECT_GT(default_scenario(id).ue_count, 0);
  EXPECT_THROW(default_scenario(0), std::invalid_argument);
  EXPECT_THROW(default_scenario(5), std::invalid_argument);
}

TEST(InitScenario, DeterministicPerSeed) {
  const auto topo = test::hex7();
  const SimState a = init_scenario(topo, RadioConfig{}, default_scenario(1), 42);
  const SimState b = init_scenario(topo, RadioConfig{}, default_scenario(1), 42);
  EXPECT_TRUE(a == b);
  const SimState c = init_scenario(topo, RadioConfig{}, default_scenario(1), 1);
  const SimState d = init_scenario(topo, RadioConfig{}, default_scenario(1), 2);
  EXPECT_NE(c.ues[0].position, d.ues[0].position);
}

TEST(InitScenario, RejectsEmptyPopulation) {
  TrafficScenario s = default_scenario(1);
  s.ue_count = 0;
  EXPECT_THROW(init_scenario(test::hex7(), RadioConfig{}, s, 1), std::invalid_argument);
  s = default_scenario(1);
  s.speed_max = -1.0;
  EXPECT_THROW(init_scenario(test::hex7(), RadioConfig{}, s, 1), std::invalid_argument);
  EXPECT_THROW(init_scenario(nullptr, RadioConfig{}, default_scenario(1), 1), std::invalid_argument);
}

TEST(InitScenario, UesStartInsideCoverageOnTheirBestSector) {
  const auto topo = test::hex7();
  const RadioConfig radio;
  const SimState s = init_scenario(topo, radio, default_scenario(1), 3);
  for (const Ue& ue : s.ues) {
    EXPECT_LE(std::hypot(ue.position.x, ue.position.y), topo->coverage_radius + 1e-9);
    EXPECT_EQ(ue.camped_sector, best_sector(radio, *topo, ue.position));
    EXPECT_EQ(ue.serving_cell, topo->cell_id(ue.camped_sector, ue.camped_carrier));
    EXPECT_EQ(ue.mode, UeMode::kIdle);
  }
}

// One UE parked on boresight at the reference distance: unit efficiency.
SimState lone_ue_state(int n_ues) {
  TrafficScenario sc = default_scenario(1);
  sc.ue_count = n_ues;
  sc.speed_min = sc.speed_max = 0.0;
  SimState s = init_scenario(test::single_site(), RadioConfig{}, sc, 5);
  for (Ue& ue : s.ues) {
    ue.position = {s.radio.reference_distance, 0.0};
    ue.camped_sector = 0;
    ue.camped_carrier = 0;
    ue.serving_cell = 0;
    ue.sector_signal_db = s.radio.reference_signal_db;
    refresh_efficiency(s, ue);
    ue.mode = UeMode::kActive;
    ue.backlog_bits = 1e12;
    ue.next_request_time = 1e12;
  }
  return s;
}

NetworkLbParams idle_params(const Topology& t) {
  NetworkLbParams p = default_lb_params(t);
  for (auto& sec : p.sectors) sec.iulb.load_trigger = 2.0;  // never fires
  for (auto& sec : p.sectors)
    for (auto& c : sec.mlb.cells) c.source_trigger_offset = 6;
  return p;
}

TEST(StepSim, LoneUeGetsFullCapacity) {
  SimState s = lone_ue_state(1);
  ASSERT_NEAR(s.ues[0].efficiency, 1.0, 1e-12);
  s.mlb_base_trigger_mbps = 0.0;  // keep MLB quiet
  const double cap = s.topology->cells[0].capacity_mbps;
  const auto& stats = step_sim(s, idle_params(*s.topology), 10.0);
  EXPECT_NEAR(stats[0].ip_throughput_mbps, cap, 1e-9);
  EXPECT_NEAR(stats[0].prb_util, 1.0, 1e-12);
  EXPECT_NEAR(1e12 - s.ues[0].backlog_bits, cap * 1e6 * 10.0, 1e-3);
}

TEST(StepSim, TwoColocatedUesSplitEvenly) {
  SimState s = lone_ue_state(2);
  s.mlb_base_trigger_mbps = 0.0;
  const double cap = s.topology->cells[0].capacity_mbps;
  const auto& stats = step_sim(s, idle_params(*s.topology), 10.0);
  EXPECT_NEAR(stats[0].ip_throughput_mbps, cap / 2.0, 1e-9);
  for (const Ue& ue : s.ues) EXPECT_NEAR(1e12 - ue.backlog_bits, cap / 2.0 * 1e6 * 10.0, 1e-3);
}

TEST(StepSim, UeCountIsConserved) {
  const auto topo = test::hex7();
  SimState s = init_scenario(topo, RadioConfig{}, default_scenario(1), 11);
  const NetworkLbParams p = default_lb_params(*topo);
  for (int t = 0; t < 200; ++t) {
    const auto& stats = step_sim(s, p, 10.0);
    double total = 0.0;
    for (const auto& c : stats) total += c.active_ues + c.idle_ues;
    ASSERT_DOUBLE_EQ(total, static_cast<double>(s.ues.size()));
  }
}

TEST(StepSim, RejectsBadArguments) {
  const auto topo = test::hex7();
  SimState s = init_scenario(topo, RadioConfig{}, default_scenario(1), 11);
  EXPECT_THROW(step_sim(s, default_lb_params(*topo), 0.0), std::invalid_argument);
  NetworkLbParams p = default_lb_params(*topo);
  p.sectors.pop_back();
  EXPECT_THROW(step_sim(s, p, 10.0), std::invalid_argument);
}

TEST(StepSim, PrbUtilisationBoundedUnderOverload) {
  const auto topo = test::hex7();
  TrafficScenario sc = default_scenario(1);
  sc.ue_count = 3000;
  sc.packet_mean_bits = 1e9;
  sc.request_interval_mean_s = 5.0;
  SimState s = init_scenario(topo, RadioConfig{}, sc, 2);
  const NetworkLbParams p = default_lb_params(*topo);
  double max_util = 0.0;
  for (int t = 0; t < 60; ++t) {
    for (const auto& c : step_sim(s, p, 10.0)) {
      ASSERT_GE(c.prb_util, 0.0);
      ASSERT_LE(c.prb_util, 1.0);
      max_util = std::max(max_util, c.prb_util);
    }
  }
  for (const Cell& c : topo->cells) EXPECT_LE(window_cell_stats(s, c.id).prb_util, 1.0);
  EXPECT_NEAR(max_util, 1.0, 1e-9);
}

TEST(StepSim, SameSeedSameTrajectory) {
  const auto topo = test::hex7();
  SimState a = init_scenario(topo, RadioConfig{}, default_scenario(2), 9);
  SimState b = init_scenario(topo, RadioConfig{}, default_scenario(2), 9);
  const NetworkLbParams p = default_lb_params(*topo);
  for (int t = 0; t < 100; ++t) {
    step_sim(a, p, 10.0);
    step_sim(b, p, 10.0);
  }
  EXPECT_TRUE(a == b);
}

TEST(WindowStats, EmptyWindowIsZero) {
  const auto topo = test::hex7();
  SimState s = init_scenario(topo, RadioConfig{}, default_scenario(1), 1);
  const CellStats c = window_cell_stats(s, 0);
  EXPECT_EQ(c.ip_throughput_mbps, 0.0);
  EXPECT_EQ(c.prb_util, 0.0);
}

TEST(WindowStats, ThroughputDefinition) {
  const auto topo = test::hex7();
  SimState s = init_scenario(topo, RadioConfig{}, default_scenario(1), 1);
  s.window[3].served_bits = 3.6e9;
  s.window[3].active_seconds = 3600.0;
  s.window[3].prb_seconds = 3600.0;
  s.window_seconds = 3600.0;
  const CellStats c = window_cell_stats(s, 3);
  EXPECT_NEAR(c.ip_throughput_mbps, 1.0, 1e-12);
  EXPECT_NEAR(c.prb_util, 1.0, 1e-12);
  // No traffic on other cells.
  EXPECT_EQ(window_cell_stats(s, 4).ip_throughput_mbps, 0.0);
  reset_window(s);
  EXPECT_EQ(window_cell_stats(s, 3).ip_throughput_mbps, 0.0);
  EXPECT_THROW(cell_stats(s, 21), std::out_of_range);
  EXPECT_EQ(cell_stats(s, 0).size(), 4u);
}

TEST(CellStatsCsv, HeaderAndRows) {
  std::vector<CellStatsRow> rows{{0, 4, {1.5, 0.25, 2.0, 3.0}}};
  std::ostringstream os;
  write_cell_stats_csv(os, rows);
  EXPECT_EQ(os.str(), "hour,cell_id,x_i,prb_util,active,idle\n0,4,1.5,0.25,2,3\n");
}

TEST(Clock, HourOfDayWraps) {
  EXPECT_EQ(hour_of_day(0.0), 0);
  EXPECT_EQ(hour_of_day(3599.9), 0);
  EXPECT_EQ(hour_of_day(3600.0), 1);
  EXPECT_EQ(hour_of_day(25 * 3600.0), 1);
}

}  // namespace
}  // namespace clb
