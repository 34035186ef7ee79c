#include "clb/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace clb {
namespace {

KpiStat spread(std::span<const double> v) {
  KpiStat s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

constexpr std::size_t source_trigger_slot(int cell) {
  return static_cast<std::size_t>(kIulbDim + 3 * cell);
}

}  // namespace

RandomController::RandomController(std::uint64_t seed) : rng_(make_rng(seed, 0x72616e64)) {}

ActionVec RandomController::act(const EnvState&) {
  ActionVec a{};
  for (int k = 0; k < kActionDim; ++k) {
    a[static_cast<std::size_t>(k)] = uniform_int(rng_, action_lower_bound(k), action_upper_bound(k));
  }
  return a;
}

FixedRuleController::FixedRuleController(const ActionVec& action) : action_(action) {
  ActionVec check = action;
  if (clamp_action(check) != 0) throw std::invalid_argument("fixed action is out of bounds");
}

ActionVec FixedRuleController::act(const EnvState&) { return action_; }

AdaptiveRuleController::AdaptiveRuleController(double gain) : gain_(gain), action_(neutral_action()) {
  if (!(gain > 0.0)) throw std::invalid_argument("adaptive gain must be positive");
}

ActionVec AdaptiveRuleController::act(const EnvState& state) {
  const auto prb = state_prb(state);
  const auto ip = state_ip(state);
  const double mean_prb = std::accumulate(prb.begin(), prb.end(), 0.0) / kCellsPerSector;
  for (int c = 0; c < kCellsPerSector; ++c) {
    const auto k = static_cast<std::size_t>(c);
    const int step = static_cast<int>(std::lround(gain_ * (mean_prb - prb[k])));
    action_[k] = std::clamp(action_[k] + step, kIulbWeightMin, kIulbWeightMax);
  }
  const auto [lo, hi] = std::minmax_element(ip.begin(), ip.end());
  if (*lo < *hi) {
    auto& loosen = action_[source_trigger_slot(static_cast<int>(lo - ip.begin()))];
    auto& tighten = action_[source_trigger_slot(static_cast<int>(hi - ip.begin()))];
    loosen = std::max(loosen - 1, kMlbOffsetMin);
    tighten = std::min(tighten + 1, kMlbOffsetMax);
  }
  return action_;
}

PolicyController::PolicyController(ActorCritic policy, std::string tag, bool greedy, std::uint64_t seed)
    : policy_(std::move(policy)),
      tag_(std::move(tag)),
      greedy_(greedy),
      seed_(seed),
      rng_(make_rng(seed, 0x706f6c)) {}

ActionVec PolicyController::act(const EnvState& state) {
  return greedy_ ? greedy_action(policy_, state) : sample_action(policy_, state, rng_);
}

std::vector<KpiHourRow> trajectory_kpis(const Trajectory& trajectory, const KpiConfig& cfg) {
  std::vector<KpiHourRow> rows;
  rows.reserve(trajectory.states.size());
  for (std::size_t t = 0; t < trajectory.states.size(); ++t) {
    const auto ip = state_ip(trajectory.states[t]);
    rows.push_back(KpiHourRow{static_cast<int>(t), t_min(ip), t_std(ip),
                              static_cast<double>(t_cc(ip, cfg.congestion_threshold_mbps))});
  }
  return rows;
}

KpiReport kpi_report_from_trajectories(std::span<const Trajectory> trajectories,
                                       const KpiConfig& cfg, const std::string& method) {
  KpiReport report;
  report.method = method;
  report.trajectories = static_cast<int>(trajectories.size());
  if (trajectories.empty()) return report;
  const std::size_t horizon = trajectories.front().states.size();
  if (horizon == 0) throw std::invalid_argument("trajectory has no states");
  report.hours.resize(horizon);
  std::vector<double> mins, stds, ccs;
  for (const Trajectory& traj : trajectories) {
    if (traj.states.size() != horizon) throw std::invalid_argument("trajectories differ in length");
    const auto rows = trajectory_kpis(traj, cfg);
    double m = 0.0, s = 0.0, c = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      report.hours[t].t_min += rows[t].t_min;
      report.hours[t].t_std += rows[t].t_std;
      report.hours[t].t_cc += rows[t].t_cc;
      m += rows[t].t_min;
      s += rows[t].t_std;
      c += rows[t].t_cc;
    }
    const double h = static_cast<double>(horizon);
    mins.push_back(m / h);
    stds.push_back(s / h);
    ccs.push_back(c / h);
  }
  const double n = static_cast<double>(trajectories.size());
  for (std::size_t t = 0; t < horizon; ++t) {
    report.hours[t].hour = static_cast<int>(t);
    report.hours[t].t_min /= n;
    report.hours[t].t_std /= n;
    report.hours[t].t_cc /= n;
  }
  report.t_min = spread(mins);
  report.t_std = spread(stds);
  report.t_cc = spread(ccs);
  return report;
}

RolloutRecord rollout_with_stats(Controller& controller, LoadBalancingEnv& env, std::uint64_t seed,
                                 int horizon) {
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  RolloutRecord rec;
  Trajectory& traj = rec.trajectory;
  traj.scenario = env.scenario().id;
  traj.seed = seed;
  traj.controller = controller.tag();
  controller.reset();
  EnvState state = env.reset(seed);
  const Topology& topology = *env.topology();
  for (int t = 0; t < horizon; ++t) {
    ActionVec action = controller.act(state);
    clamp_action(action);
    state = env.step(action);
    traj.actions.push_back(action);
    traj.states.push_back(state);
    const auto& stats = env.last_sector_stats();
    for (int c = 0; c < static_cast<int>(stats.size()); ++c) {
      rec.cell_stats.push_back(CellStatsRow{t, topology.cell_id(env.controlled_sector(), c),
                                            stats[static_cast<std::size_t>(c)]});
    }
  }
  return rec;
}

Evaluation evaluate_controller(Controller& controller, LoadBalancingEnv& env,
                               std::span<const std::uint64_t> seeds, const KpiConfig& cfg,
                               const std::string& method, int horizon) {
  Evaluation eval;
  std::vector<Trajectory> trajectories;
  for (std::uint64_t seed : seeds) {
    eval.rollouts.push_back(rollout_with_stats(controller, env, seed, horizon));
    trajectories.push_back(eval.rollouts.back().trajectory);
  }
  eval.report = kpi_report_from_trajectories(trajectories, cfg, method);
  return eval;
}

void write_kpi_report_csv(std::ostream& os, const KpiReport& report) {
  os << "hour,t_min,t_std,t_cc\n";
  const auto old = os.precision(17);
  for (const auto& r : report.hours) {
    os << r.hour << ',' << r.t_min << ',' << r.t_std << ',' << r.t_cc << '\n';
  }
  os << "mean," << report.t_min.mean << ',' << report.t_std.mean << ',' << report.t_cc.mean << '\n';
  os.precision(old);
}

void write_kpi_timeseries_csv(std::ostream& os, const std::string& method,
                              std::span<const Trajectory> trajectories, const KpiConfig& cfg) {
  os << "method,trajectory,hour,t_min,t_std,t_cc\n";
  const auto old = os.precision(17);
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    for (const auto& r : trajectory_kpis(trajectories[k], cfg)) {
      os << method << ',' << k << ',' << r.hour << ',' << r.t_min << ',' << r.t_std << ',' << r.t_cc
         << '\n';
    }
  }
  os.precision(old);
}

}  // namespace clb
