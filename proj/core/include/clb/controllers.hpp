#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "clb/env_mdp.hpp"
#include "clb/kpi_rank.hpp"
#include "clb/policy_ppo.hpp"
#include "clb/rng.hpp"

namespace clb {

/// Uniform over the bounded integer action box. The stream continues across
/// rollouts, so consecutive demonstrations see different actions.
class RandomController : public Controller {
 public:
  explicit RandomController(std::uint64_t seed);
  ActionVec act(const EnvState& state) override;
  std::string tag() const override { return "random"; }

 private:
  Rng rng_;
};

class FixedRuleController : public Controller {
 public:
  explicit FixedRuleController(const ActionVec& action = neutral_action());
  ActionVec act(const EnvState& state) override;
  std::string tag() const override { return "fixed"; }

 private:
  ActionVec action_;
};

/// Load-difference rule. Starts from the neutral action and, every hour,
/// moves each IULB weight by round(gain * (mean s_prb - s_prb_i)). The cell
/// with the lowest s_ip gets its MLB source trigger loosened by one step and
/// the cell with the highest s_ip gets it tightened.
class AdaptiveRuleController : public Controller {
 public:
  explicit AdaptiveRuleController(double gain = 10.0);
  ActionVec act(const EnvState& state) override;
  std::string tag() const override { return "adaptive"; }
  void reset() override { action_ = neutral_action(); }

  const ActionVec& current() const { return action_; }

 private:
  double gain_;
  ActionVec action_;
};

class PolicyController : public Controller {
 public:
  /// Greedy (argmax per head) unless `greedy` is false, in which case actions
  /// are sampled from a stream seeded with `seed`.
  PolicyController(ActorCritic policy, std::string tag, bool greedy = true, std::uint64_t seed = 0);
  ActionVec act(const EnvState& state) override;
  std::string tag() const override { return tag_; }
  void reset() override { rng_ = make_rng(seed_, 0x706f6c); }

 private:
  ActorCritic policy_;
  std::string tag_;
  bool greedy_;
  std::uint64_t seed_;
  Rng rng_;
};

struct KpiHourRow {
  int hour = 0;
  double t_min = 0.0;
  double t_std = 0.0;
  double t_cc = 0.0;

  bool operator==(const KpiHourRow&) const = default;
};

struct KpiStat {
  double mean = 0.0;
  double std = 0.0;  // across seeds (population)

  bool operator==(const KpiStat&) const = default;
};

/// Hour rows are means across trajectories; the summary takes each
/// trajectory's time-mean and reports mean and spread across trajectories.
struct KpiReport {
  std::string method;
  std::vector<KpiHourRow> hours;
  KpiStat t_min;
  KpiStat t_std;
  KpiStat t_cc;
  int trajectories = 0;

  bool operator==(const KpiReport&) const = default;
};

/// Per-hour KPIs of one trajectory.
std::vector<KpiHourRow> trajectory_kpis(const Trajectory& trajectory, const KpiConfig& cfg);

/// The one place KPIs are aggregated; evaluation and the stored demos both go
/// through it. All trajectories must share a length. An empty input gives an
/// empty report.
KpiReport kpi_report_from_trajectories(std::span<const Trajectory> trajectories,
                                       const KpiConfig& cfg, const std::string& method);

struct RolloutRecord {
  Trajectory trajectory;
  std::vector<CellStatsRow> cell_stats;  // controlled sector, one block per hour
};

/// Same sequence as rollout(), also keeping the hourly cell stats.
RolloutRecord rollout_with_stats(Controller& controller, LoadBalancingEnv& env, std::uint64_t seed,
                                 int horizon = 168);

struct Evaluation {
  KpiReport report;
  std::vector<RolloutRecord> rollouts;
};

Evaluation evaluate_controller(Controller& controller, LoadBalancingEnv& env,
                               std::span<const std::uint64_t> seeds, const KpiConfig& cfg,
                               const std::string& method, int horizon = 168);

/// `hour,t_min,t_std,t_cc` followed by one `mean,...` row.
void write_kpi_report_csv(std::ostream& os, const KpiReport& report);

/// `method,trajectory,hour,t_min,t_std,t_cc`
void write_kpi_timeseries_csv(std::ostream& os, const std::string& method,
                              std::span<const Trajectory> trajectories, const KpiConfig& cfg);

}  // namespace clb
