#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "clb/env_mdp.hpp"

namespace clb {

struct KpiConfig {
  double congestion_threshold_mbps = 1.0;  // the small constant in T_cc
  double alpha = 1.0;                      // weight on T_min
  double beta = 0.5;                       // weight on T_std
  double gamma = 1.0;                      // weight on T_cc

  void validate() const;
};

void to_json(nlohmann::json& j, const KpiConfig& cfg);
void from_json(const nlohmann::json& j, KpiConfig& cfg);

double t_min(std::span<const double> x);
/// Population standard deviation.
double t_std(std::span<const double> x);
int t_cc(std::span<const double> x, double threshold_mbps);

/// R_f(s) = alpha * T_min - beta * T_std - gamma * T_cc over the state's s_ip block.
double rank_reward(const EnvState& state, const KpiConfig& cfg);

double trajectory_return(std::span<const EnvState> states, const KpiConfig& cfg);
double trajectory_return(const Trajectory& trajectory, const KpiConfig& cfg);

struct DemoRanking {
  std::vector<std::size_t> order;  // input indexes, ascending return
  std::vector<double> returns;     // returns in ranked order
  bool has_ties = false;
};

/// Stable ascending sort by return. Requires at least two trajectories.
DemoRanking rank_demos(std::span<const Trajectory> trajectories, const KpiConfig& cfg);

/// Pearson r; nullopt when either input is constant.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

}  // namespace clb
