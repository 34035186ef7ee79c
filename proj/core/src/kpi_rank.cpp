#include "clb/kpi_rank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace clb {

void KpiConfig::validate() const {
  if (!(congestion_threshold_mbps > 0.0)) {
    throw std::invalid_argument("congestion threshold must be positive");
  }
  if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma)) {
    throw std::invalid_argument("ranking weights must be finite");
  }
}

void to_json(nlohmann::json& j, const KpiConfig& cfg) {
  j = nlohmann::json{{"congestion_threshold_mbps", cfg.congestion_threshold_mbps},
                     {"alpha", cfg.alpha},
                     {"beta", cfg.beta},
                     {"gamma", cfg.gamma}};
}

void from_json(const nlohmann::json& j, KpiConfig& cfg) {
  cfg.congestion_threshold_mbps = j.value("congestion_threshold_mbps", cfg.congestion_threshold_mbps);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.gamma = j.value("gamma", cfg.gamma);
}

double t_min(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("t_min of an empty vector");
  return *std::min_element(x.begin(), x.end());
}

double t_std(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("t_std of an empty vector");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

int t_cc(std::span<const double> x, double threshold_mbps) {
  if (!(threshold_mbps > 0.0)) throw std::invalid_argument("congestion threshold must be positive");
  return static_cast<int>(std::count_if(x.begin(), x.end(), [&](double v) { return v < threshold_mbps; }));
}

double rank_reward(const EnvState& state, const KpiConfig& cfg) {
  const auto ip = state_ip(state);
  return cfg.alpha * t_min(ip) - cfg.beta * t_std(ip) -
         cfg.gamma * t_cc(ip, cfg.congestion_threshold_mbps);
}

double trajectory_return(std::span<const EnvState> states, const KpiConfig& cfg) {
  if (states.empty()) throw std::invalid_argument("trajectory_return of an empty trajectory");
  double total = 0.0;
  for (const auto& s : states) total += rank_reward(s, cfg);
  return total;
}

double trajectory_return(const Trajectory& trajectory, const KpiConfig& cfg) {
  return trajectory_return(trajectory.states, cfg);
}

DemoRanking rank_demos(std::span<const Trajectory> trajectories, const KpiConfig& cfg) {
  if (trajectories.size() < 2) throw std::invalid_argument("ranking needs at least two trajectories");
  std::vector<double> returns;
  returns.reserve(trajectories.size());
  for (const auto& t : trajectories) returns.push_back(trajectory_return(t, cfg));

  DemoRanking ranking;
  ranking.order.resize(trajectories.size());
  std::iota(ranking.order.begin(), ranking.order.end(), std::size_t{0});
  std::stable_sort(ranking.order.begin(), ranking.order.end(),
                   [&](std::size_t a, std::size_t b) { return returns[a] < returns[b]; });
  for (std::size_t k = 0; k < ranking.order.size(); ++k) {
    ranking.returns.push_back(returns[ranking.order[k]]);
    if (k > 0 && ranking.returns[k] == ranking.returns[k - 1]) ranking.has_ties = true;
  }
  return ranking;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("pearson needs two equal-length sequences of length >= 2");
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace clb
