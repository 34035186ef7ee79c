#include "clb/lb_mech.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace clb {
namespace {

int draw_index(std::span<const double> cumulative, Rng& rng) {
  const double u = uniform01(rng);
  for (std::size_t k = 0; k < cumulative.size(); ++k) {
    if (u < cumulative[k]) return static_cast<int>(k);
  }
  // Rounding can leave the last cumulative value a hair below 1.
  for (std::size_t k = cumulative.size(); k-- > 0;) {
    if (k == 0 || cumulative[k] > cumulative[k - 1]) return static_cast<int>(k);
  }
  return 0;
}

void check_sector(const SimState& state, int sector) {
  if (sector < 0 || sector >= state.topology->sector_count()) {
    throw std::out_of_range("sector does not exist");
  }
}

}  // namespace

std::vector<double> reselection_probabilities(std::span<const int> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) return {};
  std::vector<double> probs;
  probs.reserve(weights.size());
  for (int w : weights) probs.push_back(w / total);
  return probs;
}

namespace detail {

int apply_iulb_sectors(SimState& state, std::span<const SectorLbParams> sectors, int only_sector,
                       Rng& rng) {
  const Topology& topology = *state.topology;
  const int nc = topology.cells_per_sector();
  const auto sector_count = static_cast<std::size_t>(topology.sector_count());

  // Per sector: cumulative reselection distribution and the triggered carriers.
  std::vector<std::vector<double>> cumulative(sector_count);
  std::vector<std::vector<char>> triggered(sector_count);
  bool any = false;
  for (std::size_t s = 0; s < sector_count; ++s) {
    if (only_sector >= 0 && static_cast<int>(s) != only_sector) continue;
    const IulbParams& params = sectors[only_sector >= 0 ? 0 : s].iulb;
    if (params.weights.size() != static_cast<std::size_t>(nc)) {
      throw std::invalid_argument("IULB weights must have one entry per carrier");
    }
    std::vector<char> hot(static_cast<std::size_t>(nc), 0);
    bool sector_hot = false;
    for (int c = 0; c < nc; ++c) {
      const auto cell = static_cast<std::size_t>(topology.cell_id(static_cast<int>(s), c));
      if (state.tick_stats[cell].prb_util > params.load_trigger) {
        hot[static_cast<std::size_t>(c)] = 1;
        sector_hot = true;
      }
    }
    if (!sector_hot) continue;
    auto probs = reselection_probabilities(params.weights);
    if (probs.empty()) continue;
    std::partial_sum(probs.begin(), probs.end(), probs.begin());
    cumulative[s] = std::move(probs);
    triggered[s] = std::move(hot);
    any = true;
  }
  if (!any) return 0;

  int moved = 0;
  for (Ue& ue : state.ues) {
    if (ue.mode != UeMode::kIdle) continue;
    const auto s = static_cast<std::size_t>(ue.camped_sector);
    if (triggered[s].empty() || !triggered[s][static_cast<std::size_t>(ue.camped_carrier)]) continue;
    const int carrier = draw_index(cumulative[s], rng);
    if (carrier != ue.camped_carrier) {
      ue.camped_carrier = carrier;
      ue.serving_cell = topology.cell_id(ue.camped_sector, carrier);
      ++moved;
      if (s < state.counters.reselections_by_sector.size()) ++state.counters.reselections_by_sector[s];
    }
  }
  return moved;
}

int apply_mlb_sector(SimState& state, int sector, const MlbParams& params,
                     std::span<std::vector<int>> active_by_cell) {
  const Topology& topology = *state.topology;
  const int nc = topology.cells_per_sector();
  if (params.cells.size() != static_cast<std::size_t>(nc)) {
    throw std::invalid_argument("MLB params must have one entry per carrier");
  }
  const auto cells = topology.sector_cells(sector);
  const auto ncs = static_cast<std::size_t>(nc);

  // Work buffers reused across calls; step_sim calls this once per sector per tick.
  thread_local std::vector<double> window_x;
  thread_local std::vector<char> has_window;
  thread_local std::vector<MlbCandidate> candidates;
  thread_local std::vector<int> carriers;
  thread_local std::vector<char> remaining;
  window_x.resize(ncs);
  has_window.resize(ncs);
  bool any_triggered = false;
  for (std::size_t c = 0; c < ncs; ++c) {
    const CellAccumulator& acc = state.window[static_cast<std::size_t>(cells[c].id)];
    has_window[c] = acc.active_seconds > 0.0;
    window_x[c] = has_window[c] ? acc.served_bits / acc.active_seconds / 1e6 : 0.0;
    if (has_window[c] &&
        window_x[c] < mlb_thresholds(state.mlb_base_trigger_mbps, params.cells[c]).source_trigger_mbps) {
      any_triggered = true;
    }
  }
  if (!any_triggered) return 0;

  int handovers = 0;
  for (std::size_t s = 0; s < ncs; ++s) {
    if (!has_window[s]) continue;
    const MlbThresholds th = mlb_thresholds(state.mlb_base_trigger_mbps, params.cells[s]);
    const double x_src = window_x[s];
    if (!(x_src < th.source_trigger_mbps)) continue;

    auto& src_list = active_by_cell[static_cast<std::size_t>(cells[s].id)];
    if (src_list.empty()) continue;
    const auto n_src0 = static_cast<double>(src_list.size());
    remaining.assign(src_list.size(), 1);
    int moved_here = 0;

    while (moved_here < static_cast<int>(src_list.size())) {
      // Projected source throughput once the moved UEs have left.
      const double x_proj = x_src * n_src0 / (n_src0 - moved_here);
      if (!(x_proj < th.source_trigger_mbps)) break;

      double best_score = -1e300;
      std::size_t best_u = 0;
      int best_target = -1;
      for (std::size_t u = 0; u < src_list.size(); ++u) {
        if (!remaining[u]) continue;
        const Ue& ue = state.ues[static_cast<std::size_t>(src_list[u])];
        const double src_signal = ue.sector_signal_db + cells[s].signal_offset_db;
        candidates.clear();
        carriers.clear();
        for (std::size_t c = 0; c < ncs; ++c) {
          if (c == s) continue;
          const double signal = ue.sector_signal_db + cells[c].signal_offset_db;
          const auto n_target =
              static_cast<double>(active_by_cell[static_cast<std::size_t>(cells[c].id)].size());
          const double x_target =
              n_target == 0.0 || !has_window[c]
                  ? cells[c].capacity_mbps * spectral_efficiency(state.radio, signal)
                  : window_x[c] * n_target / (n_target + 1.0);
          candidates.push_back(MlbCandidate{.cell = cells[c].id,
                                            .target_signal_db = signal,
                                            .signal_delta_db = signal - src_signal,
                                            .target_throughput_mbps = x_target});
          carriers.push_back(static_cast<int>(c));
        }
        const auto pick = select_mlb_target(candidates, x_proj, th);
        if (!pick) continue;
        const double score = mlb_target_score(candidates[*pick]);
        if (score > best_score) {
          best_score = score;
          best_u = u;
          best_target = carriers[*pick];
        }
      }
      if (best_target < 0) break;

      const int ue_index = src_list[best_u];
      Ue& ue = state.ues[static_cast<std::size_t>(ue_index)];
      ue.camped_carrier = best_target;
      ue.serving_cell = cells[static_cast<std::size_t>(best_target)].id;
      refresh_efficiency(state, ue);
      active_by_cell[static_cast<std::size_t>(ue.serving_cell)].push_back(ue_index);
      remaining[best_u] = 0;
      ++moved_here;
    }

    if (moved_here > 0) {
      std::size_t keep = 0;
      for (std::size_t u = 0; u < src_list.size(); ++u) {
        if (remaining[u]) src_list[keep++] = src_list[u];
      }
      src_list.resize(keep);
      handovers += moved_here;
    }
  }
  return handovers;
}

}  // namespace detail

int apply_iulb(SimState& state, int sector, const IulbParams& params, Rng& rng) {
  check_sector(state, sector);
  const SectorLbParams wrapped{params, {}};
  return detail::apply_iulb_sectors(state, std::span<const SectorLbParams>(&wrapped, 1), sector, rng);
}

MlbThresholds mlb_thresholds(double base_trigger_mbps, const MlbCellOffsets& offsets) {
  MlbThresholds th;
  th.source_trigger_mbps =
      base_trigger_mbps * (1.0 - kMlbOffsetStep * offsets.source_trigger_offset);
  th.admit_margin_mbps = base_trigger_mbps * kMlbOffsetStep * offsets.target_admit_offset;
  th.min_quality_delta_db = kMlbQualityBaseDb + kMlbQualityStepDb * offsets.ho_quality_offset;
  return th;
}

double mlb_target_score(const MlbCandidate& candidate) {
  return kMlbSignalScoreWeight * candidate.target_signal_db + candidate.target_throughput_mbps;
}

std::optional<std::size_t> select_mlb_target(std::span<const MlbCandidate> candidates,
                                             double source_throughput_mbps,
                                             const MlbThresholds& thresholds) {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const MlbCandidate& c = candidates[k];
    if (!(c.target_throughput_mbps > source_throughput_mbps + thresholds.admit_margin_mbps)) continue;
    if (!(c.signal_delta_db > thresholds.min_quality_delta_db)) continue;
    const double score = mlb_target_score(c);
    if (!best || score > best_score) {
      best = k;
      best_score = score;
    }
  }
  return best;
}

int apply_mlb(SimState& state, int sector, const MlbParams& params) {
  check_sector(state, sector);
  std::vector<std::vector<int>> active_by_cell(state.topology->cells.size());
  for (const Ue& ue : state.ues) {
    if (ue.mode == UeMode::kActive) {
      active_by_cell[static_cast<std::size_t>(ue.serving_cell)].push_back(ue.id);
    }
  }
  return detail::apply_mlb_sector(state, sector, params, active_by_cell);
}

}  // namespace clb
