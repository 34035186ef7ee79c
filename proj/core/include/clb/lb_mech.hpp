#pragma once

#include <optional>
#include <span>
#include <vector>

#include "clb/lb_params.hpp"
#include "clb/sim_net.hpp"

namespace clb {

/// w_j / sum(w). Empty when every weight is zero.
std::vector<double> reselection_probabilities(std::span<const int> weights);

/// Idle-mode reselection for one sector. Cells whose last-tick prb_util exceeds
/// the load trigger hand each camped idle UE to a same-sector cell drawn in
/// proportion to the weights (the UE's own cell included). Returns the number
/// of UEs that changed carrier.
int apply_iulb(SimState& state, int sector, const IulbParams& params, Rng& rng);

/// Physical thresholds derived from the integer MLB offsets. One offset unit is
/// 5% of the base trigger for the throughput thresholds and 1 dB for the
/// signal-quality threshold; positive offsets are stricter.
struct MlbThresholds {
  double source_trigger_mbps = 0.0;  // source triggers when x_i < this
  double admit_margin_mbps = 0.0;    // target needs x_j > x_i + margin
  double min_quality_delta_db = 0.0; // target signal - source signal must exceed this
};

inline constexpr double kMlbOffsetStep = 0.05;
inline constexpr double kMlbQualityStepDb = 1.0;
// Signal delta allowed at offset 0; negative so neutral settings can move UEs
// onto carriers a few dB weaker than the source.
inline constexpr double kMlbQualityBaseDb = -4.0;
inline constexpr double kMlbSignalScoreWeight = 0.1;  // score per dB of target signal

MlbThresholds mlb_thresholds(double base_trigger_mbps, const MlbCellOffsets& offsets);

struct MlbCandidate {
  CellId cell = 0;
  double target_signal_db = 0.0;
  double signal_delta_db = 0.0;      // target minus source signal
  double target_throughput_mbps = 0.0;
};

/// 0.1 * target signal (dB) + target throughput (Mbps).
double mlb_target_score(const MlbCandidate& candidate);

/// Best-scoring admissible candidate, if any.
std::optional<std::size_t> select_mlb_target(std::span<const MlbCandidate> candidates,
                                             double source_throughput_mbps,
                                             const MlbThresholds& thresholds);

/// Mobility load balancing for one sector; returns the number of handovers.
int apply_mlb(SimState& state, int sector, const MlbParams& params);

namespace detail {

// Network-wide passes used by step_sim. `only_sector` < 0 processes every
// sector with sectors[s]; otherwise sectors[0] applies to that sector alone.
int apply_iulb_sectors(SimState& state, std::span<const SectorLbParams> sectors, int only_sector,
                       Rng& rng);

// active_by_cell lists the active UE indexes per cell and is kept current.
int apply_mlb_sector(SimState& state, int sector, const MlbParams& params,
                     std::span<std::vector<int>> active_by_cell);

}  // namespace detail

}  // namespace clb
