#pragma once

#include <vector>

namespace clb {

inline constexpr int kIulbWeightMin = 0;
inline constexpr int kIulbWeightMax = 10;
inline constexpr int kMlbOffsetMin = -6;
inline constexpr int kMlbOffsetMax = 6;

/// Idle-mode load balancing knobs for one sector.
struct IulbParams {
  std::vector<int> weights;    // one per carrier, in [0, 10]
  double load_trigger = 0.3;   // prb_util above which idle UEs are redistributed
};

struct MlbCellOffsets {
  int source_trigger_offset = 0;
  int target_admit_offset = 0;
  int ho_quality_offset = 0;

  bool operator==(const MlbCellOffsets&) const = default;
};

/// Mobility load balancing knobs for one sector (one entry per carrier).
struct MlbParams {
  std::vector<MlbCellOffsets> cells;
};

struct SectorLbParams {
  IulbParams iulb;
  MlbParams mlb;
};

/// Load-balancing parameters for every sector in the network.
struct NetworkLbParams {
  std::vector<SectorLbParams> sectors;
};

}  // namespace clb
