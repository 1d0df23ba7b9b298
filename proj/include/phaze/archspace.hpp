#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "phaze/common.hpp"

namespace phaze {

inline constexpr Bytes kKiB = 1024;
inline constexpr Bytes kMiB = 1024 * kKiB;
inline constexpr Bytes kGiB = 1024 * kMiB;

// Upper bound on the global-buffer bandwidth, in words per tick.
inline constexpr std::int64_t kMaxGlbBandwidthWords = 4096;

struct AcceleratorConfig {
  int num_tc = 1;
  int num_vc = 1;
  int pe_x = 8;   // tensor-core MAC array width (equals pe_vc)
  int pe_y = 8;   // tensor-core MAC array depth
  int pe_vc = 8;  // vector lane width
  Bytes glb = 0;
  std::int64_t glb_bw = 1;  // words per tick
  Bytes l2_tc = kKiB;
  Bytes l2_vc = kKiB;
  Bytes hbm = 0;
  std::int64_t hbm_bw = 1;  // bytes per tick

  bool operator==(const AcceleratorConfig&) const = default;

  // {num_tc, num_vc, pe_x, pe_y, pe_vc} followed by the glb size.
  std::string compute_tuple() const;
  std::string label() const;
};

struct L2Sizes {
  Bytes l2_tc = 0;
  Bytes l2_vc = 0;
};

// Per-lane vector L2 bytes; 16 puts a 256-lane vector core at the 4 KB cap.
inline constexpr Bytes kDefaultVcLaneL2Bytes = 16;

// L2_tc = max(1 KB, 2^(log2 pe_x + log2 pe_y - 6) KB);
// L2_vc = min(4 KB, max(1 KB, pe_x * lane_bytes)).
L2Sizes derived_l2(int pe_x, int pe_y, Bytes vc_lane_bytes = kDefaultVcLaneL2Bytes);

// Global-buffer bandwidth sized to feed every tensor core, capped at 4096.
std::int64_t derived_glb_bw(int num_tc, int pe_x);

struct AreaModel {
  Rational unit_area_mac{1};
  Rational unit_area_vec_lane{1, 2};
  Rational unit_area_per_byte_sram{1, 512};
  Rational budget;

  // Unit areas as above with the budget set to the area of the reference
  // configuration (eight 128x128 tensor cores, two 128-lane vector cores,
  // 128 MB global buffer).
  static AreaModel with_reference_budget(Rational mac, Rational lane, Rational sram_byte,
                                         Bytes vc_lane_bytes = kDefaultVcLaneL2Bytes);
  static AreaModel defaults();
};

Rational area_of(const AcceleratorConfig& cfg, const AreaModel& model);

// Builds a fully-derived configuration from the searched parameters.
AcceleratorConfig make_config(int num_tc, int num_vc, int pe_x, int pe_y, Bytes glb, Bytes hbm,
                              std::int64_t hbm_bw, Bytes vc_lane_bytes = kDefaultVcLaneL2Bytes);

// The largest-area configuration the search is bounded by.
AcceleratorConfig reference_config(Bytes hbm, std::int64_t hbm_bw, Bytes vc_lane_bytes = kDefaultVcLaneL2Bytes);

struct SearchBounds {
  std::vector<int> num_tc{1, 2, 4, 8};
  std::vector<int> num_vc{2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
  std::vector<int> pe_x{8, 16, 32, 64, 128, 256};  // pe_vc follows pe_x
  std::vector<int> pe_y{2, 4, 8, 16, 32, 64, 128, 256};
  std::vector<Bytes> glb{4 * kMiB, 8 * kMiB, 16 * kMiB, 32 * kMiB, 64 * kMiB, 128 * kMiB};
  Bytes vc_lane_bytes = kDefaultVcLaneL2Bytes;
  Bytes hbm = 80 * kGiB;         // placeholder; the search sweeps HBM per workload
  std::int64_t hbm_bw = 1200;    // bytes per tick

  void validate() const;
};

struct RankedConfig {
  AcceleratorConfig config;
  Rational area;
};

// Every budget-feasible configuration, sorted by decreasing area. Ties prefer
// more tensor cores, then wider pe_x, then the larger (num_vc, pe_y, glb).
std::vector<RankedConfig> enumerate_configs(const SearchBounds& bounds, const AreaModel& model);

enum class ConvergeDecision { Continue, Converged };

const char* to_string(ConvergeDecision d);

// `level_best` holds the best average throughput of every fully explored area
// level, largest area first. Converged once more than `hysteresis` levels are
// known and the last `hysteresis` of them are strictly decreasing.
ConvergeDecision check_converge(const std::vector<double>& level_best, int hysteresis);

}  // namespace phaze
