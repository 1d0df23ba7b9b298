#pragma once

#include <optional>
#include <string>
#include <vector>

#include "phaze/common.hpp"

namespace phaze {

enum class StagePosition { Last, NotLast };
enum class PipelineSchedule { PipeDreamFlush, GPipe };
enum class RecomputePolicy { Auto, On, Off };

const char* to_string(PipelineSchedule s);
const char* to_string(RecomputePolicy r);
RecomputePolicy recompute_policy_from_string(const std::string& s);

// Per-microbatch latencies and per-accelerator sizes of one layer at one
// (t, b). fw/bw include any TMP collective of the layer.
struct LayerCost {
  std::string id;
  Tick fw = 0;
  Tick bw = 0;
  Bytes weights = 0;
  Bytes optimizer = 0;
  Bytes activations = 0;
  Bytes input_edge = 0;  // activation bytes entering the layer
  bool sliceable = false;

  bool operator==(const LayerCost&) const = default;
};

struct VariantCosts {
  int t = 1;
  int b = 1;
  std::vector<LayerCost> layers;  // linear order
};

struct PlacementProblem {
  std::vector<VariantCosts> variants;
  int num_accelerators = 1;  // K
  int minibatch = 1;         // B, microbatches per minibatch
  std::int64_t bandwidth = 1;
  std::vector<Bytes> hbm_candidates;
};

struct PlacementOptions {
  PipelineSchedule schedule = PipelineSchedule::PipeDreamFlush;
  RecomputePolicy recompute = RecomputePolicy::Auto;
  // Restrict the data-parallel width or the stage count (used by sweeps).
  std::optional<int> force_d;
  std::optional<int> force_s;
};

// A stage never constrained by memory in its stage count.
inline constexpr int kUnboundedStages = 1 << 30;

struct StageLoad {
  Tick latency = 0;
  int max_s = 0;  // largest stage count that fits in HBM; 0 = never fits
};

// Layers [first, last) of `layers` as one stage. Recomputation applies to
// every stage except the last.
Tick stage_latency(const std::vector<LayerCost>& layers, int first, int last, bool recompute, StagePosition pos,
                   std::int64_t bandwidth);

// Bytes stashed per in-flight microbatch: stage input when recomputing,
// all stage activations otherwise.
Bytes stashed_data(const std::vector<LayerCost>& layers, int first, int last, bool recompute);

// sum(2 w + optimizer + activations) + in_flight * stashed_data.
Bytes stage_memory(const std::vector<LayerCost>& layers, int first, int last, std::int64_t in_flight,
                   bool recompute);

// PipeDream-Flush: a stage with s stages from itself to the end of the
// pipeline keeps s - 1 microbatches in flight.
StageLoad stage_load(const std::vector<LayerCost>& layers, int first, int last, bool recompute, StagePosition pos,
                     std::int64_t bandwidth, Bytes hbm);

int stage_accelerators(const std::vector<LayerCost>& layers, int first, int last, int t);

// dp[j][k][s]: minimal max-load of the last j layers split into exactly s
// stages using at most k accelerators; kInfTicks when infeasible.
class DpTable {
 public:
  DpTable(int layers, int k_max, int s_max);
  Tick at(int j, int k, int s) const { return data_[index(j, k, s)]; }
  Tick& at(int j, int k, int s) { return data_[index(j, k, s)]; }
  int layers() const { return n_; }
  int k_max() const { return k_max_; }
  int s_max() const { return s_max_; }

 private:
  std::size_t index(int j, int k, int s) const {
    return (static_cast<std::size_t>(j) * (k_max_ + 1) + k) * (s_max_ + 1) + s;
  }
  int n_, k_max_, s_max_;
  std::vector<Tick> data_;
};

struct StageParams {
  std::int64_t bandwidth = 1;
  Bytes hbm = 0;
  PipelineSchedule schedule = PipelineSchedule::PipeDreamFlush;
  std::int64_t gpipe_in_flight = 0;  // B / d, GPipe only
};

DpTable dp_solve(const VariantCosts& v, int k_max, bool recompute, const StageParams& params);

struct StageReport {
  int first = 0;  // layer index
  int count = 0;  // number of layers
  std::string first_id, last_id;
  int accelerators = 0;
  Tick load = 0;
  Bytes memory = 0;
  int max_s = 0;
  bool recompute = false;
};

struct PlacementSolution {
  int t = 1, d = 1, s = 1, b = 1;
  bool recompute = false;
  Bytes hbm = 0;
  PipelineSchedule schedule = PipelineSchedule::PipeDreamFlush;
  std::vector<StageReport> stages;
  Tick max_load = 0;
  std::int64_t flush_factor = 0;  // B/d + s - 1
  Tick sync_ticks = 0;            // gradient AllReduce of the first stage
  Tick F = 0;                     // ticks per minibatch
  std::int64_t samples = 0;       // B * b
  double throughput = 0.0;        // samples per tick

  std::vector<int> stage_lengths() const;
};

// True when a has strictly higher throughput than b.
bool higher_throughput(const PlacementSolution& a, const PlacementSolution& b);

// Best placement over HBM candidates, data-parallel widths dividing both K and
// B, stage counts, TMP widths, microbatch sizes and recomputation. Ties go to
// smaller HBM, d, s, t, b, recomputation off, then the lexicographically
// smallest list of stage lengths. Throws InfeasibleError when nothing fits.
PlacementSolution final_time_per_batch(const PlacementProblem& p, const PlacementOptions& options = {});

std::string explain(const PlacementSolution& s);
std::string solution_to_json(const PlacementSolution& s, int indent = 2);

}  // namespace phaze
