#pragma once

#include <vector>

#include "phaze/archspace.hpp"
#include "phaze/workload.hpp"

namespace phaze {

struct CostModelParams {
  Bytes word_size = 2;
  std::int64_t macs_per_pe_per_tick = 1;
  std::int64_t hbm_bw = 1200;  // bytes per tick; copied into generated configs

  void validate() const;
};

// single_core is the latency on one core of the operator's type (one core pair
// for fused operators); intra_op the latency when spread over all of them.
struct OperatorEstimate {
  Tick single_core = 1;
  Tick intra_op = 1;

  bool operator==(const OperatorEstimate&) const = default;
};

// Roofline estimate: max(compute, global-buffer traffic) plus the HBM
// transfer. Intra-op mode divides only the compute term; the global buffer
// and HBM bandwidth are shared by all cores. Fused operators run their tensor
// and vector halves back to back through a core pair, so the intermediate
// tensor never reaches HBM. Results are clamped to at least one tick.
OperatorEstimate estimate(const Operator& op, const AcceleratorConfig& cfg,
                          const CostModelParams& params = CostModelParams{});

std::vector<OperatorEstimate> estimate_graph(const OperatorGraph& g, const AcceleratorConfig& cfg,
                                             const CostModelParams& params = CostModelParams{});

// Ring AllReduce: tensor_bytes / n * (n - 1) * 4 bytes over the network.
Tick allreduce_ticks(Bytes tensor_bytes, int num_devices, std::int64_t bandwidth);

Tick transfer_ticks(Bytes bytes, std::int64_t bandwidth);

}  // namespace phaze
