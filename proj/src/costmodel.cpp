#include "phaze/costmodel.hpp"

#include <algorithm>

namespace phaze {

void CostModelParams::validate() const {
  if (word_size <= 0 || macs_per_pe_per_tick <= 0 || hbm_bw <= 0) {
    throw ValidationError("cost model parameters must be positive");
  }
}

namespace {

using i128 = __int128;

struct Stage {
  Tick single;
  Tick intra;
};

// max(compute, glb traffic) for `work` units spread over `units_single`
// (or `units_single * cores` in intra-op mode).
Stage roofline(std::int64_t work, i128 units_single, i128 cores, Bytes glb_bytes, i128 glb_bytes_per_tick) {
  const Tick glb = ceil_div(glb_bytes, glb_bytes_per_tick);
  const Tick c1 = ceil_div(work, units_single);
  const Tick cn = ceil_div(work, units_single * cores);
  return {std::max(c1, glb), std::max(cn, glb)};
}

}  // namespace

OperatorEstimate estimate(const Operator& op, const AcceleratorConfig& cfg, const CostModelParams& params) {
  params.validate();
  if (cfg.pe_x < 1 || cfg.pe_y < 1 || cfg.pe_vc < 1 || cfg.glb_bw < 1 || cfg.hbm_bw < 1) {
    throw ValidationError("accelerator config has non-positive dimensions or bandwidth");
  }
  const bool needs_tc = op.kind != OpKind::Vector;
  const bool needs_vc = op.kind != OpKind::Tensor;
  if (needs_tc && cfg.num_tc < 1) throw ValidationError("operator '" + op.id + "' needs a tensor core");
  if (needs_vc && cfg.num_vc < 1) throw ValidationError("operator '" + op.id + "' needs a vector core");

  const i128 mpt = params.macs_per_pe_per_tick;
  const i128 tc_units = static_cast<i128>(cfg.pe_x) * cfg.pe_y * mpt;
  const i128 vc_units = static_cast<i128>(cfg.pe_vc) * mpt;
  const i128 glb_bpt = static_cast<i128>(cfg.glb_bw) * params.word_size;
  const Bytes io = checked_narrow(static_cast<i128>(op.bytes_in) + op.bytes_out);
  const Tick hbm = ceil_div(io, cfg.hbm_bw);

  Stage s{0, 0};
  switch (op.kind) {
    case OpKind::Tensor:
      s = roofline(op.flops, tc_units, cfg.num_tc, io, glb_bpt);
      break;
    case OpKind::Vector:
      s = roofline(op.elementwise_len, vc_units, cfg.num_vc, io, glb_bpt);
      break;
    case OpKind::Fused: {
      const int pairs = std::min(cfg.num_tc, cfg.num_vc);
      const Bytes inter = checked_narrow(static_cast<i128>(op.elementwise_len) * params.word_size);
      Stage t = roofline(op.flops, tc_units, pairs, checked_narrow(static_cast<i128>(op.bytes_in) + inter), glb_bpt);
      Stage v = roofline(op.elementwise_len, vc_units, pairs, checked_narrow(static_cast<i128>(inter) + op.bytes_out),
                         glb_bpt);
      s = {checked_narrow(static_cast<i128>(t.single) + v.single), checked_narrow(static_cast<i128>(t.intra) + v.intra)};
      break;
    }
  }
  OperatorEstimate e;
  e.single_core = std::max<Tick>(1, checked_narrow(static_cast<i128>(s.single) + hbm));
  e.intra_op = std::max<Tick>(1, checked_narrow(static_cast<i128>(s.intra) + hbm));
  return e;
}

std::vector<OperatorEstimate> estimate_graph(const OperatorGraph& g, const AcceleratorConfig& cfg,
                                             const CostModelParams& params) {
  std::vector<OperatorEstimate> out;
  out.reserve(g.nodes.size());
  for (const Operator& op : g.nodes) out.push_back(estimate(op, cfg, params));
  return out;
}

Tick allreduce_ticks(Bytes tensor_bytes, int num_devices, std::int64_t bandwidth) {
  if (num_devices < 1) throw ValidationError("allreduce needs at least one device");
  if (bandwidth <= 0) throw ValidationError("bandwidth must be positive");
  if (tensor_bytes < 0) throw ValidationError("negative tensor size");
  if (num_devices == 1) return 0;
  // (bytes / n) * (n - 1) * 4 / bandwidth, rounded up once at the end.
  return ceil_div(static_cast<i128>(tensor_bytes) * (num_devices - 1) * 4,
                  static_cast<i128>(num_devices) * bandwidth);
}

Tick transfer_ticks(Bytes bytes, std::int64_t bandwidth) {
  if (bandwidth <= 0) throw ValidationError("bandwidth must be positive");
  if (bytes < 0) throw ValidationError("negative transfer size");
  return ceil_div(bytes, bandwidth);
}

}  // namespace phaze
