#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "phaze/common.hpp"

namespace phaze {

enum class OpKind { Tensor, Vector, Fused };

const char* to_string(OpKind kind);
OpKind op_kind_from_string(const std::string& s);

// One node of a layer's operator graph. Raw quantities only; latencies are
// derived per accelerator configuration by the cost model.
struct Operator {
  std::string id;
  OpKind kind = OpKind::Tensor;
  std::int64_t flops = 0;            // multiply-accumulate equivalents
  Bytes bytes_in = 0;                // HBM read traffic
  Bytes bytes_out = 0;               // HBM write traffic
  std::int64_t elementwise_len = 0;  // element count of the vector work

  bool operator==(const Operator&) const = default;
};

using Edge = std::pair<int, int>;  // (src, dst) node indices

// DAG of operators for one layer (or layer slice) at TMP width `tmp_width`
// and microbatch size `microbatch`.
struct OperatorGraph {
  std::vector<Operator> nodes;
  std::vector<Edge> edges;
  int tmp_width = 1;
  int microbatch = 1;

  bool operator==(const OperatorGraph&) const = default;

  std::size_t size() const { return nodes.size(); }
  int index_of(const std::string& id) const;

  // Throws ValidationError on duplicate ids, dangling edges, self loops,
  // invalid operator quantities or cycles.
  void validate() const;

  // Topological order (smallest index first among ready nodes).
  std::vector<int> topological_order() const;
};

// Reverses all edges and scales compute by `multiplier`; kinds, ids and byte
// traffic are preserved.
OperatorGraph derive_backward_graph(const OperatorGraph& fw, const Rational& multiplier = Rational(2));

struct VariantKey {
  int tmp_width = 1;
  int microbatch = 1;
  auto operator<=>(const VariantKey&) const = default;
};

// Per-(t, b) contents of a layer. Sizes are per-accelerator shares for the
// slice described by the graphs.
struct LayerVariant {
  OperatorGraph fw;
  OperatorGraph bw;
  Bytes weights_size = 0;
  Bytes optimizer_size = 0;
  Bytes activations_size = 0;
  Bytes input_edge_size = 0;  // activation bytes arriving on the layer's incoming edge
  Bytes allreduce_bytes = 0;  // per-pass TMP collective payload (0 when t = 1)
  bool bw_derived = false;    // true when bw was synthesized from fw

  bool operator==(const LayerVariant&) const = default;
};

struct Layer {
  std::string id;
  bool sliceable = false;
  Rational bw_multiplier = Rational(2);
  std::map<VariantKey, LayerVariant> variants;

  bool operator==(const Layer&) const = default;

  // Non-sliceable layers fall back to their t = 1 graphs for any TMP width.
  const LayerVariant& variant(int tmp_width, int microbatch) const;
  bool has_variant(int tmp_width, int microbatch) const;
};

struct LayerGraph {
  std::vector<Layer> layers;
  std::vector<Edge> edges;  // layer indices

  bool operator==(const LayerGraph&) const = default;
};

struct TrainingParams {
  int minibatch_microbatches = 1;  // B
  std::vector<int> microbatch_sizes{1};
  std::vector<Bytes> hbm_candidates;
  int num_accelerators = 1;  // K
  std::int64_t network_bandwidth = 1;  // bytes per tick
  std::vector<int> tmp_widths{1};

  bool operator==(const TrainingParams&) const = default;
  void validate() const;
};

struct Workload {
  std::string name;
  LayerGraph graph;  // layers stored in their linear (Hamiltonian) order
  TrainingParams training;

  bool operator==(const Workload&) const = default;
};

// Returns the unique Hamiltonian order of the layer graph. Throws
// NotLinearError when a layer has more than one successor or the topological
// order is not unique, ValidationError when the graph has a cycle.
std::vector<int> validate_linear(const LayerGraph& lg);

Workload parse_workload(const std::string& path);
Workload parse_workload_text(const std::string& text, const std::string& name_hint = "workload");
std::string serialize_workload(const Workload& w);
void write_workload(const Workload& w, const std::string& path);

}  // namespace phaze
