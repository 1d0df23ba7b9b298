#include "fixtures.hpp"

#include <fstream>
#include <sstream>

namespace phaze::testing {

OperatorGraph make_graph(const std::vector<OpKind>& kinds, const std::vector<Edge>& edges) {
  OperatorGraph g;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    Operator op;
    op.id = "op" + std::to_string(i + 1);
    op.kind = kinds[i];
    op.flops = kinds[i] == OpKind::Vector ? 0 : 1;
    op.elementwise_len = kinds[i] == OpKind::Tensor ? 0 : 1;
    g.nodes.push_back(op);
  }
  g.edges = edges;
  return g;
}

std::vector<OperatorEstimate> make_estimates(const std::vector<std::pair<Tick, Tick>>& lat) {
  std::vector<OperatorEstimate> out;
  for (auto [single, intra] : lat) out.push_back({single, intra});
  return out;
}

AcceleratorConfig cores(int num_tc, int num_vc) {
  AcceleratorConfig c;
  c.num_tc = num_tc;
  c.num_vc = num_vc;
  return c;
}

Workload make_workload(const std::vector<LayerSpec>& layers, const TrainingParams& training) {
  Workload w;
  w.name = "fixture";
  w.training = training;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& s = layers[i];
    Layer layer;
    layer.id = s.id.empty() ? "L" + std::to_string(i + 1) : s.id;
    layer.sliceable = s.sliceable;
    // Non-sliceable layers only carry t = 1 graphs.
    const std::vector<int> widths = s.sliceable ? training.tmp_widths : std::vector<int>{1};
    for (int t : widths) {
      for (int b : training.microbatch_sizes) {
        LayerVariant v;
        v.fw.nodes.push_back({"mm", OpKind::Tensor, s.flops * b / t, 0, 0, 0});
        v.fw.tmp_width = t;
        v.fw.microbatch = b;
        v.bw = derive_backward_graph(v.fw);
        v.bw_derived = true;
        v.weights_size = s.weights / t;
        v.optimizer_size = s.optimizer / t;
        v.activations_size = s.activations * b / t;
        v.input_edge_size = s.input_edge * b;
        layer.variants[{t, b}] = std::move(v);
      }
    }
    w.graph.layers.push_back(std::move(layer));
    if (i > 0) w.graph.edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(i));
  }
  return w;
}

VariantCosts random_variant(std::mt19937_64& rng, int n, int t, int b, Tick max_latency, Bytes max_size) {
  std::uniform_int_distribution<Tick> lat(1, max_latency);
  std::uniform_int_distribution<Bytes> size(0, max_size);
  std::bernoulli_distribution slice(0.8);
  VariantCosts v;
  v.t = t;
  v.b = b;
  for (int i = 0; i < n; ++i) {
    LayerCost c;
    c.id = "L" + std::to_string(i + 1);
    c.fw = lat(rng);
    c.bw = lat(rng);
    c.weights = size(rng);
    c.optimizer = size(rng);
    c.activations = size(rng);
    c.input_edge = size(rng);
    c.sliceable = slice(rng);
    v.layers.push_back(c);
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace phaze::testing
