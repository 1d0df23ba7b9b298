#include "phaze/generator.hpp"

#include <algorithm>
#include <map>

namespace phaze {

namespace {

void check_divisible(std::int64_t v, int t, const char* what) {
  if (t < 1 || v % t != 0) {
    throw ValidationError(std::string(what) + " " + std::to_string(v) + " is not divisible by TMP width " +
                          std::to_string(t));
  }
}

}  // namespace

OperatorGraph transformer_block_graph(const TransformerSpec& spec, int t, int b) {
  check_divisible(spec.hidden, t, "hidden size");
  check_divisible(spec.heads, t, "head count");
  if (b < 1 || spec.seq_len < 1) throw ValidationError("microbatch and sequence length must be positive");
  const std::int64_t w = spec.word_size;
  const std::int64_t h = spec.hidden;
  const std::int64_t ht = h / t;
  const std::int64_t heads_t = spec.heads / t;
  const std::int64_t tok = b * spec.seq_len;
  const std::int64_t scores = b * heads_t * spec.seq_len * spec.seq_len;

  OperatorGraph g;
  g.tmp_width = t;
  g.microbatch = b;
  std::map<std::string, int> at;
  auto op = [&](std::string id, OpKind kind, std::int64_t flops, Bytes in, Bytes out, std::int64_t elems) {
    at[id] = static_cast<int>(g.nodes.size());
    g.nodes.push_back({std::move(id), kind, flops, in, out, elems});
  };
  auto edge = [&](const std::string& a, const std::string& c) { g.edges.emplace_back(at.at(a), at.at(c)); };

  op("ln1", OpKind::Vector, 0, tok * h * w, tok * h * w, tok * h);
  for (const char* name : {"q", "k", "v"}) {
    op(name, OpKind::Tensor, tok * h * ht, tok * h * w + h * ht * w, tok * ht * w, 0);
  }
  op("scores", OpKind::Tensor, tok * spec.seq_len * ht, 2 * tok * ht * w, scores * w, 0);
  op("softmax", OpKind::Vector, 0, scores * w, scores * w, scores);
  op("attn_v", OpKind::Tensor, tok * spec.seq_len * ht, scores * w + tok * ht * w, tok * ht * w, 0);
  op("proj", OpKind::Tensor, tok * ht * h, tok * ht * w + ht * h * w, tok * h * w, 0);
  op("add1", OpKind::Vector, 0, 2 * tok * h * w, tok * h * w, tok * h);
  op("ln2", OpKind::Vector, 0, tok * h * w, tok * h * w, tok * h);
  op("fc1_gelu", OpKind::Fused, tok * h * 4 * ht, tok * h * w + h * 4 * ht * w, tok * 4 * ht * w, tok * 4 * ht);
  op("fc2", OpKind::Tensor, tok * 4 * ht * h, tok * 4 * ht * w + 4 * ht * h * w, tok * h * w, 0);
  op("add2", OpKind::Vector, 0, 2 * tok * h * w, tok * h * w, tok * h);

  for (const char* name : {"q", "k", "v"}) edge("ln1", name);
  edge("q", "scores");
  edge("k", "scores");
  edge("scores", "softmax");
  edge("softmax", "attn_v");
  edge("v", "attn_v");
  edge("attn_v", "proj");
  edge("proj", "add1");
  edge("add1", "ln2");
  edge("add1", "add2");
  edge("ln2", "fc1_gelu");
  edge("fc1_gelu", "fc2");
  edge("fc2", "add2");
  // Source-major order, the order a parsed file produces.
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

Workload generate_transformer(const TransformerSpec& spec) {
  if (spec.layers < 1) throw ValidationError("generator needs at least one layer");
  spec.training.validate();
  Workload w;
  w.name = spec.name;
  w.training = spec.training;
  const Bytes params = 12 * spec.hidden * spec.hidden;
  for (int i = 0; i < spec.layers; ++i) {
    Layer layer;
    layer.id = "block" + std::to_string(i);
    layer.sliceable = true;
    for (int t : spec.training.tmp_widths) {
      for (int b : spec.training.microbatch_sizes) {
        LayerVariant v;
        v.fw = transformer_block_graph(spec, t, b);
        v.bw = derive_backward_graph(v.fw, layer.bw_multiplier);
        v.bw_derived = true;
        v.weights_size = params * spec.word_size / t;
        v.optimizer_size = 6 * v.weights_size;
        for (const Operator& op : v.fw.nodes) v.activations_size += op.bytes_out;
        const Bytes hidden_state = static_cast<Bytes>(b) * spec.seq_len * spec.hidden * spec.word_size;
        v.input_edge_size = hidden_state;
        // Two all-reduces of the hidden state per pass when sliced.
        v.allreduce_bytes = t > 1 ? 2 * hidden_state : 0;
        layer.variants[{t, b}] = std::move(v);
      }
    }
    w.graph.layers.push_back(std::move(layer));
    if (i > 0) w.graph.edges.emplace_back(i - 1, i);
  }
  validate_linear(w.graph);
  return w;
}

OperatorGraph chain_graphs(const std::vector<OperatorGraph>& parts) {
  OperatorGraph out;
  if (!parts.empty()) {
    out.tmp_width = parts.front().tmp_width;
    out.microbatch = parts.front().microbatch;
  }
  std::vector<int> prev_sinks;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const OperatorGraph& g = parts[p];
    const int base = static_cast<int>(out.nodes.size());
    const int n = static_cast<int>(g.nodes.size());
    std::vector<bool> has_in(n, false), has_out(n, false);
    for (const Edge& e : g.edges) {
      has_out[e.first] = true;
      has_in[e.second] = true;
    }
    for (const Operator& op : g.nodes) {
      Operator c = op;
      c.id = "g" + std::to_string(p) + "." + op.id;
      out.nodes.push_back(std::move(c));
    }
    for (const Edge& e : g.edges) out.edges.emplace_back(base + e.first, base + e.second);
    for (int s : prev_sinks) {
      for (int v = 0; v < n; ++v) {
        if (!has_in[v]) out.edges.emplace_back(s, base + v);
      }
    }
    prev_sinks.clear();
    for (int v = 0; v < n; ++v) {
      if (!has_out[v]) prev_sinks.push_back(base + v);
    }
  }
  return out;
}

}  // namespace phaze
