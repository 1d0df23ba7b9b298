#include "phaze/workload.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace phaze {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Tensor: return "tensor";
    case OpKind::Vector: return "vector";
    case OpKind::Fused: return "fused";
  }
  return "?";
}

OpKind op_kind_from_string(const std::string& s) {
  if (s == "tensor") return OpKind::Tensor;
  if (s == "vector") return OpKind::Vector;
  if (s == "fused") return OpKind::Fused;
  throw ParseError("unknown operator kind '" + s + "'");
}

int OperatorGraph::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

void OperatorGraph::validate() const {
  if (tmp_width < 1 || microbatch < 1) throw ValidationError("operator graph with non-positive t or b");
  std::set<std::string> ids;
  for (const Operator& op : nodes) {
    if (!ids.insert(op.id).second) throw ValidationError("duplicate operator id '" + op.id + "'");
    if (op.flops < 0 || op.bytes_in < 0 || op.bytes_out < 0 || op.elementwise_len < 0) {
      throw ValidationError("operator '" + op.id + "' has a negative quantity");
    }
    if (op.kind == OpKind::Fused && (op.flops <= 0 || op.elementwise_len <= 0)) {
      throw ValidationError("fused operator '" + op.id + "' needs flops > 0 and elementwise_len > 0");
    }
  }
  std::set<Edge> seen;
  for (const Edge& e : edges) {
    const int n = static_cast<int>(nodes.size());
    if (e.first < 0 || e.first >= n || e.second < 0 || e.second >= n) {
      throw ValidationError("operator edge endpoint out of range");
    }
    if (e.first == e.second) throw ValidationError("operator self loop on '" + nodes[e.first].id + "'");
    if (!seen.insert(e).second) {
      throw ValidationError("duplicate operator edge " + nodes[e.first].id + "->" + nodes[e.second].id);
    }
  }
  if (topological_order().size() != nodes.size()) throw ValidationError("cycle detected in operator graph");
}

std::vector<int> OperatorGraph::topological_order() const {
  const int n = static_cast<int>(nodes.size());
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const Edge& e : edges) {
    if (e.first < 0 || e.first >= n || e.second < 0 || e.second >= n) continue;
    out[e.first].push_back(e.second);
    ++indeg[e.second];
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.push(i);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int w : out[v]) {
      if (--indeg[w] == 0) ready.push(w);
    }
  }
  return order;  // shorter than n iff there is a cycle
}

OperatorGraph derive_backward_graph(const OperatorGraph& fw, const Rational& multiplier) {
  fw.validate();
  OperatorGraph bw = fw;
  for (Operator& op : bw.nodes) {
    op.flops = multiplier.scale_ceil(op.flops);
    op.elementwise_len = multiplier.scale_ceil(op.elementwise_len);
  }
  for (Edge& e : bw.edges) std::swap(e.first, e.second);
  return bw;
}

const LayerVariant& Layer::variant(int tmp_width, int microbatch) const {
  auto it = variants.find({tmp_width, microbatch});
  if (it != variants.end()) return it->second;
  if (!sliceable) {
    it = variants.find({1, microbatch});
    if (it != variants.end()) return it->second;
  }
  throw ValidationError("layer '" + id + "' is missing slice variant t=" + std::to_string(tmp_width) +
                        " b=" + std::to_string(microbatch));
}

bool Layer::has_variant(int tmp_width, int microbatch) const {
  if (variants.count({tmp_width, microbatch})) return true;
  return !sliceable && variants.count({1, microbatch});
}

void TrainingParams::validate() const {
  if (minibatch_microbatches < 1) throw ValidationError("training.B must be >= 1");
  if (num_accelerators < 1) throw ValidationError("training.K must be >= 1");
  if (network_bandwidth <= 0) throw ValidationError("training.bandwidth_bytes_per_tick must be > 0");
  if (microbatch_sizes.empty()) throw ValidationError("training.microbatch_sizes is empty");
  if (tmp_widths.empty()) throw ValidationError("training.tmp_widths is empty");
  if (hbm_candidates.empty()) throw ValidationError("training.hbm_candidates_bytes is empty");
  for (int b : microbatch_sizes) {
    if (b < 1) throw ValidationError("microbatch sizes must be positive");
  }
  for (int t : tmp_widths) {
    if (t < 1) throw ValidationError("TMP widths must be positive");
  }
  for (Bytes h : hbm_candidates) {
    if (h <= 0) throw ValidationError("HBM candidates must be positive");
  }
}

std::vector<int> validate_linear(const LayerGraph& lg) {
  const int n = static_cast<int>(lg.layers.size());
  if (n == 0) throw ValidationError("layer graph has no layers");
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const Edge& e : lg.edges) {
    if (e.first < 0 || e.first >= n || e.second < 0 || e.second >= n || e.first == e.second) {
      throw ValidationError("invalid layer edge");
    }
    out[e.first].push_back(e.second);
    ++indeg[e.second];
  }
  for (int v = 0; v < n; ++v) {
    if (out[v].size() > 1) {
      throw NotLinearError("layer '" + lg.layers[v].id + "' has " + std::to_string(out[v].size()) +
                           " successors; only linear layer graphs are supported");
    }
  }
  std::vector<int> ready;
  for (int v = 0; v < n; ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  std::vector<int> order;
  bool unique = true;
  while (!ready.empty()) {
    if (ready.size() > 1) unique = false;
    int v = ready.back();
    ready.pop_back();
    order.push_back(v);
    for (int w : out[v]) {
      if (--indeg[w] == 0) ready.push_back(w);
    }
  }
  if (static_cast<int>(order.size()) != n) throw ValidationError("cycle detected in layer graph");
  if (!unique) throw NotLinearError("layer graph has no Hamiltonian path (topological order is not unique)");
  return order;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw ParseError(source_ + ": field '" + path + "': " + what);
  }

  const json& field(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing");
    return *it;
  }

  std::int64_t integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      fail(path, "integer out of range");
    }
    return v.get<std::int64_t>();
  }

  std::int64_t int_field(const json& obj, const std::string& key, const std::string& path) const {
    return integer(field(obj, key, path), path + "." + key);
  }

  std::int64_t int_field_or(const json& obj, const std::string& key, const std::string& path,
                            std::int64_t fallback) const {
    if (!obj.contains(key)) return fallback;
    return int_field(obj, key, path);
  }

  std::vector<std::int64_t> int_list(const json& obj, const std::string& key, const std::string& path) const {
    const json& v = field(obj, key, path);
    if (!v.is_array()) fail(path + "." + key, "expected an array");
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(integer(v[i], path + "." + key + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  std::string str(const json& v, const std::string& path) const {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

int to_int(std::int64_t v, const Reader& r, const std::string& path) {
  if (v < INT32_MIN || v > INT32_MAX) r.fail(path, "value out of range");
  return static_cast<int>(v);
}

Rational parse_rational(const json& v, const Reader& r, const std::string& path) {
  try {
    if (v.is_string()) return Rational::parse(v.get<std::string>());
    if (v.is_number()) return Rational::parse(v.dump());
  } catch (const Error& e) {
    r.fail(path, e.what());
  }
  r.fail(path, "expected a number or a 'num/den' string");
}

OperatorGraph parse_ops(const json& arr, int t, int b, const Reader& r, const std::string& path) {
  if (!arr.is_array()) r.fail(path, "expected an array of operators");
  OperatorGraph g;
  g.tmp_width = t;
  g.microbatch = b;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const json& o = arr[i];
    Operator op;
    op.id = r.str(r.field(o, "id", p), p + ".id");
    try {
      op.kind = op_kind_from_string(r.str(r.field(o, "kind", p), p + ".kind"));
    } catch (const ParseError& e) {
      r.fail(p + ".kind", e.what());
    }
    op.flops = r.int_field_or(o, "flops", p, 0);
    op.bytes_in = r.int_field_or(o, "bytes_in", p, 0);
    op.bytes_out = r.int_field_or(o, "bytes_out", p, 0);
    op.elementwise_len = r.int_field_or(o, "elementwise_len", p, 0);
    g.nodes.push_back(op);
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!arr[i].contains("succ")) continue;
    const json& succ = arr[i]["succ"];
    if (!succ.is_array()) r.fail(p + ".succ", "expected an array of operator ids");
    for (std::size_t k = 0; k < succ.size(); ++k) {
      const std::string sp = p + ".succ[" + std::to_string(k) + "]";
      int dst = g.index_of(r.str(succ[k], sp));
      if (dst < 0) r.fail(sp, "unknown operator '" + succ[k].get<std::string>() + "'");
      g.edges.emplace_back(static_cast<int>(i), dst);
    }
  }
  try {
    g.validate();
  } catch (const ValidationError& e) {
    r.fail(path, e.what());
  }
  return g;
}

TrainingParams parse_training(const json& j, const Reader& r) {
  const std::string p = "training";
  TrainingParams tp;
  tp.minibatch_microbatches = to_int(r.int_field(j, "B", p), r, p + ".B");
  tp.num_accelerators = to_int(r.int_field(j, "K", p), r, p + ".K");
  tp.network_bandwidth = r.int_field(j, "bandwidth_bytes_per_tick", p);
  tp.microbatch_sizes.clear();
  for (auto v : r.int_list(j, "microbatch_sizes", p)) tp.microbatch_sizes.push_back(to_int(v, r, p));
  tp.tmp_widths.clear();
  for (auto v : r.int_list(j, "tmp_widths", p)) tp.tmp_widths.push_back(to_int(v, r, p));
  tp.hbm_candidates = r.int_list(j, "hbm_candidates_bytes", p);
  try {
    tp.validate();
  } catch (const ValidationError& e) {
    r.fail(p, e.what());
  }
  return tp;
}

}  // namespace

Workload parse_workload_text(const std::string& text, const std::string& name_hint) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(name_hint + ": syntax error at " + line_col(text, e.byte) + ": " + e.what());
  }
  Reader r(name_hint);
  if (!root.is_object()) r.fail("$", "expected a top-level object");

  Workload w;
  w.name = root.contains("name") ? r.str(root["name"], "name") : name_hint;
  w.training = parse_training(r.field(root, "training", "$"), r);

  const json& layers = r.field(root, "layers", "$");
  if (!layers.is_array() || layers.empty()) r.fail("layers", "expected a non-empty array");

  LayerGraph lg;
  bool explicit_edges = false;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const std::string lp = "layers[" + std::to_string(li) + "]";
    const json& lj = layers[li];
    Layer layer;
    layer.id = r.str(r.field(lj, "id", lp), lp + ".id");
    if (lj.contains("sliceable")) {
      if (!lj["sliceable"].is_boolean()) r.fail(lp + ".sliceable", "expected a boolean");
      layer.sliceable = lj["sliceable"].get<bool>();
    }
    if (lj.contains("bw_multiplier")) {
      layer.bw_multiplier = parse_rational(lj["bw_multiplier"], r, lp + ".bw_multiplier");
    }
    if (lj.contains("succ")) explicit_edges = true;
    const json& vars = r.field(lj, "variants", lp);
    if (!vars.is_array() || vars.empty()) r.fail(lp + ".variants", "expected a non-empty array");
    for (std::size_t vi = 0; vi < vars.size(); ++vi) {
      const std::string vp = lp + ".variants[" + std::to_string(vi) + "]";
      const json& vj = vars[vi];
      int t = to_int(r.int_field(vj, "t", vp), r, vp + ".t");
      int b = to_int(r.int_field(vj, "b", vp), r, vp + ".b");
      if (t < 1 || b < 1) r.fail(vp, "t and b must be positive");
      if (!layer.sliceable && t != 1) r.fail(vp + ".t", "non-sliceable layer declares a slice variant");
      LayerVariant v;
      v.weights_size = r.int_field(vj, "weights_size", vp);
      v.optimizer_size = r.int_field(vj, "optimizer_size", vp);
      v.activations_size = r.int_field(vj, "activations_size", vp);
      v.input_edge_size = r.int_field(vj, "input_edge_size", vp);
      v.allreduce_bytes = r.int_field_or(vj, "allreduce_bytes", vp, 0);
      if (v.weights_size < 0 || v.optimizer_size < 0 || v.activations_size < 0 || v.input_edge_size < 0 ||
          v.allreduce_bytes < 0) {
        r.fail(vp, "sizes must be non-negative");
      }
      v.fw = parse_ops(r.field(vj, "fw_ops", vp), t, b, r, vp + ".fw_ops");
      if (vj.contains("bw_ops")) {
        v.bw = parse_ops(vj["bw_ops"], t, b, r, vp + ".bw_ops");
      } else {
        v.bw = derive_backward_graph(v.fw, layer.bw_multiplier);
        v.bw_derived = true;
      }
      if (!layer.variants.emplace(VariantKey{t, b}, std::move(v)).second) {
        r.fail(vp, "duplicate variant t=" + std::to_string(t) + " b=" + std::to_string(b));
      }
    }
    lg.layers.push_back(std::move(layer));
  }

  // Layer ids must be unique before edges can be resolved.
  std::map<std::string, int> layer_index;
  for (std::size_t i = 0; i < lg.layers.size(); ++i) {
    if (!layer_index.emplace(lg.layers[i].id, static_cast<int>(i)).second) {
      r.fail("layers[" + std::to_string(i) + "].id", "duplicate layer id '" + lg.layers[i].id + "'");
    }
  }
  if (explicit_edges) {
    for (std::size_t li = 0; li < layers.size(); ++li) {
      if (!layers[li].contains("succ")) continue;
      const std::string sp = "layers[" + std::to_string(li) + "].succ";
      const json& succ = layers[li]["succ"];
      if (!succ.is_array()) r.fail(sp, "expected an array of layer ids");
      for (std::size_t k = 0; k < succ.size(); ++k) {
        std::string id = r.str(succ[k], sp + "[" + std::to_string(k) + "]");
        auto it = layer_index.find(id);
        if (it == layer_index.end()) r.fail(sp, "unknown layer '" + id + "'");
        lg.edges.emplace_back(static_cast<int>(li), it->second);
      }
    }
  } else {
    for (std::size_t i = 1; i < lg.layers.size(); ++i) {
      lg.edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(i));
    }
  }

  // Every (t, b) the training section asks for must exist.
  for (const Layer& layer : lg.layers) {
    for (int t : w.training.tmp_widths) {
      for (int b : w.training.microbatch_sizes) {
        if (!layer.has_variant(t, b)) {
          throw ParseError(name_hint + ": layer '" + layer.id + "': missing slice variant t=" + std::to_string(t) +
                           " b=" + std::to_string(b));
        }
      }
    }
  }

  std::vector<int> order;
  try {
    order = validate_linear(lg);
  } catch (const NotLinearError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ParseError(name_hint + ": " + e.what());
  }
  // Store layers in their Hamiltonian order.
  LayerGraph ordered;
  for (int v : order) ordered.layers.push_back(lg.layers[v]);
  for (std::size_t i = 1; i < order.size(); ++i) {
    ordered.edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(i));
  }
  w.graph = std::move(ordered);
  return w;
}

Workload parse_workload(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open workload file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_workload_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ojson ops_to_json(const OperatorGraph& g) {
  ojson arr = ojson::array();
  std::vector<std::vector<std::string>> succ(g.nodes.size());
  for (const Edge& e : g.edges) succ[e.first].push_back(g.nodes[e.second].id);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Operator& op = g.nodes[i];
    ojson o;
    o["id"] = op.id;
    o["kind"] = to_string(op.kind);
    o["flops"] = op.flops;
    o["bytes_in"] = op.bytes_in;
    o["bytes_out"] = op.bytes_out;
    o["elementwise_len"] = op.elementwise_len;
    o["succ"] = succ[i];
    arr.push_back(std::move(o));
  }
  return arr;
}

}  // namespace

std::string serialize_workload(const Workload& w) {
  ojson root;
  root["name"] = w.name;
  ojson tr;
  tr["B"] = w.training.minibatch_microbatches;
  tr["microbatch_sizes"] = w.training.microbatch_sizes;
  tr["K"] = w.training.num_accelerators;
  tr["bandwidth_bytes_per_tick"] = w.training.network_bandwidth;
  tr["hbm_candidates_bytes"] = w.training.hbm_candidates;
  tr["tmp_widths"] = w.training.tmp_widths;
  root["training"] = tr;

  std::vector<std::vector<std::string>> succ(w.graph.layers.size());
  for (const Edge& e : w.graph.edges) succ[e.first].push_back(w.graph.layers[e.second].id);

  ojson layers = ojson::array();
  for (std::size_t li = 0; li < w.graph.layers.size(); ++li) {
    const Layer& layer = w.graph.layers[li];
    ojson lj;
    lj["id"] = layer.id;
    lj["sliceable"] = layer.sliceable;
    lj["bw_multiplier"] = layer.bw_multiplier.str();
    lj["succ"] = succ[li];
    ojson vars = ojson::array();
    for (const auto& [key, v] : layer.variants) {
      ojson vj;
      vj["t"] = key.tmp_width;
      vj["b"] = key.microbatch;
      vj["weights_size"] = v.weights_size;
      vj["optimizer_size"] = v.optimizer_size;
      vj["activations_size"] = v.activations_size;
      vj["input_edge_size"] = v.input_edge_size;
      vj["allreduce_bytes"] = v.allreduce_bytes;
      vj["fw_ops"] = ops_to_json(v.fw);
      // Synthesized backward graphs are left implicit so they are re-derived.
      if (!v.bw_derived) vj["bw_ops"] = ops_to_json(v.bw);
      vars.push_back(std::move(vj));
    }
    lj["variants"] = std::move(vars);
    layers.push_back(std::move(lj));
  }
  root["layers"] = std::move(layers);
  return root.dump(1) + "\n";
}

void write_workload(const Workload& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write workload file '" + path + "'");
  out << serialize_workload(w);
}

}  // namespace phaze
