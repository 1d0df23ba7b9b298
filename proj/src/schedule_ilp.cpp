#include "phaze/schedule_ilp.hpp"

#include <sstream>

#include "json.hpp"

namespace phaze {

const char* to_string(ZFamilies z) {
  switch (z) {
    case ZFamilies::None: return "none";
    case ZFamilies::TensorOnly: return "tensor";
    case ZFamilies::VectorOnly: return "vector";
    case ZFamilies::Both: return "both";
  }
  return "?";
}

const char* to_string(Pass p) { return p == Pass::Forward ? "fw" : "bw"; }

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::TimeLimit: return "time_limit";
    case SolveStatus::NodeLimit: return "node_limit";
  }
  return "?";
}

double LayerSchedule::gap() const {
  if (makespan <= 0) return 0.0;
  return static_cast<double>(makespan - lower_bound) / static_cast<double>(makespan);
}

namespace {

std::string idx(int i) { return std::to_string(i + 1); }

}  // namespace

int IlpModel::add_var(std::string name, VarType type, std::int64_t lower, std::optional<std::int64_t> upper) {
  const int id = static_cast<int>(vars_.size());
  by_name_[name] = id;
  vars_.push_back({std::move(name), type, lower, upper});
  return id;
}

IlpModel IlpModel::build(const OperatorGraph& g, const std::vector<OperatorEstimate>& est,
                         const AcceleratorConfig& cfg, ZFamilies with_z) {
  Options o;
  o.with_z = with_z;
  return build(g, est, cfg, o);
}

IlpModel IlpModel::build(const OperatorGraph& g, const std::vector<OperatorEstimate>& est,
                         const AcceleratorConfig& cfg, const Options& options) {
  g.validate();
  const int n = static_cast<int>(g.nodes.size());
  if (static_cast<int>(est.size()) != n) throw ValidationError("one estimate per operator is required");
  for (const OperatorEstimate& e : est) {
    if (e.single_core < 1 || e.intra_op < 1) throw ValidationError("operator latencies must be at least one tick");
  }
  IlpModel m;
  m.options_ = options;
  m.num_tc_ = cfg.num_tc;
  m.num_vc_ = cfg.num_vc;
  m.est_ = est;
  m.edges_ = g.edges;
  for (const Operator& op : g.nodes) {
    m.kinds_.push_back(op.kind);
    m.op_ids_.push_back(op.id);
    if (op.kind != OpKind::Vector && cfg.num_tc < 1) throw ValidationError("graph needs a tensor core");
    if (op.kind != OpKind::Tensor && cfg.num_vc < 1) throw ValidationError("graph needs a vector core");
  }
  __int128 h = 0;
  for (const OperatorEstimate& e : est) h += std::max(e.single_core, e.intra_op);
  m.big_m_ = checked_narrow(h);

  // Transitive closure of the edge relation.
  m.closure_.assign(n, std::vector<bool>(n, false));
  {
    std::vector<std::vector<int>> out(n);
    for (const Edge& e : g.edges) out[e.first].push_back(e.second);
    const std::vector<int> order = g.topological_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int v = *it;
      for (int w : out[v]) {
        m.closure_[v][w] = true;
        for (int u = 0; u < n; ++u) {
          if (m.closure_[w][u]) m.closure_[v][u] = true;
        }
      }
    }
  }

  m.t_.resize(n);
  m.p_.resize(n);
  m.y_.resize(n);
  for (int i = 0; i < n; ++i) m.t_[i] = m.add_var("t_" + idx(i), VarType::Continuous, 0, std::nullopt);
  for (int i = 0; i < n; ++i) m.p_[i] = m.add_var("p_" + idx(i), VarType::Continuous, 0, std::nullopt);
  m.T_ = m.add_var("T", VarType::Continuous, 0, std::nullopt);
  for (int i = 0; i < n; ++i) m.y_[i] = m.add_var("y_" + idx(i), VarType::Binary, 0, 1);
  m.x_.assign(n, std::vector<int>(n, -1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      std::int64_t lo = 0, hi = 1;
      if (m.closure_[i][j]) lo = 1;
      if (m.closure_[j][i]) hi = 0;
      m.x_[i][j] = m.add_var("x_" + idx(i) + "_" + idx(j), VarType::Binary, lo, hi);
    }
  }
  // Fused operators may only use the paired cores; no variables exist for
  // unpaired ones.
  const int pairs = m.num_pairs();
  m.ztc_.assign(n, {});
  m.zvc_.assign(n, {});
  if (m.tc_family()) {
    for (int i = 0; i < n; ++i) {
      if (!m.uses_tc(i)) continue;
      const int cores = m.kinds_[i] == OpKind::Fused ? pairs : m.num_tc_;
      for (int c = 0; c < cores; ++c) {
        m.ztc_[i].push_back(m.add_var("ztc_" + idx(i) + "_" + idx(c), VarType::Binary, 0, 1));
      }
    }
  }
  if (m.vc_family()) {
    for (int i = 0; i < n; ++i) {
      if (!m.uses_vc(i)) continue;
      const int cores = m.kinds_[i] == OpKind::Fused ? pairs : m.num_vc_;
      for (int c = 0; c < cores; ++c) {
        m.zvc_[i].push_back(m.add_var("zvc_" + idx(i) + "_" + idx(c), VarType::Binary, 0, 1));
      }
    }
  }

  const Tick H = m.big_m_;
  auto row = [&](std::string name, std::vector<Term> terms, Sense sense, std::int64_t rhs) {
    std::vector<Term> kept;
    for (const Term& t : terms) {
      if (t.coef != 0) kept.push_back(t);
    }
    m.rows_.push_back({std::move(name), std::move(kept), sense, rhs});
  };

  // Duration follows the chosen mode.
  for (int i = 0; i < n; ++i) {
    row("a_" + idx(i), {{m.p_[i], 1}, {m.y_[i], est[i].single_core - est[i].intra_op}}, Sense::Eq, est[i].single_core);
  }
  // Makespan.
  for (int i = 0; i < n; ++i) row("b_" + idx(i), {{m.T_, 1}, {m.t_[i], -1}, {m.p_[i], -1}}, Sense::Ge, 0);
  // Antisymmetry.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) row("e_" + idx(i) + "_" + idx(j), {{m.x_[i][j], 1}, {m.x_[j][i], 1}}, Sense::Le, 1);
  }
  if (options.explicit_transitivity) {
    for (Row& r : m.transitivity_rows()) m.rows_.push_back(std::move(r));
  }
  // Ordering: x_ij = 1 forces j to start after i finishes.
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      row("g_" + idx(i) + "_" + idx(j), {{m.t_[i], 1}, {m.p_[i], 1}, {m.x_[i][j], H}, {m.t_[j], -1}}, Sense::Le, H);
    }
  }
  // An intra-op operator is ordered against every other operator.
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      row("h_" + idx(i) + "_" + idx(j), {{m.x_[i][j], 1}, {m.x_[j][i], 1}, {m.y_[i], -1}}, Sense::Ge, 0);
    }
  }
  // Single-core operators get exactly one core of each type they use.
  for (int i = 0; i < n; ++i) {
    if (!m.ztc_[i].empty()) {
      std::vector<Term> terms;
      for (int v : m.ztc_[i]) terms.push_back({v, 1});
      terms.push_back({m.y_[i], 1});
      row("itc_" + idx(i), std::move(terms), Sense::Eq, 1);
    }
    if (!m.zvc_[i].empty()) {
      std::vector<Term> terms;
      for (int v : m.zvc_[i]) terms.push_back({v, 1});
      terms.push_back({m.y_[i], 1});
      row("ivc_" + idx(i), std::move(terms), Sense::Eq, 1);
    }
    if (m.kinds_[i] == OpKind::Fused && !m.ztc_[i].empty() && !m.zvc_[i].empty()) {
      for (int c = 0; c < pairs; ++c) {
        row("pair_" + idx(i) + "_" + idx(c), {{m.ztc_[i][c], 1}, {m.zvc_[i][c], -1}}, Sense::Eq, 0);
      }
    }
  }
  // Operators sharing a core do not overlap.
  auto core_rows = [&](const std::vector<std::vector<int>>& z, const char* prefix) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const int shared = static_cast<int>(std::min(z[i].size(), z[j].size()));
        for (int c = 0; c < shared; ++c) {
          row(std::string(prefix) + idx(i) + "_" + idx(j) + "_" + idx(c),
              {{z[i][c], 1}, {z[j][c], 1}, {m.x_[i][j], -1}, {m.x_[j][i], -1}}, Sense::Le, 1);
        }
      }
    }
  };
  core_rows(m.ztc_, "jtc_");
  core_rows(m.zvc_, "jvc_");
  return m;
}

std::vector<Row> IlpModel::transitivity_rows() const {
  std::vector<Row> out;
  const int n = num_ops();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        out.push_back({"f_" + idx(i) + "_" + idx(j) + "_" + idx(k),
                       {{x_[i][j], 1}, {x_[j][k], 1}, {x_[i][k], -1}},
                       Sense::Le,
                       1});
      }
    }
  }
  return out;
}

int IlpModel::var_ztc(int i, int c) const {
  if (i < 0 || i >= num_ops() || c < 0 || c >= static_cast<int>(ztc_[i].size())) return -1;
  return ztc_[i][c];
}

int IlpModel::var_zvc(int i, int c) const {
  if (i < 0 || i >= num_ops() || c < 0 || c >= static_cast<int>(zvc_[i].size())) return -1;
  return zvc_[i][c];
}

int IlpModel::var_index(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

namespace {

bool row_holds(const Row& r, const std::vector<std::int64_t>& v) {
  __int128 lhs = 0;
  for (const Term& t : r.terms) lhs += static_cast<__int128>(t.coef) * v[t.var];
  switch (r.sense) {
    case Sense::Le: return lhs <= r.rhs;
    case Sense::Ge: return lhs >= r.rhs;
    case Sense::Eq: return lhs == r.rhs;
  }
  return false;
}

}  // namespace

std::vector<std::string> IlpModel::evaluate(const std::vector<std::int64_t>& values) const {
  std::vector<std::string> bad;
  if (values.size() != vars_.size()) {
    bad.push_back("assignment size");
    return bad;
  }
  for (std::size_t k = 0; k < vars_.size(); ++k) {
    const Variable& v = vars_[k];
    if (values[k] < v.lower || (v.upper && values[k] > *v.upper)) bad.push_back("bound " + v.name);
  }
  for (const Row& r : rows_) {
    if (!row_holds(r, values)) bad.push_back(r.name);
  }
  if (!options_.explicit_transitivity) {
    for (const Row& r : transitivity_rows()) {
      if (!row_holds(r, values)) bad.push_back(r.name);
    }
  }
  return bad;
}

std::string IlpModel::export_lp() const {
  std::ostringstream os;
  os << "\\ operator schedule model: " << num_ops() << " operators, num_tc=" << num_tc_ << ", num_vc=" << num_vc_
     << ", z families=" << to_string(options_.with_z) << ", H=" << big_m_ << "\n";
  if (!options_.explicit_transitivity) {
    os << "\\ transitivity rows omitted: implied by the ordering rows for positive latencies\n";
  }
  os << "Minimize\n obj: " << vars_[T_].name << "\nSubject To\n";
  for (const Row& r : rows_) {
    os << " " << r.name << ":";
    int on_line = 0;
    bool first = true;
    for (const Term& t : r.terms) {
      if (on_line == 8) {
        os << "\n   ";
        on_line = 0;
      }
      const std::int64_t a = t.coef < 0 ? -t.coef : t.coef;
      if (first) {
        os << (t.coef < 0 ? " -" : "");
      } else {
        os << (t.coef < 0 ? " -" : " +");
      }
      os << " ";
      if (a != 1) os << a << " ";
      os << vars_[t.var].name;
      first = false;
      ++on_line;
    }
    if (r.terms.empty()) os << " 0 " << vars_[T_].name;
    os << (r.sense == Sense::Le ? " <= " : r.sense == Sense::Ge ? " >= " : " = ") << r.rhs << "\n";
  }
  os << "Bounds\n";
  std::vector<const Variable*> binaries;
  for (const Variable& v : vars_) {
    if (v.type == VarType::Binary) {
      if (v.upper && *v.upper == v.lower) {
        os << " " << v.name << " = " << v.lower << "\n";
      } else {
        binaries.push_back(&v);
      }
      continue;
    }
    if (v.upper) {
      os << " " << v.lower << " <= " << v.name << " <= " << *v.upper << "\n";
    } else {
      os << " " << v.name << " >= " << v.lower << "\n";
    }
  }
  os << "Binaries\n";
  int on_line = 0;
  for (const Variable* v : binaries) {
    os << " " << v->name;
    if (++on_line == 10) {
      os << "\n";
      on_line = 0;
    }
  }
  if (on_line != 0) os << "\n";
  os << "End\n";
  return os.str();
}

std::vector<std::int64_t> assignment_from_schedule(const IlpModel& m, const LayerSchedule& s) {
  const int n = m.num_ops();
  if (static_cast<int>(s.ops.size()) != n) throw ValidationError("schedule does not match the model");
  std::vector<std::int64_t> v(m.variables().size(), 0);
  for (int i = 0; i < n; ++i) {
    const ScheduledOp& o = s.ops[i];
    v[m.var_t(i)] = o.start;
    v[m.var_p(i)] = o.duration;
    v[m.var_y(i)] = o.intra_op ? 1 : 0;
    for (int j = 0; j < n; ++j) {
      if (i != j) v[m.var_x(i, j)] = o.finish() <= s.ops[j].start ? 1 : 0;
    }
    if (!o.intra_op && o.core >= 0) {
      if (int z = m.var_ztc(i, o.core); z >= 0) v[z] = 1;
      if (int z = m.var_zvc(i, o.core); z >= 0) v[z] = 1;
    }
  }
  v[m.var_T()] = s.makespan;
  return v;
}

std::vector<Violation> validate_schedule(const LayerSchedule& s, const OperatorGraph& g,
                                         const std::vector<OperatorEstimate>& est, const AcceleratorConfig& cfg) {
  std::vector<Violation> out;
  const int n = static_cast<int>(g.nodes.size());
  if (static_cast<int>(s.ops.size()) != n || static_cast<int>(est.size()) != n) {
    out.push_back({"structure", "schedule has " + std::to_string(s.ops.size()) + " operators, graph has " +
                                    std::to_string(n)});
    return out;
  }
  for (int i = 0; i < n; ++i) {
    if (s.ops[i].id != g.nodes[i].id) {
      out.push_back({"structure", "operator " + std::to_string(i) + " is '" + s.ops[i].id + "', expected '" +
                                      g.nodes[i].id + "'"});
    }
  }
  if (!out.empty()) return out;

  const int pairs = std::min(cfg.num_tc, cfg.num_vc);
  auto name = [&](int i) { return "'" + g.nodes[i].id + "'"; };
  auto overlap = [&](int i, int j) {
    return s.ops[i].start < s.ops[j].finish() && s.ops[j].start < s.ops[i].finish();
  };
  Tick max_finish = 0;
  for (int i = 0; i < n; ++i) {
    const ScheduledOp& o = s.ops[i];
    const OpKind kind = g.nodes[i].kind;
    if (o.start < 0) out.push_back({"structure", name(i) + " starts before zero"});
    const Tick want = o.intra_op ? est[i].intra_op : est[i].single_core;
    if (o.duration != want) {
      out.push_back({"duration", name(i) + " lasts " + std::to_string(o.duration) + " ticks, its mode needs " +
                                     std::to_string(want)});
    }
    if (!o.intra_op) {
      const int limit = kind == OpKind::Tensor ? cfg.num_tc : kind == OpKind::Vector ? cfg.num_vc : pairs;
      if (kind == OpKind::Fused && o.core >= pairs && o.core < std::max(cfg.num_tc, cfg.num_vc)) {
        out.push_back({"pairing", name(i) + " is fused but runs on unpaired core " + std::to_string(o.core)});
      } else if (o.core < 0 || o.core >= limit) {
        out.push_back({"core-range", name(i) + " has core " + std::to_string(o.core) + ", valid range is [0, " +
                                         std::to_string(limit) + ")"});
      }
    }
    max_finish = std::max(max_finish, o.finish());
  }
  for (const Edge& e : g.edges) {
    if (s.ops[e.first].finish() > s.ops[e.second].start) {
      out.push_back({"precedence", name(e.first) + " finishes at " + std::to_string(s.ops[e.first].finish()) +
                                       " after successor " + name(e.second) + " starts at " +
                                       std::to_string(s.ops[e.second].start)});
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (!overlap(i, j)) continue;
      const ScheduledOp& a = s.ops[i];
      const ScheduledOp& b = s.ops[j];
      if (a.intra_op || b.intra_op) {
        const int intra = a.intra_op ? i : j;
        const int other = a.intra_op ? j : i;
        out.push_back({"exclusivity", name(other) + " runs during intra-op operator " + name(intra)});
        continue;
      }
      if (a.core < 0 || a.core != b.core) continue;
      const OpKind ka = g.nodes[i].kind;
      const OpKind kb = g.nodes[j].kind;
      const bool share_tc = ka != OpKind::Vector && kb != OpKind::Vector;
      const bool share_vc = ka != OpKind::Tensor && kb != OpKind::Tensor;
      if (share_tc || share_vc) {
        out.push_back({"core-overlap", name(i) + " and " + name(j) + " overlap on " +
                                           (share_tc ? "tensor" : "vector") + " core " + std::to_string(a.core)});
      }
    }
  }
  if (s.makespan != max_finish) {
    out.push_back({"makespan", "makespan " + std::to_string(s.makespan) + " differs from the last finish " +
                                   std::to_string(max_finish)});
  }
  return out;
}

std::string schedule_to_json(const LayerSchedule& s, int indent) {
  nlohmann::ordered_json j;
  j["pass"] = to_string(s.pass);
  j["makespan"] = s.makespan;
  j["status"] = to_string(s.status);
  j["lower_bound"] = s.lower_bound;
  j["invocations"] = s.invocations;
  j["z_families"] = to_string(s.families);
  auto ops = nlohmann::ordered_json::array();
  for (const ScheduledOp& o : s.ops) {
    nlohmann::ordered_json e;
    e["id"] = o.id;
    e["start"] = o.start;
    e["duration"] = o.duration;
    e["mode"] = o.intra_op ? "intra" : "single";
    if (o.intra_op) {
      e["core"] = nullptr;
    } else {
      e["core"] = o.core;
    }
    ops.push_back(std::move(e));
  }
  j["ops"] = std::move(ops);
  return j.dump(indent) + "\n";
}

std::optional<ScheduleCache::Entry> ScheduleCache::find(const std::string& key) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void ScheduleCache::insert(const std::string& key, Entry e) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.emplace(key, e);  // identical keys always carry identical values
}

std::size_t ScheduleCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

std::string schedule_cache_key(const OperatorGraph& g, const AcceleratorConfig& cfg, const CostModelParams& params) {
  std::ostringstream os;
  os << "t" << g.tmp_width << "b" << g.microbatch << "|";
  for (const Operator& op : g.nodes) {
    os << static_cast<int>(op.kind) << "," << op.flops << "," << op.bytes_in << "," << op.bytes_out << ","
       << op.elementwise_len << ";";
  }
  os << "|";
  for (const Edge& e : g.edges) os << e.first << ">" << e.second << ";";
  os << "|" << cfg.num_tc << "," << cfg.num_vc << "," << cfg.pe_x << "," << cfg.pe_y << "," << cfg.pe_vc << ","
     << cfg.glb_bw << "," << cfg.hbm_bw;
  os << "|" << params.word_size << "," << params.macs_per_pe_per_tick;
  return os.str();
}

Tick graph_latency(const OperatorGraph& g, const AcceleratorConfig& cfg, const CostModelParams& params,
                   ScheduleCache& cache, const SolveOptions& options, bool* optimal) {
  const std::string key = schedule_cache_key(g, cfg, params);
  if (auto hit = cache.find(key)) {
    if (optimal) *optimal = hit->optimal;
    return hit->makespan;
  }
  const std::vector<OperatorEstimate> est = estimate_graph(g, cfg, params);
  const LayerSchedule s = solve_lazy(g, est, cfg, options);
  const bool opt = s.status == SolveStatus::Optimal;
  cache.insert(key, {s.makespan, opt});
  if (optimal) *optimal = opt;
  return s.makespan;
}

LayerLatencies layer_latencies(const Layer& layer, const AcceleratorConfig& cfg, int t, int b,
                               const CostModelParams& params, ScheduleCache& cache, const SolveOptions& options) {
  const LayerVariant& v = layer.variant(t, b);
  LayerLatencies out;
  bool fw_opt = true, bw_opt = true;
  out.fw = graph_latency(v.fw, cfg, params, cache, options, &fw_opt);
  out.bw = graph_latency(v.bw, cfg, params, cache, options, &bw_opt);
  out.optimal = fw_opt && bw_opt;
  return out;
}

}  // namespace phaze
