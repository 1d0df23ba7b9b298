#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <tuple>

namespace phaze::testing {

RandomInstance random_instance(std::mt19937_64& rng, const RandomDagOptions& o) {
  std::uniform_int_distribution<int> size(o.min_nodes, o.max_nodes);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<Tick> lat(o.min_latency, o.max_latency);
  std::uniform_int_distribution<std::size_t> cores(0, o.core_counts.size() - 1);
  std::uniform_int_distribution<int> kind(0, o.fused ? 2 : 1);

  RandomInstance r;
  const int n = size(rng);
  for (int i = 0; i < n; ++i) {
    Operator op;
    op.id = "n" + std::to_string(i);
    op.kind = static_cast<OpKind>(kind(rng));
    op.flops = op.kind == OpKind::Vector ? 0 : 1;
    op.elementwise_len = op.kind == OpKind::Tensor ? 0 : 1;
    r.graph.nodes.push_back(op);
    const Tick single = lat(rng);
    const Tick intra = lat(rng);
    r.est.push_back({single, intra});
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (coin(rng) < o.edge_probability) r.graph.edges.emplace_back(i, j);
    }
  }
  r.cfg.num_tc = o.core_counts[cores(rng)];
  r.cfg.num_vc = o.core_counts[cores(rng)];
  return r;
}

namespace {

class IlpOracle {
 public:
  IlpOracle(const OperatorGraph& g, const std::vector<OperatorEstimate>& est, int num_tc, int num_vc)
      : n_(static_cast<int>(g.nodes.size())), est_(est), num_tc_(num_tc), num_vc_(num_vc),
        pairs_(std::min(num_tc, num_vc)) {
    for (const Operator& op : g.nodes) kind_.push_back(op.kind);
    reach_.assign(n_, std::vector<bool>(n_, false));
    for (const Edge& e : g.edges) reach_[e.first][e.second] = true;
    for (int k = 0; k < n_; ++k) {
      for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) {
          if (reach_[i][k] && reach_[k][j]) reach_[i][j] = true;
        }
      }
    }
    edges_ = g.edges;
    intra_.assign(n_, false);
    tc_.assign(n_, -1);
    vc_.assign(n_, -1);
    // Running every operator alone in its faster mode is always feasible.
    best_ = 0;
    for (const OperatorEstimate& e : est_) best_ += std::min(e.single_core, e.intra_op);
  }

  Tick run() {
    choose_mode(0);
    return best_;
  }

 private:
  bool uses_tc(int i) const { return kind_[i] != OpKind::Vector; }
  bool uses_vc(int i) const { return kind_[i] != OpKind::Tensor; }
  Tick dur(int i) const { return intra_[i] ? est_[i].intra_op : est_[i].single_core; }

  // Longest path over the given arcs; the graph must be acyclic.
  Tick makespan(const std::vector<std::vector<bool>>& arc) const {
    std::vector<int> indeg(n_, 0), order;
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) indeg[j] += arc[i][j];
    }
    for (int i = 0; i < n_; ++i) {
      if (indeg[i] == 0) order.push_back(i);
    }
    std::vector<Tick> start(n_, 0);
    Tick T = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const int i = order[k];
      T = std::max(T, start[i] + dur(i));
      for (int j = 0; j < n_; ++j) {
        if (!arc[i][j]) continue;
        start[j] = std::max(start[j], start[i] + dur(i));
        if (--indeg[j] == 0) order.push_back(j);
      }
    }
    return T;
  }

  std::vector<std::vector<bool>> base_arcs() const {
    std::vector<std::vector<bool>> arc(n_, std::vector<bool>(n_, false));
    for (const Edge& e : edges_) arc[e.first][e.second] = true;
    return arc;
  }

  void choose_mode(int i) {
    if (i == n_) {
      if (makespan(base_arcs()) >= best_) return;
      choose_core(0, 0, 0, 0);
      return;
    }
    intra_[i] = false;
    choose_mode(i + 1);
    intra_[i] = true;
    choose_mode(i + 1);
    intra_[i] = false;
  }

  // Core indices in [0, pairs) are interchangeable as pairs, the remaining
  // tensor and vector cores among themselves, so each class is filled in
  // first-use order.
  void choose_core(int i, int used_pairs, int used_tc, int used_vc) {
    if (i == n_) {
      orient();
      return;
    }
    if (intra_[i]) {
      choose_core(i + 1, used_pairs, used_tc, used_vc);
      return;
    }
    const int max_pair = std::min(used_pairs + 1, pairs_);
    if (kind_[i] == OpKind::Fused) {
      for (int c = 0; c < max_pair; ++c) {
        tc_[i] = vc_[i] = c;
        choose_core(i + 1, std::max(used_pairs, c + 1), used_tc, used_vc);
      }
    } else if (kind_[i] == OpKind::Tensor) {
      for (int c = 0; c < max_pair; ++c) {
        tc_[i] = c;
        choose_core(i + 1, std::max(used_pairs, c + 1), used_tc, used_vc);
      }
      for (int u = 0; u < std::min(used_tc + 1, num_tc_ - pairs_); ++u) {
        tc_[i] = pairs_ + u;
        choose_core(i + 1, used_pairs, std::max(used_tc, u + 1), used_vc);
      }
    } else {
      for (int c = 0; c < max_pair; ++c) {
        vc_[i] = c;
        choose_core(i + 1, std::max(used_pairs, c + 1), used_tc, used_vc);
      }
      for (int u = 0; u < std::min(used_vc + 1, num_vc_ - pairs_); ++u) {
        vc_[i] = pairs_ + u;
        choose_core(i + 1, used_pairs, used_tc, std::max(used_vc, u + 1));
      }
    }
    tc_[i] = vc_[i] = -1;
  }

  bool conflict(int i, int j) const {
    if (intra_[i] || intra_[j]) return true;
    if (uses_tc(i) && uses_tc(j) && tc_[i] == tc_[j]) return true;
    if (uses_vc(i) && uses_vc(j) && vc_[i] == vc_[j]) return true;
    return false;
  }

  void orient() {
    pending_.clear();
    for (int i = 0; i < n_; ++i) {
      for (int j = i + 1; j < n_; ++j) {
        if (conflict(i, j) && !reach_[i][j] && !reach_[j][i]) pending_.emplace_back(i, j);
      }
    }
    std::vector<std::vector<bool>> arc = base_arcs();
    // Precedence-ordered conflicting pairs are already serialized by the arcs.
    branch(0, arc);
  }

  bool path(const std::vector<std::vector<bool>>& arc, int from, int to) const {
    std::vector<bool> seen(n_, false);
    std::vector<int> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (u == to) return true;
      for (int v = 0; v < n_; ++v) {
        if (arc[u][v] && !seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    return false;
  }

  void branch(std::size_t k, std::vector<std::vector<bool>>& arc) {
    const Tick lb = makespan(arc);
    if (lb >= best_) return;
    if (k == pending_.size()) {
      best_ = lb;
      return;
    }
    const auto [i, j] = pending_[k];
    for (int dir = 0; dir < 2; ++dir) {
      const int a = dir == 0 ? i : j;
      const int b = dir == 0 ? j : i;
      if (path(arc, b, a)) continue;
      const bool had = arc[a][b];
      arc[a][b] = true;
      branch(k + 1, arc);
      arc[a][b] = had;
    }
  }

  int n_;
  std::vector<OperatorEstimate> est_;
  int num_tc_, num_vc_, pairs_;
  std::vector<OpKind> kind_;
  std::vector<std::vector<bool>> reach_;
  std::vector<Edge> edges_;
  std::vector<bool> intra_;
  std::vector<int> tc_, vc_;
  std::vector<std::pair<int, int>> pending_;
  Tick best_ = 0;
};

Tick ceil_div_i128(__int128 a, __int128 b) { return static_cast<Tick>((a + b - 1) / b); }

}  // namespace

Tick ilp_oracle(const OperatorGraph& g, const std::vector<OperatorEstimate>& est, int num_tc, int num_vc) {
  return IlpOracle(g, est, num_tc, num_vc).run();
}

bool dp_oracle(const PlacementProblem& p, const PlacementOptions& options, PlacementChoice& best) {
  bool found = false;
  std::vector<bool> modes;
  if (options.recompute != RecomputePolicy::On) modes.push_back(false);
  if (options.recompute != RecomputePolicy::Off) modes.push_back(true);
  const int K = p.num_accelerators;
  const int B = p.minibatch;

  auto better = [&](const PlacementChoice& a, const PlacementChoice& b) {
    const __int128 lhs = static_cast<__int128>(B) * a.b * b.F;
    const __int128 rhs = static_cast<__int128>(B) * b.b * a.F;
    if (lhs != rhs) return lhs > rhs;
    return std::tie(a.hbm, a.d, a.s, a.t, a.b, a.recompute, a.lengths) <
           std::tie(b.hbm, b.d, b.s, b.t, b.b, b.recompute, b.lengths);
  };

  for (std::size_t vi = 0; vi < p.variants.size(); ++vi) {
    const VariantCosts& v = p.variants[vi];
    const auto& L = v.layers;
    const int n = static_cast<int>(L.size());
    for (Bytes hbm : p.hbm_candidates) {
      for (bool rc : modes) {
        for (int d = 1; d <= std::min(K, B); ++d) {
          if (K % d != 0 || B % d != 0) continue;
          if (options.force_d && *options.force_d != d) continue;
          for (int s = 1; s <= n; ++s) {
            if (options.force_s && *options.force_s != s) continue;
            // Every composition of n into s positive parts.
            std::vector<int> lengths(s, 1);
            std::function<void(int, int)> compose = [&](int q, int left) {
              if (q == s - 1) {
                lengths[q] = left;
                PlacementChoice c;
                c.variant = vi;
                c.hbm = hbm;
                c.d = d;
                c.s = s;
                c.recompute = rc;
                c.lengths = lengths;
                c.t = v.t;
                c.b = v.b;
                int first = 0, accel = 0;
                for (int st = 0; st < s; ++st) {
                  const int last = first + lengths[st];
                  const bool is_last = st == s - 1;
                  const bool stage_rc = rc && !is_last;
                  bool sliced = false;
                  Tick fw = 0, bw = 0;
                  Bytes steady = 0, act = 0;
                  for (int i = first; i < last; ++i) {
                    sliced = sliced || L[i].sliceable;
                    fw += L[i].fw;
                    bw += L[i].bw;
                    steady += 2 * L[i].weights + L[i].optimizer + L[i].activations;
                    act += L[i].activations;
                  }
                  accel += sliced ? v.t : 1;
                  const Tick load = ceil_div_i128(L[first].input_edge, p.bandwidth) + fw + bw + (stage_rc ? fw : 0);
                  const Bytes stash = stage_rc ? L[first].input_edge : act;
                  const std::int64_t in_flight =
                      options.schedule == PipelineSchedule::GPipe ? B / d : s - st - 1;
                  if (static_cast<__int128>(steady) + static_cast<__int128>(in_flight) * stash > hbm) return;
                  c.max_load = std::max(c.max_load, load);
                  first = last;
                }
                if (accel > K / d) return;
                Bytes w = 0;
                for (int i = 0; i < lengths[0]; ++i) w += L[i].weights;
                c.sync = d == 1 ? 0 : ceil_div_i128(static_cast<__int128>(w) * (d - 1) * 4,
                                                    static_cast<__int128>(d) * p.bandwidth);
                c.F = (B / d + s - 1) * c.max_load + c.sync;
                if (!found || better(c, best)) {
                  best = c;
                  found = true;
                }
                return;
              }
              for (int len = 1; len <= left - (s - 1 - q); ++len) {
                lengths[q] = len;
                compose(q + 1, left - len);
              }
            };
            compose(0, n);
          }
        }
      }
    }
  }
  return found;
}

Tick simulate_pipeline(std::int64_t microbatches, int stages, Tick load) {
  std::vector<Tick> done(stages, 0);  // finish time of the previous microbatch per stage
  for (std::int64_t m = 0; m < microbatches; ++m) {
    Tick ready = 0;
    for (int q = 0; q < stages; ++q) {
      const Tick start = std::max(ready, done[q]);
      done[q] = start + load;
      ready = done[q];
    }
  }
  return stages == 0 ? 0 : done[stages - 1];
}

LpModel read_lp(const std::string& text) {
  LpModel m;
  std::istringstream in(text);
  std::string line, section, pending;
  auto note = [&](const std::string& name) {
    if (std::find(m.variables.begin(), m.variables.end(), name) == m.variables.end()) m.variables.push_back(name);
  };
  auto is_number = [](const std::string& t) {
    return !t.empty() && (std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '-');
  };
  auto flush_row = [&]() {
    std::istringstream ts(pending);
    std::vector<std::string> tok;
    for (std::string t; ts >> t;) tok.push_back(t);
    pending.clear();
    if (tok.empty()) return;
    LpModel::Row r;
    r.name = tok[0].substr(0, tok[0].size() - 1);
    std::int64_t sign = 1, coef = 1;
    for (std::size_t k = 1; k < tok.size(); ++k) {
      const std::string& t = tok[k];
      if (t == "+") {
        sign = 1;
      } else if (t == "-") {
        sign = -1;
      } else if (t == "<=" || t == ">=" || t == "=") {
        r.sense = t;
        r.rhs = std::stoll(tok.at(k + 1));
        break;
      } else if (is_number(t)) {
        coef = std::stoll(t);
      } else {
        r.terms.emplace_back(t, sign * coef);
        note(t);
        sign = 1;
        coef = 1;
      }
    }
    m.rows.push_back(std::move(r));
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '\\') continue;
    if (line == "Minimize" || line == "Subject To" || line == "Bounds" || line == "Binaries" || line == "End") {
      if (!pending.empty()) flush_row();
      section = line;
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (section == "Minimize") {
      m.objective_var = tok.back();
      note(tok.back());
    } else if (section == "Subject To") {
      // A new row starts with "name:"; continuation lines do not.
      if (tok[0].back() == ':' && !pending.empty()) flush_row();
      pending += " " + line;
    } else if (section == "Bounds") {
      if (tok.size() == 3 && tok[1] == "=") {
        m.fixed.emplace_back(tok[0], std::stoll(tok[2]));
        note(tok[0]);
      } else if (tok.size() == 3) {
        note(tok[0]);
      } else if (tok.size() == 5) {
        note(tok[2]);
      }
    } else if (section == "Binaries") {
      for (const std::string& t : tok) {
        m.binaries.push_back(t);
        note(t);
      }
    }
  }
  return m;
}

}  // namespace phaze::testing
