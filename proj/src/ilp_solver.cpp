// Branch and bound for the operator scheduling model.
//
// Operators are placed one at a time in non-decreasing start order, each at
// the earliest start compatible with the operators already placed. Every
// feasible schedule can be replayed this way without getting longer, so the
// search is exact. Equal starts must appear in increasing operator index,
// which removes reorderings of simultaneous starts.

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <tuple>

#include "phaze/schedule_ilp.hpp"

namespace phaze {

namespace {

using Clock = std::chrono::steady_clock;

struct Instance {
  int n = 0;
  std::vector<Tick> single, intra, shortest;
  std::vector<OpKind> kind;
  std::vector<std::vector<int>> preds, succs;
  std::vector<int> topo;
  std::vector<Tick> tail;  // longest path from i to a sink, own latency included
  bool tc_limited = false;
  bool vc_limited = false;
  // Effective core counts: cores an optimal schedule can possibly use.
  // Indices below `pairs` are the paired cores.
  int pairs = 0;
  int tc = 0;
  int vc = 0;
};

bool uses_tc(OpKind k) { return k != OpKind::Vector; }
bool uses_vc(OpKind k) { return k != OpKind::Tensor; }

Instance make_instance(const IlpModel& m) {
  Instance in;
  in.n = m.num_ops();
  const int n = in.n;
  for (const OperatorEstimate& e : m.estimates()) {
    in.single.push_back(e.single_core);
    in.intra.push_back(e.intra_op);
    in.shortest.push_back(std::min(e.single_core, e.intra_op));
  }
  in.kind = m.kinds();
  in.preds.assign(n, {});
  in.succs.assign(n, {});
  std::vector<int> indeg(n, 0);
  for (const Edge& e : m.edges()) {
    in.succs[e.first].push_back(e.second);
    in.preds[e.second].push_back(e.first);
    ++indeg[e.second];
  }
  for (int i = 0; i < n; ++i) {
    if (indeg[i] == 0) in.topo.push_back(i);
  }
  for (std::size_t k = 0; k < in.topo.size(); ++k) {
    for (int w : in.succs[in.topo[k]]) {
      if (--indeg[w] == 0) in.topo.push_back(w);
    }
  }
  in.tail.assign(n, 0);
  for (auto it = in.topo.rbegin(); it != in.topo.rend(); ++it) {
    Tick best = 0;
    for (int w : in.succs[*it]) best = std::max(best, in.tail[w]);
    in.tail[*it] = best + in.shortest[*it];
  }
  in.tc_limited = m.tc_family();
  in.vc_limited = m.vc_family();
  int n_tensor = 0, n_vector = 0;
  for (OpKind k : in.kind) {
    n_tensor += k == OpKind::Tensor;
    n_vector += k == OpKind::Vector;
  }
  in.pairs = std::min(m.num_pairs(), n);
  in.tc = in.pairs + std::min(m.num_tc() - m.num_pairs(), n_tensor);
  in.vc = in.pairs + std::min(m.num_vc() - m.num_pairs(), n_vector);
  return in;
}

struct Placement {
  Tick start = 0;
  bool intra = false;
  int core = -1;
};

// Time each core of the search state becomes free.
struct Cores {
  std::vector<Tick> tc, vc;
};

struct Child {
  int op;
  Placement p;
  Tick finish;
};

class Search {
 public:
  Search(const Instance& in, const SolveOptions& opt) : in_(in), opt_(opt) {}

  void run() {
    const int n = in_.n;
    deadline_ = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                   std::chrono::duration<double>(std::max(0.0, opt_.time_limit_seconds)));
    // All operators one after another, each in its faster mode.
    best_.assign(n, {});
    Tick t = 0;
    for (int i : in_.topo) {
      const bool intra = in_.intra[i] < in_.single[i];
      best_[i] = {t, intra, intra ? -1 : 0};
      t += in_.shortest[i];
    }
    best_T_ = t;

    State root;
    root.cores.tc.assign(in_.tc_limited ? in_.tc : 0, 0);
    root.cores.vc.assign(in_.vc_limited ? in_.vc : 0, 0);
    root.finish.assign(n, -1);
    root.waiting.resize(n);
    for (int i = 0; i < n; ++i) root.waiting[i] = static_cast<int>(in_.preds[i].size());
    cur_.assign(n, {});
    root_lb_ = lower_bound(root);
    if (n > 0 && root_lb_ < best_T_) dfs(root);
  }

  const std::vector<Placement>& best() const { return best_; }
  Tick best_makespan() const { return best_T_; }
  Tick root_lb() const { return root_lb_; }
  std::int64_t nodes() const { return nodes_; }
  bool stopped() const { return stopped_; }
  bool node_limited() const { return node_limited_; }

 private:
  struct State {
    Cores cores;
    std::vector<Tick> finish;  // -1 while unplaced
    std::vector<int> waiting;  // unplaced predecessors
    Tick barrier = 0;          // latest intra-op finish
    Tick max_finish = 0;
    Tick prev_start = 0;
    int prev_op = -1;
    int placed = 0;
  };

  Tick lower_bound(const State& s) {
    const int n = in_.n;
    const Tick floor = std::max(s.prev_start, s.barrier);
    Tick lb = s.max_finish;
    // Critical path with the faster mode of each operator.
    head_.assign(n, 0);
    for (int i : in_.topo) {
      if (s.finish[i] >= 0) continue;
      Tick e = floor;
      for (int p : in_.preds[i]) {
        e = std::max(e, s.finish[p] >= 0 ? s.finish[p] : head_[p] + in_.shortest[p]);
      }
      head_[i] = e;
      lb = std::max(lb, e + in_.tail[i]);
    }
    // Remaining work on each limited core type.
    auto capacity = [&](const std::vector<Tick>& free, bool (*uses)(OpKind)) {
      if (free.empty()) return Tick{0};
      const auto c = static_cast<__int128>(free.size());
      __int128 total = 0;
      bool any = false;
      for (Tick f : free) total += std::max(f, floor);
      for (int i = 0; i < n; ++i) {
        if (s.finish[i] >= 0 || !uses(in_.kind[i])) continue;
        any = true;
        total += std::min<__int128>(in_.single[i], c * in_.intra[i]);
      }
      return any ? ceil_div(total, c) : Tick{0};
    };
    lb = std::max(lb, capacity(s.cores.tc, uses_tc));
    lb = std::max(lb, capacity(s.cores.vc, uses_vc));
    return lb;
  }

  void children(const State& s, std::vector<Child>& out) const {
    out.clear();
    const int n = in_.n;
    for (int i = 0; i < n; ++i) {
      if (s.finish[i] >= 0 || s.waiting[i] != 0) continue;
      Tick est = std::max(s.prev_start, s.barrier);
      for (int p : in_.preds[i]) est = std::max(est, s.finish[p]);
      auto allowed = [&](Tick start) { return start != s.prev_start || i > s.prev_op; };

      if (in_.intra[i] < in_.single[i]) {
        const Tick start = std::max(est, s.max_finish);
        if (allowed(start)) out.push_back({i, {start, true, -1}, start + in_.intra[i]});
      }

      const OpKind k = in_.kind[i];
      const bool need_tc = uses_tc(k) && in_.tc_limited;
      const bool need_vc = uses_vc(k) && in_.vc_limited;
      if (!need_tc && !need_vc) {
        if (allowed(est)) out.push_back({i, {est, false, -1}, est + in_.single[i]});
        continue;
      }
      // Cores whose resulting states coincide once free times before the
      // start are clipped to it give identical subtrees; keep the first.
      std::vector<std::tuple<Tick, int, Tick>> seen;
      const int limit = k == OpKind::Fused ? in_.pairs : k == OpKind::Tensor ? in_.tc : in_.vc;
      for (int c = 0; c < limit; ++c) {
        Tick start = est;
        if (need_tc) start = std::max(start, s.cores.tc[c]);
        if (need_vc) start = std::max(start, s.cores.vc[c]);
        if (!allowed(start)) continue;
        int cls = c < in_.pairs ? 1 : 0;
        Tick partner = 0;
        if (k == OpKind::Tensor && cls == 1 && in_.vc_limited) partner = std::max(s.cores.vc[c], start);
        if (k == OpKind::Vector && cls == 1 && in_.tc_limited) partner = std::max(s.cores.tc[c], start);
        if (k == OpKind::Fused) {
          if (!need_tc && in_.tc_limited) partner = std::max(s.cores.tc[c], start);
          if (!need_vc && in_.vc_limited) partner = std::max(s.cores.vc[c], start);
        }
        const auto key = std::make_tuple(start, cls, partner);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        out.push_back({i, {start, false, c}, start + in_.single[i]});
      }
    }
    std::sort(out.begin(), out.end(), [](const Child& a, const Child& b) {
      return std::tie(a.finish, a.p.start, a.op, a.p.intra, a.p.core) <
             std::tie(b.finish, b.p.start, b.op, b.p.intra, b.p.core);
    });
  }

  State apply(const State& s, const Child& ch) const {
    State t = s;
    const int i = ch.op;
    t.finish[i] = ch.finish;
    for (int w : in_.succs[i]) --t.waiting[w];
    t.prev_start = ch.p.start;
    t.prev_op = i;
    t.max_finish = std::max(t.max_finish, ch.finish);
    ++t.placed;
    if (ch.p.intra) {
      t.barrier = ch.finish;
    } else if (ch.p.core >= 0) {
      if (uses_tc(in_.kind[i]) && in_.tc_limited) t.cores.tc[ch.p.core] = ch.finish;
      if (uses_vc(in_.kind[i]) && in_.vc_limited) t.cores.vc[ch.p.core] = ch.finish;
    }
    return t;
  }

  bool out_of_budget() {
    if (opt_.node_limit > 0 && nodes_ >= opt_.node_limit) {
      node_limited_ = true;
      return true;
    }
    if ((nodes_ & 255) == 0 && Clock::now() >= deadline_) return true;
    return false;
  }

  void dfs(const State& s) {
    if (stopped_) return;
    ++nodes_;
    if (out_of_budget()) {
      stopped_ = true;
      return;
    }
    if (s.placed == in_.n) {
      if (s.max_finish < best_T_) {
        best_T_ = s.max_finish;
        best_ = cur_;
      }
      return;
    }
    std::vector<Child> kids;
    children(s, kids);
    for (const Child& ch : kids) {
      if (stopped_ || best_T_ <= root_lb_) return;
      if (ch.finish >= best_T_) continue;
      State t = apply(s, ch);
      if (lower_bound(t) >= best_T_) continue;
      cur_[ch.op] = ch.p;
      dfs(t);
    }
  }

  const Instance& in_;
  SolveOptions opt_;
  Clock::time_point deadline_;
  std::vector<Placement> best_, cur_;
  std::vector<Tick> head_;
  Tick best_T_ = 0;
  Tick root_lb_ = 0;
  std::int64_t nodes_ = 0;
  bool stopped_ = false;
  bool node_limited_ = false;
};

// Pulls every operator as early as the realized conflicts allow, keeping the
// order of conflicting operators. Afterwards every positive start equals the
// finish of a predecessor or of a conflicting operator.
void compact(const Instance& in, std::vector<Placement>& pl) {
  const int n = in.n;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tie(pl[a].start, a) < std::tie(pl[b].start, b);
  });
  std::vector<Tick> finish(n, 0);
  auto dur = [&](int i) { return pl[i].intra ? in.intra[i] : in.single[i]; };
  auto conflicts = [&](int a, int b) {
    if (pl[a].intra || pl[b].intra) return true;
    if (pl[a].core < 0 || pl[a].core != pl[b].core) return false;
    const bool tc = uses_tc(in.kind[a]) && uses_tc(in.kind[b]) && in.tc_limited;
    const bool vc = uses_vc(in.kind[a]) && uses_vc(in.kind[b]) && in.vc_limited;
    return tc || vc;
  };
  for (int k = 0; k < n; ++k) {
    const int i = order[k];
    Tick start = 0;
    for (int p : in.preds[i]) start = std::max(start, finish[p]);
    for (int q = 0; q < k; ++q) {
      const int j = order[q];
      if (conflicts(i, j)) start = std::max(start, finish[j]);
    }
    pl[i].start = start;
    finish[i] = start + dur(i);
  }
}

// Assigns cores of the unconstrained types to a fixed schedule. With
// `keep_other` the remaining types keep the cores the search chose and fused
// operators must use the same index on both types; otherwise the remaining
// types are ignored. Returns false when no assignment exists within the real
// core counts.
bool assign_cores(const Instance& in, int num_tc, int num_vc, bool do_tc, bool do_vc, bool keep_other,
                  std::vector<Placement>& pl, std::int64_t budget = 200000) {
  const int n = in.n;
  const int pairs = std::min(num_tc, num_vc);
  int n_tensor = 0, n_vector = 0;
  for (OpKind k : in.kind) {
    n_tensor += k == OpKind::Tensor;
    n_vector += k == OpKind::Vector;
  }
  const int eff_pairs = std::min(pairs, n);
  const int tc = eff_pairs + std::min(num_tc - pairs, n_tensor);
  const int vc = eff_pairs + std::min(num_vc - pairs, n_vector);

  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    if (!pl[i].intra) order.push_back(i);
  }
  auto dur = [&](int i) { return in.single[i]; };
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::tie(pl[a].start, a) < std::tie(pl[b].start, b); });

  std::vector<int> todo;
  for (int i : order) {
    const OpKind k = in.kind[i];
    if ((uses_tc(k) && do_tc) || (uses_vc(k) && do_vc)) todo.push_back(i);
  }
  std::vector<Tick> tc_free(tc, 0), vc_free(vc, 0);
  std::vector<int> chosen(n, -1);
  std::int64_t steps = 0;

  std::function<bool(std::size_t)> go = [&](std::size_t k) -> bool {
    if (k == todo.size()) return true;
    if (++steps > budget) return false;
    const int i = todo[k];
    const OpKind kd = in.kind[i];
    const Tick s = pl[i].start, f = s + dur(i);
    const bool a_tc = uses_tc(kd) && do_tc;
    const bool a_vc = uses_vc(kd) && do_vc;
    const bool f_tc = uses_tc(kd) && !do_tc && keep_other;
    const bool f_vc = uses_vc(kd) && !do_vc && keep_other;
    std::vector<std::tuple<int, Tick, Tick>> seen;
    int lo = 0, hi = kd == OpKind::Fused ? eff_pairs : kd == OpKind::Tensor ? tc : vc;
    if (f_tc || f_vc) {
      // The constrained half already fixed the index.
      lo = pl[i].core;
      hi = lo + 1;
      if (lo < 0 || (kd == OpKind::Fused && lo >= eff_pairs)) return false;
    }
    for (int c = lo; c < hi; ++c) {
      if (a_tc && tc_free[c] > s) continue;
      if (a_vc && vc_free[c] > s) continue;
      if (!(f_tc || f_vc)) {
        // Free cores of one class are interchangeable.
        const int cls = c < eff_pairs ? 1 : 0;
        Tick partner_tc = 0, partner_vc = 0;
        if (cls == 1 && !a_tc && c < tc) partner_tc = std::max(tc_free[c], s);
        if (cls == 1 && !a_vc && c < vc) partner_vc = std::max(vc_free[c], s);
        const auto key = std::make_tuple(cls, partner_tc, partner_vc);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
      }
      const Tick old_tc = a_tc ? tc_free[c] : 0;
      const Tick old_vc = a_vc ? vc_free[c] : 0;
      if (a_tc) tc_free[c] = f;
      if (a_vc) vc_free[c] = f;
      chosen[i] = c;
      if (go(k + 1)) return true;
      if (a_tc) tc_free[c] = old_tc;
      if (a_vc) vc_free[c] = old_vc;
    }
    chosen[i] = -1;
    return false;
  };
  if (!go(0)) return false;
  for (int i : todo) pl[i].core = chosen[i];
  return true;
}

LayerSchedule to_schedule(const IlpModel& m, const Instance& in, const std::vector<Placement>& pl) {
  LayerSchedule s;
  s.families = m.with_z();
  s.ops.resize(in.n);
  for (int i = 0; i < in.n; ++i) {
    ScheduledOp& o = s.ops[i];
    o.id = m.op_ids()[i];
    o.start = pl[i].start;
    o.intra_op = pl[i].intra;
    o.duration = pl[i].intra ? in.intra[i] : in.single[i];
    o.core = pl[i].intra ? -1 : pl[i].core;
    s.makespan = std::max(s.makespan, o.finish());
  }
  return s;
}

struct RawSolve {
  LayerSchedule schedule;
  std::vector<Placement> placements;
  bool assigned = true;  // every single-core operator has a core
};

RawSolve solve_raw(const IlpModel& m, const SolveOptions& options) {
  const Instance in = make_instance(m);
  Search search(in, options);
  search.run();
  std::vector<Placement> pl = search.best();
  compact(in, pl);
  RawSolve out;
  const bool do_tc = !in.tc_limited;
  const bool do_vc = !in.vc_limited;
  if (do_tc || do_vc) {
    out.assigned = assign_cores(in, m.num_tc(), m.num_vc(), do_tc, do_vc, true, pl);
    if (!out.assigned) {
      for (int i = 0; i < in.n; ++i) {
        const OpKind k = in.kind[i];
        if ((uses_tc(k) && do_tc) || (uses_vc(k) && do_vc)) pl[i].core = -1;
      }
    }
  }
  out.placements = pl;
  out.schedule = to_schedule(m, in, pl);
  LayerSchedule& s = out.schedule;
  s.nodes = search.nodes();
  if (!search.stopped()) {
    s.status = SolveStatus::Optimal;
    s.lower_bound = s.makespan;
  } else {
    s.status = search.node_limited() ? SolveStatus::NodeLimit : SolveStatus::TimeLimit;
    s.lower_bound = std::min(search.root_lb(), s.makespan);
    if (s.lower_bound == s.makespan) s.status = SolveStatus::Optimal;
  }
  return out;
}

}  // namespace

LayerSchedule solve(const IlpModel& m, const SolveOptions& options) { return solve_raw(m, options).schedule; }

LayerSchedule solve_lazy(const OperatorGraph& g, const std::vector<OperatorEstimate>& est,
                         const AcceleratorConfig& cfg, const SolveOptions& options) {
  const auto t0 = Clock::now();
  std::int64_t nodes = 0;
  auto remaining = [&]() {
    SolveOptions o = options;
    const double used = std::chrono::duration<double>(Clock::now() - t0).count();
    o.time_limit_seconds = std::max(0.0, options.time_limit_seconds - used);
    return o;
  };
  auto finish = [&](RawSolve r, int invocations) {
    r.schedule.invocations = invocations;
    r.schedule.nodes += nodes;
    return r.schedule;
  };

  const IlpModel relaxed = IlpModel::build(g, est, cfg, ZFamilies::None);
  RawSolve first = solve_raw(relaxed, remaining());
  if (first.assigned) return finish(std::move(first), 1);
  nodes += first.schedule.nodes;

  // Which core types does the relaxed schedule overload on its own?
  const Instance in = make_instance(relaxed);
  std::vector<Placement> probe = first.placements;
  const bool tc_ok = assign_cores(in, cfg.num_tc, cfg.num_vc, true, false, false, probe);
  probe = first.placements;
  const bool vc_ok = assign_cores(in, cfg.num_tc, cfg.num_vc, false, true, false, probe);
  ZFamilies add = ZFamilies::Both;
  if (!tc_ok && vc_ok) add = ZFamilies::TensorOnly;
  if (tc_ok && !vc_ok) add = ZFamilies::VectorOnly;
  // Both types fit separately but not with shared pair indices: only the
  // full model can decide.

  if (add != ZFamilies::Both) {
    const IlpModel partial = IlpModel::build(g, est, cfg, add);
    RawSolve second = solve_raw(partial, remaining());
    if (second.assigned) return finish(std::move(second), 2);
    nodes += second.schedule.nodes;
    const IlpModel full = IlpModel::build(g, est, cfg, ZFamilies::Both);
    return finish(solve_raw(full, remaining()), 3);
  }
  const IlpModel full = IlpModel::build(g, est, cfg, ZFamilies::Both);
  return finish(solve_raw(full, remaining()), 2);
}

}  // namespace phaze
