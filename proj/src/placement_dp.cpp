#include "phaze/placement_dp.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "phaze/costmodel.hpp"

namespace phaze {

const char* to_string(PipelineSchedule s) { return s == PipelineSchedule::GPipe ? "gpipe" : "pipedream-flush"; }

const char* to_string(RecomputePolicy r) {
  switch (r) {
    case RecomputePolicy::Auto: return "auto";
    case RecomputePolicy::On: return "on";
    case RecomputePolicy::Off: return "off";
  }
  return "?";
}

RecomputePolicy recompute_policy_from_string(const std::string& s) {
  if (s == "auto") return RecomputePolicy::Auto;
  if (s == "on") return RecomputePolicy::On;
  if (s == "off") return RecomputePolicy::Off;
  throw ValidationError("recompute policy must be auto, on or off, got '" + s + "'");
}

namespace {

void check_range(const std::vector<LayerCost>& layers, int first, int last) {
  if (first < 0 || last > static_cast<int>(layers.size()) || first >= last) {
    throw ValidationError("stage range [" + std::to_string(first) + ", " + std::to_string(last) + ") is invalid");
  }
}

std::int64_t add(std::int64_t a, std::int64_t b) { return checked_narrow(static_cast<__int128>(a) + b); }

}  // namespace

Tick stage_latency(const std::vector<LayerCost>& layers, int first, int last, bool recompute, StagePosition pos,
                   std::int64_t bandwidth) {
  check_range(layers, first, last);
  Tick fw = 0, bw = 0;
  for (int i = first; i < last; ++i) {
    fw = add(fw, layers[i].fw);
    bw = add(bw, layers[i].bw);
  }
  Tick total = add(transfer_ticks(layers[first].input_edge, bandwidth), add(fw, bw));
  if (recompute && pos == StagePosition::NotLast) total = add(total, fw);
  return total;
}

Bytes stashed_data(const std::vector<LayerCost>& layers, int first, int last, bool recompute) {
  check_range(layers, first, last);
  if (recompute) return layers[first].input_edge;
  Bytes act = 0;
  for (int i = first; i < last; ++i) act = add(act, layers[i].activations);
  return act;
}

namespace {

Bytes steady_memory(const std::vector<LayerCost>& layers, int first, int last) {
  Bytes m = 0;
  for (int i = first; i < last; ++i) {
    const LayerCost& l = layers[i];
    m = checked_narrow(static_cast<__int128>(m) + 2 * static_cast<__int128>(l.weights) + l.optimizer + l.activations);
  }
  return m;
}

int max_stages(Bytes steady, Bytes stash, Bytes hbm) {
  if (steady > hbm) return 0;
  if (stash == 0) return kUnboundedStages;
  const __int128 extra = (static_cast<__int128>(hbm) - steady) / stash;
  return static_cast<int>(std::min<__int128>(kUnboundedStages, 1 + extra));
}

}  // namespace

Bytes stage_memory(const std::vector<LayerCost>& layers, int first, int last, std::int64_t in_flight,
                   bool recompute) {
  check_range(layers, first, last);
  if (in_flight < 0) throw ValidationError("negative in-flight microbatch count");
  return checked_narrow(static_cast<__int128>(steady_memory(layers, first, last)) +
                        static_cast<__int128>(in_flight) * stashed_data(layers, first, last, recompute));
}

StageLoad stage_load(const std::vector<LayerCost>& layers, int first, int last, bool recompute, StagePosition pos,
                     std::int64_t bandwidth, Bytes hbm) {
  StageLoad out;
  out.latency = stage_latency(layers, first, last, recompute, pos, bandwidth);
  const bool stage_recomputes = recompute && pos == StagePosition::NotLast;
  out.max_s = max_stages(steady_memory(layers, first, last), stashed_data(layers, first, last, stage_recomputes), hbm);
  return out;
}

int stage_accelerators(const std::vector<LayerCost>& layers, int first, int last, int t) {
  check_range(layers, first, last);
  for (int i = first; i < last; ++i) {
    if (layers[i].sliceable) return t;
  }
  return 1;
}

DpTable::DpTable(int layers, int k_max, int s_max) : n_(layers), k_max_(k_max), s_max_(s_max) {
  data_.assign(static_cast<std::size_t>(n_ + 1) * (k_max_ + 1) * (s_max_ + 1), kInfTicks);
}

namespace {

// Stage quantities for every (first layer, length), both positions.
class StageTable {
 public:
  StageTable(const VariantCosts& v, bool recompute, const StageParams& p) : n_(static_cast<int>(v.layers.size())) {
    const std::size_t cells = static_cast<std::size_t>(n_) * (n_ + 1);
    lat_.assign(2 * cells, 0);
    fit_.assign(2 * cells, 0);
    acc_.assign(cells, 1);
    weights_.assign(cells, 0);
    for (int i = 0; i < n_; ++i) {
      for (int len = 1; i + len <= n_; ++len) {
        acc_[cell(i, len)] = stage_accelerators(v.layers, i, i + len, v.t);
        Bytes w = 0;
        for (int q = i; q < i + len; ++q) w = add(w, v.layers[q].weights);
        weights_[cell(i, len)] = w;
        for (int last = 0; last < 2; ++last) {
          const StagePosition pos = last ? StagePosition::Last : StagePosition::NotLast;
          const std::size_t c = 2 * cell(i, len) + last;
          if (p.schedule == PipelineSchedule::PipeDreamFlush) {
            const StageLoad sl = stage_load(v.layers, i, i + len, recompute, pos, p.bandwidth, p.hbm);
            lat_[c] = sl.latency;
            fit_[c] = sl.max_s;
          } else {
            lat_[c] = stage_latency(v.layers, i, i + len, recompute, pos, p.bandwidth);
            const bool rc = recompute && pos == StagePosition::NotLast;
            fit_[c] = stage_memory(v.layers, i, i + len, p.gpipe_in_flight, rc) <= p.hbm ? kUnboundedStages : 0;
          }
        }
      }
    }
  }

  Tick latency(int i, int len, bool last) const { return lat_[2 * cell(i, len) + last]; }
  bool fits(int i, int len, bool last, int s) const { return s <= fit_[2 * cell(i, len) + last]; }
  int max_s(int i, int len, bool last) const { return fit_[2 * cell(i, len) + last]; }
  int accelerators(int i, int len) const { return acc_[cell(i, len)]; }
  Bytes weights(int i, int len) const { return weights_[cell(i, len)]; }

 private:
  std::size_t cell(int i, int len) const { return static_cast<std::size_t>(i) * (n_ + 1) + len; }
  int n_;
  std::vector<Tick> lat_;
  std::vector<int> fit_;
  std::vector<int> acc_;
  std::vector<Bytes> weights_;
};

int table_k(int k_max, int s_max, int t) {
  return static_cast<int>(std::min<std::int64_t>(k_max, static_cast<std::int64_t>(s_max) * std::max(t, 1)));
}

void fill(DpTable& dp, const StageTable& st, int n) {
  for (int k = 0; k <= dp.k_max(); ++k) dp.at(0, k, 0) = 0;
  for (int j = 1; j <= n; ++j) {
    const int i = n - j;  // the new first stage starts at layer i
    for (int k = 1; k <= dp.k_max(); ++k) {
      for (int s = 1; s <= std::min({dp.s_max(), j, k}); ++s) {
        Tick best = kInfTicks;
        for (int len = 1; len <= j; ++len) {
          const int a = st.accelerators(i, len);
          if (a > k) continue;
          const Tick rest = dp.at(j - len, k - a, s - 1);
          if (rest >= kInfTicks) continue;
          const bool last = len == j;
          if (!st.fits(i, len, last, s)) continue;
          best = std::min(best, std::max(rest, st.latency(i, len, last)));
        }
        dp.at(j, k, s) = best;
      }
    }
  }
}

struct Candidate {
  std::size_t variant = 0;
  Bytes hbm = 0;
  int d = 1, s = 1;
  bool recompute = false;
  Tick F = kInfTicks;
};

// b1 / F1 > b2 / F2 for the same B.
bool faster(int b1, Tick f1, int b2, Tick f2) {
  return static_cast<__int128>(b1) * f2 > static_cast<__int128>(b2) * f1;
}

std::vector<int> common_divisors(int K, int B) {
  std::vector<int> out;
  for (int d = 1; d <= std::min(K, B); ++d) {
    if (K % d == 0 && B % d == 0) out.push_back(d);
  }
  return out;
}

Tick combine(std::int64_t factor, Tick max_load, Tick sync) {
  return checked_narrow(static_cast<__int128>(factor) * max_load + sync);
}

}  // namespace

DpTable dp_solve(const VariantCosts& v, int k_max, bool recompute, const StageParams& params) {
  const int n = static_cast<int>(v.layers.size());
  if (n == 0) throw ValidationError("workload has no layers");
  if (k_max < 1) throw ValidationError("at least one accelerator per pipeline is required");
  const int s_max = std::min(k_max, n);
  StageTable st(v, recompute, params);
  DpTable dp(n, k_max, s_max);
  fill(dp, st, n);
  return dp;
}

std::vector<int> PlacementSolution::stage_lengths() const {
  std::vector<int> out;
  for (const StageReport& r : stages) out.push_back(r.count);
  return out;
}

bool higher_throughput(const PlacementSolution& a, const PlacementSolution& b) {
  return faster(a.b, a.F, b.b, b.F);
}

PlacementSolution final_time_per_batch(const PlacementProblem& p, const PlacementOptions& options) {
  if (p.variants.empty()) throw ValidationError("placement problem has no variants");
  if (p.num_accelerators < 1 || p.minibatch < 1 || p.bandwidth <= 0 || p.hbm_candidates.empty()) {
    throw ValidationError("placement problem needs K >= 1, B >= 1, positive bandwidth and an HBM candidate");
  }
  const int n = static_cast<int>(p.variants.front().layers.size());
  for (const VariantCosts& v : p.variants) {
    if (static_cast<int>(v.layers.size()) != n || n == 0) {
      throw ValidationError("every variant must list the same non-zero number of layers");
    }
  }
  std::vector<std::size_t> vorder(p.variants.size());
  for (std::size_t q = 0; q < vorder.size(); ++q) vorder[q] = q;
  std::sort(vorder.begin(), vorder.end(), [&](std::size_t a, std::size_t b) {
    return std::make_pair(p.variants[a].t, p.variants[a].b) < std::make_pair(p.variants[b].t, p.variants[b].b);
  });
  std::vector<Bytes> hbms = p.hbm_candidates;
  std::sort(hbms.begin(), hbms.end());
  hbms.erase(std::unique(hbms.begin(), hbms.end()), hbms.end());
  std::vector<bool> modes;
  if (options.recompute != RecomputePolicy::On) modes.push_back(false);
  if (options.recompute != RecomputePolicy::Off) modes.push_back(true);
  std::vector<int> ds = common_divisors(p.num_accelerators, p.minibatch);
  if (options.force_d) ds.erase(std::remove_if(ds.begin(), ds.end(), [&](int d) { return d != *options.force_d; }),
                                ds.end());

  const auto key = [&](const Candidate& c) {
    return std::make_tuple(c.hbm, c.d, c.s, p.variants[c.variant].t, p.variants[c.variant].b, c.recompute);
  };
  std::optional<Candidate> best;
  auto consider = [&](const Candidate& c) {
    if (c.F >= kInfTicks) return;
    if (!best) {
      best = c;
      return;
    }
    const int bc = p.variants[c.variant].b, bb = p.variants[best->variant].b;
    if (faster(bc, c.F, bb, best->F)) {
      best = c;
    } else if (!faster(bb, best->F, bc, c.F) && key(c) < key(*best)) {
      best = c;
    }
  };

  // The best first stage of an s-stage pipeline with d replicas, given a
  // filled table. Returns (F, first stage length).
  auto top = [&](const DpTable& dp, const StageTable& st, int d, int s) {
    std::pair<Tick, int> res{kInfTicks, 0};
    const int kb = p.num_accelerators / d;
    const std::int64_t factor = p.minibatch / d + s - 1;
    for (int len = 1; len <= n; ++len) {
      const int a = st.accelerators(0, len);
      if (a > kb) continue;
      const int rk = std::min(kb - a, dp.k_max());
      const Tick rest = dp.at(n - len, rk, s - 1);
      if (rest >= kInfTicks) continue;
      const bool last = len == n;
      if (!st.fits(0, len, last, s)) continue;
      const Tick mx = std::max(rest, st.latency(0, len, last));
      const Tick F = combine(factor, mx, allreduce_ticks(st.weights(0, len), d, p.bandwidth));
      if (F < res.first) res = {F, len};
    }
    return res;
  };

  auto params_for = [&](Bytes hbm, int d) {
    StageParams sp;
    sp.bandwidth = p.bandwidth;
    sp.hbm = hbm;
    sp.schedule = options.schedule;
    sp.gpipe_in_flight = p.minibatch / d;
    return sp;
  };

  auto run_table = [&](const VariantCosts& v, bool rc, Bytes hbm, int d, int k_max, auto&& visit) {
    const StageParams sp = params_for(hbm, d);
    StageTable st(v, rc, sp);
    const int s_max = std::min(k_max, n);
    DpTable dp(n, table_k(k_max, s_max, v.t), s_max);
    fill(dp, st, n);
    visit(dp, st);
  };

  for (Bytes hbm : hbms) {
    for (std::size_t vi : vorder) {
      const VariantCosts& v = p.variants[vi];
      for (bool rc : modes) {
        auto scan = [&](int d, const DpTable& dp, const StageTable& st) {
          const int kb = p.num_accelerators / d;
          for (int s = 1; s <= std::min(kb, n); ++s) {
            if (options.force_s && s != *options.force_s) continue;
            consider({vi, hbm, d, s, rc, top(dp, st, d, s).first});
          }
        };
        if (options.schedule == PipelineSchedule::PipeDreamFlush) {
          // One table serves every d: entries only depend on the budget k.
          run_table(v, rc, hbm, 1, p.num_accelerators, [&](const DpTable& dp, const StageTable& st) {
            for (int d : ds) scan(d, dp, st);
          });
        } else {
          for (int d : ds) {
            run_table(v, rc, hbm, d, p.num_accelerators / d,
                      [&](const DpTable& dp, const StageTable& st) { scan(d, dp, st); });
          }
        }
      }
    }
  }
  if (!best) throw InfeasibleError("no placement fits any HBM candidate");

  // Rebuild the winning table and recover the lexicographically smallest
  // partition achieving the optimum.
  const Candidate c = *best;
  const VariantCosts& v = p.variants[c.variant];
  PlacementSolution sol;
  sol.t = v.t;
  sol.d = c.d;
  sol.s = c.s;
  sol.b = v.b;
  sol.recompute = c.recompute;
  sol.hbm = c.hbm;
  sol.schedule = options.schedule;
  sol.F = c.F;
  sol.samples = static_cast<std::int64_t>(p.minibatch) * v.b;
  sol.flush_factor = p.minibatch / c.d + c.s - 1;
  sol.throughput = c.F > 0 ? static_cast<double>(sol.samples) / static_cast<double>(c.F) : 0.0;
  const int kb = p.num_accelerators / c.d;
  run_table(v, c.recompute, c.hbm, c.d, options.schedule == PipelineSchedule::GPipe ? kb : p.num_accelerators,
            [&](const DpTable& dp, const StageTable& st) {
              const auto [F, len1] = top(dp, st, c.d, c.s);
              if (F != c.F) throw Error("placement reconstruction mismatch");
              std::vector<int> lens{len1};
              sol.sync_ticks = allreduce_ticks(st.weights(0, len1), c.d, p.bandwidth);
              const Tick limit = (c.F - sol.sync_ticks) / sol.flush_factor;
              int pos = len1;
              int k = kb - st.accelerators(0, len1);
              for (int s = c.s - 1; s >= 1; --s) {
                const int j = n - pos;
                int chosen = 0;
                for (int len = 1; len <= j; ++len) {
                  const int a = st.accelerators(pos, len);
                  if (a > k) continue;
                  const bool last = len == j;
                  if (!st.fits(pos, len, last, s) || st.latency(pos, len, last) > limit) continue;
                  if (dp.at(j - len, std::min(k - a, dp.k_max()), s - 1) > limit) continue;
                  chosen = len;
                  break;
                }
                if (chosen == 0) throw Error("placement reconstruction found no stage");
                lens.push_back(chosen);
                k -= st.accelerators(pos, chosen);
                pos += chosen;
              }
              int first = 0;
              Tick mx = 0;
              for (int q = 0; q < c.s; ++q) {
                StageReport r;
                r.first = first;
                r.count = lens[q];
                r.first_id = v.layers[first].id;
                r.last_id = v.layers[first + lens[q] - 1].id;
                const bool last = q == c.s - 1;
                r.accelerators = st.accelerators(first, lens[q]);
                r.load = st.latency(first, lens[q], last);
                r.recompute = c.recompute && !last;
                const std::int64_t in_flight =
                    options.schedule == PipelineSchedule::GPipe ? p.minibatch / c.d : c.s - q - 1;
                r.memory = stage_memory(v.layers, first, first + lens[q], in_flight, r.recompute);
                r.max_s = options.schedule == PipelineSchedule::PipeDreamFlush
                              ? st.max_s(first, lens[q], last)
                              : (r.memory <= c.hbm ? kUnboundedStages : 0);
                mx = std::max(mx, r.load);
                sol.stages.push_back(r);
                first += lens[q];
              }
              sol.max_load = mx;
            });
  return sol;
}

std::string explain(const PlacementSolution& s) {
  std::ostringstream os;
  os << "placement: t=" << s.t << " d=" << s.d << " s=" << s.s << " b=" << s.b
     << " recompute=" << (s.recompute ? "on" : "off") << " schedule=" << to_string(s.schedule) << " hbm=" << s.hbm
     << "\n";
  os << "time per batch F=" << s.F << " ticks (flush factor " << s.flush_factor << " x max load " << s.max_load
     << " + sync " << s.sync_ticks << "), throughput " << s.samples << "/" << s.F << " samples per tick\n";
  std::vector<std::vector<std::string>> rows{{"stage", "layers", "accel", "load", "memory", "max_s", "recompute"}};
  for (std::size_t q = 0; q < s.stages.size(); ++q) {
    const StageReport& r = s.stages[q];
    rows.push_back({std::to_string(q + 1), r.first_id + ".." + r.last_id + " (" + std::to_string(r.count) + ")",
                    std::to_string(r.accelerators), std::to_string(r.load), std::to_string(r.memory),
                    r.max_s >= kUnboundedStages ? std::string("inf") : std::to_string(r.max_s),
                    r.recompute ? "yes" : "no"});
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << row[c];
      if (c + 1 < row.size()) os << std::string(width[c] - row[c].size() + 2, ' ');
    }
    os << "\n";
  }
  return os.str();
}

std::string solution_to_json(const PlacementSolution& s, int indent) {
  nlohmann::ordered_json j;
  j["t"] = s.t;
  j["d"] = s.d;
  j["s"] = s.s;
  j["b"] = s.b;
  j["recompute"] = s.recompute;
  j["hbm_bytes"] = s.hbm;
  j["schedule"] = to_string(s.schedule);
  j["F"] = s.F;
  j["max_load"] = s.max_load;
  j["flush_factor"] = s.flush_factor;
  j["sync_ticks"] = s.sync_ticks;
  j["samples_per_batch"] = s.samples;
  j["throughput"] = s.throughput;
  auto stages = nlohmann::ordered_json::array();
  for (const StageReport& r : s.stages) {
    nlohmann::ordered_json e;
    e["first_layer"] = r.first_id;
    e["last_layer"] = r.last_id;
    e["layers"] = r.count;
    e["accelerators"] = r.accelerators;
    e["load"] = r.load;
    e["memory_bytes"] = r.memory;
    if (r.max_s >= kUnboundedStages) {
      e["max_s"] = nullptr;
    } else {
      e["max_s"] = r.max_s;
    }
    e["recompute"] = r.recompute;
    stages.push_back(std::move(e));
  }
  j["stages"] = std::move(stages);
  return j.dump(indent) + "\n";
}

}  // namespace phaze
