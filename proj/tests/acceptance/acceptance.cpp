// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "phaze/driver.hpp"
#include "phaze/generator.hpp"

using namespace phaze;
using namespace phaze::testing;

namespace {

// Pinned limits.
constexpr double kIlpOracleSeconds = 300.0;
constexpr double kDpOracleSeconds = 120.0;
constexpr double kLargeDpSeconds = 60.0;
constexpr double kLargeIlpSeconds = 60.0;
constexpr double kLargeIlpSlackSeconds = 5.0;  // allowance for model construction and validation

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " (" << o.detail << ")"
            << std::endl;
}

std::string fmt_seconds(double s) {
  std::ostringstream os;
  os.precision(3);
  os << s << " s";
  return os.str();
}

Tick sync_oracle(Bytes weights, int d, std::int64_t bw) {
  const __int128 num = static_cast<__int128>(weights) * 4 * (d - 1);
  const __int128 den = static_cast<__int128>(d) * bw;
  return static_cast<Tick>((num + den - 1) / den);
}

// Schedules produced by criteria 1 and 2, kept for criterion 3.
struct Checked {
  LayerSchedule schedule;
  RandomInstance instance;
};
std::vector<Checked> produced;

Outcome ilp_oracle_equivalence() {
  std::mt19937_64 rng(1001);
  const auto t0 = Clock::now();
  int mismatches = 0;
  for (int k = 0; k < 200; ++k) {
    const RandomInstance r = random_instance(rng);
    const LayerSchedule s = solve(IlpModel::build(r.graph, r.est, r.cfg));
    const Tick want = ilp_oracle(r.graph, r.est, r.cfg.num_tc, r.cfg.num_vc);
    if (s.makespan != want || s.status != SolveStatus::Optimal) ++mismatches;
    produced.push_back({s, r});
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kIlpOracleSeconds,
          std::to_string(200 - mismatches) + "/200 instances match, " + fmt_seconds(secs)};
}

Outcome lazy_equivalence() {
  std::mt19937_64 rng(2002);
  RandomDagOptions o;
  o.min_nodes = 4;
  o.max_nodes = 7;
  o.edge_probability = 0.15;
  o.core_counts = {1, 2};
  int kept = 0, drawn = 0, mismatches = 0;
  while (kept < 50 && drawn < 100000) {
    ++drawn;
    const RandomInstance r = random_instance(rng, o);
    const LayerSchedule lazy = solve_lazy(r.graph, r.est, r.cfg);
    // Contention: the relaxed schedule overran a core type, so families were added.
    if (lazy.invocations < 2) continue;
    ++kept;
    const LayerSchedule full = solve(IlpModel::build(r.graph, r.est, r.cfg, ZFamilies::Both));
    if (lazy.makespan != full.makespan) ++mismatches;
    produced.push_back({lazy, r});
    produced.push_back({full, r});
  }
  return {kept == 50 && mismatches == 0, std::to_string(kept - mismatches) + "/" + std::to_string(kept) +
                                             " contended instances match (" + std::to_string(drawn) + " drawn)"};
}

Outcome schedule_validity() {
  int invalid = 0, mutations = 0, caught = 0;
  for (const Checked& c : produced) {
    const RandomInstance& r = c.instance;
    if (!validate_schedule(c.schedule, r.graph, r.est, r.cfg).empty()) ++invalid;
    auto expect_caught = [&](const LayerSchedule& m) {
      ++mutations;
      if (!validate_schedule(m, r.graph, r.est, r.cfg).empty()) ++caught;
    };
    const auto& ops = c.schedule.ops;
    // The operator that ends last, one tick later.
    const auto last = std::max_element(ops.begin(), ops.end(),
                                       [](const ScheduledOp& a, const ScheduledOp& b) { return a.finish() < b.finish(); });
    LayerSchedule m = c.schedule;
    m.ops[last - ops.begin()].start += 1;
    expect_caught(m);
    // A successor started before its predecessor ends.
    if (!r.graph.edges.empty()) {
      const auto [u, v] = r.graph.edges.front();
      m = c.schedule;
      m.ops[v].start = ops[u].finish() - 1;
      expect_caught(m);
    }
    // Two operators sharing a resource started together.
    for (std::size_t i = 0; i < ops.size(); ++i) {
      for (std::size_t j = i + 1; j < ops.size(); ++j) {
        const OpKind ki = r.graph.nodes[i].kind, kj = r.graph.nodes[j].kind;
        const bool same_tc = ki != OpKind::Vector && kj != OpKind::Vector;
        const bool same_vc = ki != OpKind::Tensor && kj != OpKind::Tensor;
        const bool shared = ops[i].intra_op || ops[j].intra_op ||
                            (ops[i].core == ops[j].core && ops[i].core >= 0 && (same_tc || same_vc));
        if (!shared) continue;
        m = c.schedule;
        m.ops[j].start = ops[i].start;
        expect_caught(m);
        i = ops.size();
        break;
      }
    }
  }
  return {invalid == 0 && caught == mutations && !produced.empty(),
          std::to_string(produced.size() - invalid) + "/" + std::to_string(produced.size()) + " schedules valid, " +
              std::to_string(caught) + "/" + std::to_string(mutations) + " mutations caught"};
}

Outcome dp_oracle_equivalence() {
  std::mt19937_64 rng(4004);
  const auto t0 = Clock::now();
  int cases = 0, mismatches = 0, infeasible = 0;
  for (int n = 1; n <= 6; ++n) {
    for (int K : {2, 4, 8}) {
      for (int B : {2, 4, 8}) {
        for (RecomputePolicy rc : {RecomputePolicy::Off, RecomputePolicy::On, RecomputePolicy::Auto}) {
          for (int rep = 0; rep < 2; ++rep) {
            PlacementProblem p;
            for (int t : {1, 2}) {
              for (int b : {1, 2}) p.variants.push_back(random_variant(rng, n, t, b, 60, 100));
            }
            p.num_accelerators = K;
            p.minibatch = B;
            p.bandwidth = 1 + static_cast<std::int64_t>(rng() % 8);
            p.hbm_candidates = {200, 500};
            PlacementOptions o;
            o.recompute = rc;
            ++cases;
            PlacementChoice want;
            if (!dp_oracle(p, o, want)) {
              ++infeasible;
              try {
                final_time_per_batch(p, o);
                ++mismatches;
              } catch (const InfeasibleError&) {
              }
              continue;
            }
            const PlacementSolution got = final_time_per_batch(p, o);
            const bool same = got.F == want.F && got.t == want.t && got.d == want.d && got.s == want.s &&
                              got.b == want.b && got.hbm == want.hbm && got.recompute == want.recompute &&
                              got.stage_lengths() == want.lengths;
            if (!same) ++mismatches;
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kDpOracleSeconds,
          std::to_string(cases - mismatches) + "/" + std::to_string(cases) + " problems match (" +
              std::to_string(infeasible) + " infeasible), " + fmt_seconds(secs)};
}

Outcome flush_losslessness() {
  std::mt19937_64 rng(5005);
  int cases = 0, mismatches = 0;
  while (cases < 100) {
    const int d = 1 << (rng() % 4);
    const int B = d * (1 + static_cast<int>(rng() % 8));
    const int s = 1 + static_cast<int>(rng() % 6);
    const Tick fw = 1 + static_cast<Tick>(rng() % 50);
    const Tick bw = 1 + static_cast<Tick>(rng() % 100);
    const Bytes w = static_cast<Bytes>(rng() % 5000);
    VariantCosts v{1, 1, {}};
    for (int q = 0; q < s; ++q) {
      LayerCost c;
      c.id = "L" + std::to_string(q + 1);
      c.fw = fw;
      c.bw = bw;
      c.weights = w;
      c.sliceable = true;
      v.layers.push_back(c);
    }
    PlacementProblem p;
    p.variants = {v};
    p.num_accelerators = d * s;
    p.minibatch = B;
    p.bandwidth = 3;
    p.hbm_candidates = {Bytes{1} << 40};
    PlacementOptions o;
    o.force_d = d;
    o.force_s = s;
    o.recompute = RecomputePolicy::Off;
    const PlacementSolution sol = final_time_per_batch(p, o);
    const Tick load = fw + bw;
    const Tick sync = sync_oracle(w, d, p.bandwidth);
    const Tick flushed = sol.F - sync;
    if (flushed != (B / d + s - 1) * load || flushed != simulate_pipeline(B / d, s, load)) ++mismatches;
    ++cases;
  }
  return {mismatches == 0, std::to_string(cases - mismatches) + "/100 (B, d, s) cases exact"};
}

Outcome affine_memory() {
  std::mt19937_64 rng(6006);
  int checks = 0, mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const VariantCosts v = random_variant(rng, n, 1, 1, 10, 1 << 20);
    const int first = static_cast<int>(rng() % n);
    const int last = first + 1 + static_cast<int>(rng() % (n - first));
    for (bool rc : {false, true}) {
      Bytes stash = rc ? v.layers[first].input_edge : 0;
      if (!rc) {
        for (int q = first; q < last; ++q) stash += v.layers[q].activations;
      }
      for (int s = 1; s <= 8; ++s) {
        ++checks;
        // A stage s stages from the end keeps s - 1 microbatches in flight.
        const Bytes diff = stage_memory(v.layers, first, last, s, rc) - stage_memory(v.layers, first, last, s - 1, rc);
        if (diff != stash || stashed_data(v.layers, first, last, rc) != stash) ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(checks - mismatches) + "/" + std::to_string(checks) + " differences exact"};
}

Outcome sync_cost() {
  int cases = 0, mismatches = 0;
  for (int d : {2, 4, 8}) {
    for (Bytes w : {Bytes{0}, Bytes{1}, Bytes{1000}, Bytes{123457}, Bytes{1} << 34}) {
      for (std::int64_t bw : {1, 7, 1000}) {
        VariantCosts v{1, 1, {}};
        LayerCost c;
        c.id = "L1";
        c.fw = 5;
        c.bw = 9;
        c.weights = w;
        c.sliceable = true;
        v.layers = {c, c};
        v.layers[1].id = "L2";
        v.layers[1].weights = 3;
        PlacementProblem p;
        p.variants = {v};
        p.num_accelerators = 2 * d;
        p.minibatch = d;
        p.bandwidth = bw;
        p.hbm_candidates = {Bytes{1} << 40};
        PlacementOptions o;
        o.force_d = d;
        o.force_s = 2;
        const PlacementSolution s = final_time_per_batch(p, o);
        ++cases;
        if (s.sync_ticks != sync_oracle(w, d, bw) || s.F != s.flush_factor * s.max_load + s.sync_ticks) {
          ++mismatches;
        }
      }
    }
  }
  return {mismatches == 0, std::to_string(cases - mismatches) + "/" + std::to_string(cases) +
                               " sync costs equal ceil(4 (d-1) W / (d bw))"};
}

Outcome l2_sizes() {
  const bool top = derived_l2(256, 256).l2_tc == 1024 * kKiB;
  const bool floor = derived_l2(4, 8).l2_tc == kKiB && derived_l2(2, 2).l2_tc == kKiB && derived_l2(8, 8).l2_tc == kKiB;
  const bool cap = derived_l2(256, 8).l2_vc == 4 * kKiB && derived_l2(1024, 8).l2_vc == 4 * kKiB &&
                   derived_l2(8, 8).l2_vc == kKiB;
  return {top && floor && cap, std::string("1 MB top ") + (top ? "ok" : "wrong") + ", 1 KB floor " +
                                   (floor ? "ok" : "wrong") + ", 4 KB vector cap " + (cap ? "ok" : "wrong")};
}

Outcome allreduce() {
  const Tick four = allreduce_ticks(1024, 4, 1);
  const Tick one = allreduce_ticks(1024, 1, 1);
  return {four == 3072 && one == 0, "4 devices " + std::to_string(four) + ", 1 device " + std::to_string(one)};
}

Outcome pruner() {
  // Unimodal curve over 16 area levels with a plateau of width 3 at the start.
  const std::vector<double> curve{9, 9, 9, 12, 14, 20, 15, 13, 11, 8, 6, 5, 4, 3, 2, 1};
  EngineConfig e = EngineConfig::defaults();
  e.bounds.num_tc = {1};
  e.bounds.pe_x = {8};
  e.bounds.pe_y = {8};
  e.bounds.glb = {4 * kMiB};
  e.bounds.num_vc.clear();
  for (int v = 1; v <= 1 << 15; v *= 2) e.bounds.num_vc.push_back(v);
  const Evaluator eval = [&](const Workload& w, const AcceleratorConfig& c) {
    const int level = 15 - log2_exact(c.num_vc);
    ModelResult r;
    r.model = w.name;
    r.feasible = true;
    r.throughput = curve[level];
    return r;
  };
  TrainingParams tp;
  tp.hbm_candidates = {1000};
  const Workload w = make_workload({{"a"}}, tp);
  SearchOptions six, one;
  six.hysteresis = 6;
  one.hysteresis = 1;
  const SearchReport r6 = run_search({w}, e, six, eval);
  const SearchReport r1 = run_search({w}, e, one, eval);
  const ConfigRecord& best6 = r6.records[r6.best_common];
  const ConfigRecord& best1 = r1.records[r1.best_common];
  const bool ok6 = best6.mean == 20 && r6.converged;
  const bool ok1 = best1.level == 0 && best1.config.num_vc == (1 << 15);
  return {ok6 && ok1, "H=6 picks " + std::to_string(best6.mean) + " after " + std::to_string(r6.trace.size()) +
                          " levels, H=1 picks level " + std::to_string(best1.level) + " after " +
                          std::to_string(r1.trace.size()) + " levels"};
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

Outcome determinism() {
  const std::string dir = std::string(PHAZE_SCRATCH_DIR) + "/acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string bin = PHAZE_BIN;
  const std::string wl = dir + "/w.json";
  const std::string cfg = dir + "/engine.json";
  write_text(cfg, R"({"archspace": {"num_tc": [1, 2, 4], "num_vc": [2, 4, 8], "pe_x": [16, 32], "pe_y": [16, 32],
                      "glb_bytes": [4194304, 8388608]}})");
  if (run_command(bin + " gen-workload --out " + wl +
                  " --layers 4 --hidden 128 --heads 4 --seq 64 --tmp 1,2 --mb 1,2 --B 8 --K 8 --bandwidth 50"
                  " --hbm 100000000,1000000000 > /dev/null") != 0) {
    return {false, "gen-workload failed"};
  }
  for (const char* run : {"a", "b"}) {
    const std::string out = dir + "/" + run;
    if (run_command(bin + " search --workloads " + wl + " --config " + cfg + " --hysteresis 3 --workers 2 --out " +
                    out + " > /dev/null") != 0) {
      return {false, "search run failed"};
    }
  }
  bool same = true;
  for (const char* f : {"report.json", "summary.txt", "trace.csv"}) {
    const std::string a = read_file(dir + "/a/" + f), b = read_file(dir + "/b/" + f);
    same = same && !a.empty() && a == b;
  }
  return {same, same ? "report.json, summary.txt and trace.csv byte-identical" : "reports differ"};
}

Outcome desk_scale() {
  std::mt19937_64 rng(1212);
  PlacementProblem p;
  p.variants = {random_variant(rng, 96, 1, 1, 1000, 1 << 20)};
  p.num_accelerators = 64;
  p.minibatch = 64;
  p.bandwidth = 10;
  p.hbm_candidates = {Bytes{1} << 30};
  auto t0 = Clock::now();
  const PlacementSolution sol = final_time_per_batch(p);
  const double dp_secs = seconds_since(t0);

  TransformerSpec spec;
  spec.hidden = 1024;
  spec.heads = 16;
  spec.seq_len = 1024;
  std::vector<OperatorGraph> blocks(8, transformer_block_graph(spec, 1, 1));
  const OperatorGraph g = chain_graphs(blocks);
  const AcceleratorConfig cfg = make_config(4, 8, 64, 64, 32 * kMiB, 0, 1200);
  const auto est = estimate_graph(g, cfg);
  SolveOptions so;
  so.time_limit_seconds = kLargeIlpSeconds;
  t0 = Clock::now();
  const LayerSchedule s = solve_lazy(g, est, cfg, so);
  const double ilp_secs = seconds_since(t0);
  const bool valid = validate_schedule(s, g, est, cfg).empty();
  const bool bounded = s.lower_bound > 0 && s.lower_bound <= s.makespan;
  const bool ilp_ok = valid && bounded && ilp_secs < kLargeIlpSeconds + kLargeIlpSlackSeconds;
  std::ostringstream os;
  os.precision(3);
  os << "DP F=" << sol.F << " in " << fmt_seconds(dp_secs) << "; ILP " << g.size() << " nodes "
     << to_string(s.status) << " makespan " << s.makespan << " gap " << s.gap() << " in " << fmt_seconds(ilp_secs);
  return {dp_secs < kLargeDpSeconds && ilp_ok, os.str()};
}

}  // namespace

int main() {
  report(1, "ILP oracle equivalence", ilp_oracle_equivalence);
  report(2, "lazy core families equal the full model", lazy_equivalence);
  report(3, "schedule validity and mutation detection", schedule_validity);
  report(4, "placement DP oracle equivalence", dp_oracle_equivalence);
  report(5, "flush factor is lossless for equal stages", flush_losslessness);
  report(6, "stage memory is affine in the stage count", affine_memory);
  report(7, "data-parallel sync cost", sync_cost);
  report(8, "L2 derivation", l2_sizes);
  report(9, "ring AllReduce cost", allreduce);
  report(10, "hysteresis pruner on a unimodal curve", pruner);
  report(11, "search reports are deterministic", determinism);
  report(12, "desk-scale performance", desk_scale);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
