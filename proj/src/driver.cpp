#include "phaze/driver.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace phaze {

using ojson = nlohmann::ordered_json;

PlacementProblem build_placement_problem(const Workload& w, const AcceleratorConfig& cfg,
                                         const CostModelParams& params, ScheduleCache& cache, const SolveOptions& ilp,
                                         bool* ilp_optimal) {
  const TrainingParams& tp = w.training;
  PlacementProblem p;
  p.num_accelerators = tp.num_accelerators;
  p.minibatch = tp.minibatch_microbatches;
  p.bandwidth = tp.network_bandwidth;
  p.hbm_candidates = tp.hbm_candidates;
  bool optimal = true;
  for (int t : tp.tmp_widths) {
    for (int b : tp.microbatch_sizes) {
      VariantCosts v;
      v.t = t;
      v.b = b;
      for (const Layer& layer : w.graph.layers) {
        const LayerVariant& lv = layer.variant(t, b);
        const LayerLatencies lat = layer_latencies(layer, cfg, t, b, params, cache, ilp);
        optimal = optimal && lat.optimal;
        const Tick collective = allreduce_ticks(lv.allreduce_bytes, layer.sliceable ? t : 1, tp.network_bandwidth);
        LayerCost c;
        c.id = layer.id;
        c.fw = checked_narrow(static_cast<__int128>(lat.fw) + collective);
        c.bw = checked_narrow(static_cast<__int128>(lat.bw) + collective);
        c.weights = lv.weights_size;
        c.optimizer = lv.optimizer_size;
        c.activations = lv.activations_size;
        c.input_edge = lv.input_edge_size;
        c.sliceable = layer.sliceable;
        v.layers.push_back(std::move(c));
      }
      p.variants.push_back(std::move(v));
    }
  }
  if (ilp_optimal) *ilp_optimal = optimal;
  return p;
}

ModelResult evaluate_model(const Workload& w, const AcceleratorConfig& cfg, const EngineConfig& engine,
                           ScheduleCache& cache) {
  ModelResult r;
  r.model = w.name;
  try {
    const PlacementProblem p = build_placement_problem(w, cfg, engine.cost, cache, engine.search.ilp, &r.ilp_optimal);
    PlacementSolution s = final_time_per_batch(p, engine.placement);
    r.feasible = true;
    r.throughput = s.throughput;
    r.solution = std::move(s);
  } catch (const InfeasibleError& e) {
    r.error = e.what();
  }
  return r;
}

std::vector<ModelResult> evaluate_config(const std::vector<Workload>& models, const AcceleratorConfig& cfg,
                                         const EngineConfig& engine, ScheduleCache& cache) {
  std::vector<ModelResult> out;
  for (const Workload& w : models) out.push_back(evaluate_model(w, cfg, engine, cache));
  return out;
}

double geomean(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("geometric mean of an empty list");
  double log_sum = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw ValidationError("geometric mean needs positive values");
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(values.size()));
}

int default_workers() {
  if (const char* env = std::getenv("PHAZE_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

bool SearchReport::feasible() const {
  if (records.empty()) return false;
  for (const ModelResult& m : records[best_common].models) {
    if (!m.feasible) return false;
  }
  return true;
}

namespace {

double weighted_mean(const std::vector<ModelResult>& results, const std::vector<double>& weights) {
  double num = 0.0, den = 0.0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    num += weights[q] * results[q].throughput;
    den += weights[q];
  }
  return den > 0.0 ? num / den : 0.0;
}

void evaluate_level(std::vector<ConfigRecord>& level, const std::vector<Workload>& models, const Evaluator& eval,
                    int workers) {
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t q = next++; q < level.size(); q = next++) {
      for (const Workload& w : models) level[q].models.push_back(eval(w, level[q].config));
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(level.size())));
  if (n == 1) {
    work();
    return;
  }
  std::vector<std::thread> pool;
  for (int q = 0; q < n; ++q) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
}

}  // namespace

SearchReport run_search(const std::vector<Workload>& models, const EngineConfig& engine, const SearchOptions& options,
                        Evaluator evaluator) {
  if (models.empty()) throw ValidationError("search needs at least one workload");
  if (options.hysteresis < 1) throw ValidationError("hysteresis must be >= 1");
  auto cache = std::make_shared<ScheduleCache>();
  if (!evaluator) {
    evaluator = [cache, &engine](const Workload& w, const AcceleratorConfig& cfg) {
      return evaluate_model(w, cfg, engine, *cache);
    };
  }

  SearchReport r;
  r.hysteresis = options.hysteresis;
  r.exhaustive = options.exhaustive;
  for (const Workload& w : models) {
    r.models.push_back(w.name);
    auto it = engine.search.model_weights.find(w.name);
    r.weights.push_back(it == engine.search.model_weights.end() ? 1.0 : it->second);
  }

  const std::vector<RankedConfig> configs = enumerate_configs(engine.bounds, engine.area);
  r.total_configs = configs.size();
  std::vector<double> level_best;
  std::size_t pos = 0;
  while (pos < configs.size()) {
    std::size_t end = pos;
    while (end < configs.size() && configs[end].area == configs[pos].area) ++end;
    std::vector<ConfigRecord> level;
    for (std::size_t q = pos; q < end; ++q) {
      ConfigRecord rec;
      rec.config = configs[q].config;
      rec.area = configs[q].area;
      rec.level = static_cast<int>(r.trace.size());
      level.push_back(std::move(rec));
    }
    evaluate_level(level, models, evaluator, options.workers);
    double best = 0.0;
    for (ConfigRecord& rec : level) {
      rec.mean = weighted_mean(rec.models, r.weights);
      best = std::max(best, rec.mean);
      r.records.push_back(std::move(rec));
    }
    level_best.push_back(best);
    LevelTrace lt;
    lt.area = configs[pos].area;
    lt.configs = static_cast<int>(end - pos);
    lt.best_mean = best;
    lt.decision = options.exhaustive ? ConvergeDecision::Continue : check_converge(level_best, options.hysteresis);
    r.trace.push_back(lt);
    pos = end;
    if (lt.decision == ConvergeDecision::Converged) {
      r.converged = true;
      break;
    }
  }

  for (std::size_t q = 1; q < r.records.size(); ++q) {
    if (r.records[q].mean > r.records[r.best_common].mean) r.best_common = q;
  }
  r.best_per_model.assign(models.size(), 0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t q = 1; q < r.records.size(); ++q) {
      if (r.records[q].models[m].throughput > r.records[r.best_per_model[m]].models[m].throughput) {
        r.best_per_model[m] = q;
      }
    }
  }

  const AcceleratorConfig base = engine.baseline();
  bool found = false;
  for (const ConfigRecord& rec : r.records) {
    if (rec.config == base) {
      r.baseline = rec;
      found = true;
      break;
    }
  }
  if (!found) {
    r.baseline.config = base;
    r.baseline.area = area_of(base, engine.area);
    r.baseline.level = -1;
    for (const Workload& w : models) r.baseline.models.push_back(evaluator(w, base));
    r.baseline.mean = weighted_mean(r.baseline.models, r.weights);
  }
  std::vector<double> defined;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const double chosen = r.records[r.best_common].models[m].throughput;
    const double ref = r.baseline.models[m].throughput;
    if (ref > 0.0 && chosen > 0.0) {
      r.speedups.push_back(chosen / ref);
      defined.push_back(chosen / ref);
    } else {
      r.speedups.push_back(std::nullopt);
    }
  }
  if (!defined.empty()) r.geomean_speedup = geomean(defined);
  return r;
}

namespace {

ojson config_json(const AcceleratorConfig& c) {
  ojson j;
  j["num_tc"] = c.num_tc;
  j["num_vc"] = c.num_vc;
  j["pe_x"] = c.pe_x;
  j["pe_y"] = c.pe_y;
  j["pe_vc"] = c.pe_vc;
  j["glb_bytes"] = c.glb;
  j["glb_bw_words"] = c.glb_bw;
  j["l2_tc_bytes"] = c.l2_tc;
  j["l2_vc_bytes"] = c.l2_vc;
  j["hbm_bw_bytes_per_tick"] = c.hbm_bw;
  return j;
}

ojson model_json(const ModelResult& m, bool full) {
  ojson j;
  j["model"] = m.model;
  j["feasible"] = m.feasible;
  j["throughput"] = m.throughput;
  j["ilp_optimal"] = m.ilp_optimal;
  if (m.solution) {
    const PlacementSolution& s = *m.solution;
    if (full) {
      j["placement"] = ojson::parse(solution_to_json(s));
    } else {
      j["F"] = s.F;
      j["t"] = s.t;
      j["d"] = s.d;
      j["s"] = s.s;
      j["b"] = s.b;
      j["recompute"] = s.recompute;
      j["hbm_bytes"] = s.hbm;
    }
  } else {
    j["error"] = m.error;
  }
  return j;
}

ojson record_json(const ConfigRecord& r, bool full) {
  ojson j;
  j["label"] = r.config.label();
  j["config"] = config_json(r.config);
  j["area"] = r.area.str();
  j["level"] = r.level;
  j["mean_throughput"] = r.mean;
  auto ms = ojson::array();
  for (const ModelResult& m : r.models) ms.push_back(model_json(m, full));
  j["models"] = std::move(ms);
  return j;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

std::string report_json(const SearchReport& r) {
  ojson j;
  j["models"] = r.models;
  j["weights"] = r.weights;
  j["hysteresis"] = r.hysteresis;
  j["exhaustive"] = r.exhaustive;
  j["converged"] = r.converged;
  j["feasible"] = r.feasible();
  j["configs_enumerated"] = r.total_configs;
  j["configs_explored"] = r.records.size();
  auto trace = ojson::array();
  for (std::size_t q = 0; q < r.trace.size(); ++q) {
    ojson t;
    t["level"] = q;
    t["area"] = r.trace[q].area.str();
    t["configs"] = r.trace[q].configs;
    t["best_mean_throughput"] = r.trace[q].best_mean;
    t["decision"] = to_string(r.trace[q].decision);
    trace.push_back(std::move(t));
  }
  j["trace"] = std::move(trace);
  if (!r.records.empty()) {
    j["best_common"] = record_json(r.records[r.best_common], true);
    auto per = ojson::array();
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      ojson e;
      e["model"] = r.models[m];
      e["config"] = r.records[r.best_per_model[m]].config.label();
      e["result"] = model_json(r.records[r.best_per_model[m]].models[m], true);
      per.push_back(std::move(e));
    }
    j["best_per_model"] = std::move(per);
  }
  j["baseline"] = record_json(r.baseline, false);
  auto sp = ojson::array();
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    ojson e;
    e["model"] = r.models[m];
    if (r.speedups[m]) {
      e["speedup"] = *r.speedups[m];
    } else {
      e["speedup"] = nullptr;
    }
    sp.push_back(std::move(e));
  }
  j["speedups_vs_baseline"] = std::move(sp);
  if (r.geomean_speedup) {
    j["geomean_speedup"] = *r.geomean_speedup;
  } else {
    j["geomean_speedup"] = nullptr;
  }
  auto recs = ojson::array();
  for (const ConfigRecord& rec : r.records) recs.push_back(record_json(rec, false));
  j["records"] = std::move(recs);
  return j.dump(2) + "\n";
}

std::string report_summary(const SearchReport& r) {
  std::ostringstream os;
  os << "architecture search over " << r.models.size() << " model(s)\n";
  os << "explored " << r.records.size() << " of " << r.total_configs << " configurations in " << r.trace.size()
     << " area levels; ";
  if (r.exhaustive) {
    os << "exhaustive mode\n";
  } else if (r.converged) {
    os << "converged with hysteresis " << r.hysteresis << "\n";
  } else {
    os << "space exhausted before convergence (hysteresis " << r.hysteresis << ")\n";
  }
  if (r.records.empty()) return os.str();
  const ConfigRecord& best = r.records[r.best_common];
  os << "best common configuration: " << best.config.label() << " area " << fmt(best.area.to_double())
     << " mean throughput " << fmt(best.mean) << "\n";
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    const ModelResult& res = best.models[m];
    os << "  " << r.models[m] << ": ";
    if (res.solution) {
      const PlacementSolution& s = *res.solution;
      os << "throughput " << fmt(res.throughput) << " (t=" << s.t << " d=" << s.d << " s=" << s.s << " b=" << s.b
         << " recompute=" << (s.recompute ? "on" : "off") << " hbm=" << s.hbm << ")";
    } else {
      os << "infeasible";
    }
    os << "; best own config " << r.records[r.best_per_model[m]].config.label() << "\n";
  }
  os << "baseline " << r.baseline.config.label() << ":";
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    os << " " << r.models[m] << "=" << (r.speedups[m] ? fmt(*r.speedups[m]) + "x" : std::string("n/a"));
  }
  os << "\ngeomean speedup: " << (r.geomean_speedup ? fmt(*r.geomean_speedup) + "x" : std::string("n/a")) << "\n";
  return os.str();
}

std::string report_trace_csv(const SearchReport& r) {
  std::ostringstream os;
  os << "level,area,configs,best_mean_throughput,decision\n";
  for (std::size_t q = 0; q < r.trace.size(); ++q) {
    const LevelTrace& t = r.trace[q];
    nlohmann::json v = t.best_mean;
    os << q << "," << t.area.str() << "," << t.configs << "," << v.dump() << "," << to_string(t.decision) << "\n";
  }
  return os.str();
}

void report_write(const SearchReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& body) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << body;
    if (!out) throw Error("failed writing '" + path + "'");
  };
  write("report.json", report_json(r));
  write("summary.txt", report_summary(r));
  write("trace.csv", report_trace_csv(r));
}

}  // namespace phaze
