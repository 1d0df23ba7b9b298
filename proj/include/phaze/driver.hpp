#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "phaze/engine_config.hpp"
#include "phaze/placement_dp.hpp"
#include "phaze/schedule_ilp.hpp"
#include "phaze/workload.hpp"

namespace phaze {

struct ModelResult {
  std::string model;
  bool feasible = false;
  double throughput = 0.0;  // samples per tick, 0 when infeasible
  std::optional<PlacementSolution> solution;
  std::string error;
  bool ilp_optimal = true;  // false when a layer schedule hit its limit
};

// Per-(t, b) layer costs of a workload on one accelerator: ILP makespans
// plus the TMP collective of each pass.
PlacementProblem build_placement_problem(const Workload& w, const AcceleratorConfig& cfg,
                                         const CostModelParams& params, ScheduleCache& cache,
                                         const SolveOptions& ilp = SolveOptions{}, bool* ilp_optimal = nullptr);

// Best placement of one workload on one accelerator over the workload's HBM
// candidates; infeasibility is recorded, not thrown.
ModelResult evaluate_model(const Workload& w, const AcceleratorConfig& cfg, const EngineConfig& engine,
                           ScheduleCache& cache);

std::vector<ModelResult> evaluate_config(const std::vector<Workload>& models, const AcceleratorConfig& cfg,
                                         const EngineConfig& engine, ScheduleCache& cache);

using Evaluator = std::function<ModelResult(const Workload&, const AcceleratorConfig&)>;

struct SearchOptions {
  int hysteresis = 6;
  bool exhaustive = false;
  int workers = 1;
};

struct ConfigRecord {
  AcceleratorConfig config;
  Rational area;
  int level = 0;
  std::vector<ModelResult> models;
  double mean = 0.0;  // weighted arithmetic mean throughput
};

struct LevelTrace {
  Rational area;
  int configs = 0;
  double best_mean = 0.0;
  ConvergeDecision decision = ConvergeDecision::Continue;
};

struct SearchReport {
  std::vector<std::string> models;
  std::vector<double> weights;
  int hysteresis = 6;
  bool exhaustive = false;
  bool converged = false;
  std::size_t total_configs = 0;
  std::vector<ConfigRecord> records;  // explored, in enumeration order
  std::vector<LevelTrace> trace;
  std::size_t best_common = 0;           // index into records
  std::vector<std::size_t> best_per_model;
  ConfigRecord baseline;
  std::vector<std::optional<double>> speedups;  // best common over baseline, per model
  std::optional<double> geomean_speedup;

  // Every model has a placement on the selected configuration.
  bool feasible() const;
};

// Explores configurations in decreasing area, one area level at a time, and
// stops once the hysteresis pruner reports convergence (never in exhaustive
// mode). `evaluator` defaults to evaluate_model with a shared cache.
SearchReport run_search(const std::vector<Workload>& models, const EngineConfig& engine, const SearchOptions& options,
                        Evaluator evaluator = nullptr);

// Writes report.json, summary.txt and trace.csv into `dir`.
void report_write(const SearchReport& r, const std::string& dir);
std::string report_json(const SearchReport& r);
std::string report_summary(const SearchReport& r);
std::string report_trace_csv(const SearchReport& r);

double geomean(const std::vector<double>& values);

// Worker count from PHAZE_WORKERS, defaulting to the hardware concurrency.
int default_workers();

}  // namespace phaze
