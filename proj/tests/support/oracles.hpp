#pragma once

// Exhaustive reference implementations used by the unit and acceptance
// tests. They share no code with the library beyond its data types.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "phaze/placement_dp.hpp"
#include "phaze/schedule_ilp.hpp"

namespace phaze::testing {

struct RandomInstance {
  OperatorGraph graph;
  std::vector<OperatorEstimate> est;
  AcceleratorConfig cfg;
};

struct RandomDagOptions {
  int min_nodes = 1;
  int max_nodes = 7;
  double edge_probability = 0.3;
  Tick min_latency = 1;
  Tick max_latency = 20;
  std::vector<int> core_counts{1, 2, 3};
  bool fused = true;
};

// Random DAG over nodes 0..n-1 with forward edges only, random kinds and
// independent single/intra latencies.
RandomInstance random_instance(std::mt19937_64& rng, const RandomDagOptions& options = {});

// Minimum makespan over every intra-op choice, every core assignment and
// every acyclic orientation of conflicting operator pairs.
Tick ilp_oracle(const OperatorGraph& g, const std::vector<OperatorEstimate>& est, int num_tc, int num_vc);

// Independent evaluation of one placement.
struct PlacementChoice {
  std::size_t variant = 0;
  Bytes hbm = 0;
  int d = 1;
  int s = 1;
  bool recompute = false;
  std::vector<int> lengths;  // stage lengths, front to back
  Tick max_load = 0;
  Tick sync = 0;
  Tick F = 0;
  int b = 1;
  int t = 1;
};

// Best placement by enumerating every variant, HBM candidate, data-parallel
// width, recompute mode and contiguous partition. Ties follow the library's
// documented order. Returns false when nothing fits.
bool dp_oracle(const PlacementProblem& p, const PlacementOptions& options, PlacementChoice& best);

// Time at which the last of m microbatches leaves an s-stage pipeline whose
// stages each take `load` per microbatch.
Tick simulate_pipeline(std::int64_t microbatches, int stages, Tick load);

// Minimal reader for the LP files the library writes.
struct LpModel {
  struct Row {
    std::string name;
    std::vector<std::pair<std::string, std::int64_t>> terms;
    std::string sense;  // "<=", ">=" or "="
    std::int64_t rhs = 0;
  };
  std::string objective_var;
  std::vector<Row> rows;
  std::vector<std::string> binaries;
  std::vector<std::pair<std::string, std::int64_t>> fixed;  // "x = v" bounds
  std::vector<std::string> variables;                       // every name in order of appearance
};

LpModel read_lp(const std::string& text);

}  // namespace phaze::testing
