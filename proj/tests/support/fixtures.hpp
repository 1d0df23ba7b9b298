#pragma once

#include <random>
#include <string>
#include <vector>

#include "phaze/placement_dp.hpp"
#include "phaze/costmodel.hpp"
#include "phaze/workload.hpp"

namespace phaze::testing {

// Graph from node kinds and edges; every node gets a small legal quantity.
OperatorGraph make_graph(const std::vector<OpKind>& kinds, const std::vector<Edge>& edges);

// Estimates with the given single-core and intra-op latencies.
std::vector<OperatorEstimate> make_estimates(const std::vector<std::pair<Tick, Tick>>& lat);

AcceleratorConfig cores(int num_tc, int num_vc);

// One-operator-per-layer workload whose layer variants carry the given
// sizes; used for placement and driver tests.
struct LayerSpec {
  std::string id;
  std::int64_t flops = 1000;
  Bytes weights = 0, optimizer = 0, activations = 0, input_edge = 0;
  bool sliceable = true;
};
Workload make_workload(const std::vector<LayerSpec>& layers, const TrainingParams& training);

// Random layer costs for placement oracles.
VariantCosts random_variant(std::mt19937_64& rng, int n, int t, int b, Tick max_latency, Bytes max_size);

std::string read_file(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace phaze::testing
