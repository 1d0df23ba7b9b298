#pragma once

#include <map>
#include <optional>
#include <string>

#include "phaze/archspace.hpp"
#include "phaze/costmodel.hpp"
#include "phaze/placement_dp.hpp"
#include "phaze/schedule_ilp.hpp"

namespace phaze {

struct SearchSettings {
  int hysteresis = 6;
  // Compute tuple of the speedup baseline; the reference configuration when
  // empty.
  std::optional<AcceleratorConfig> baseline;
  std::map<std::string, double> model_weights;  // by workload name, default 1
  SolveOptions ilp;
};

// Engine configuration file (JSON) with sections archspace, costmodel,
// accelerator, search and placement. Every key is optional.
struct EngineConfig {
  SearchBounds bounds;
  AreaModel area = AreaModel::defaults();
  CostModelParams cost;
  AcceleratorConfig accelerator;  // used by the single-configuration commands
  SearchSettings search;
  PlacementOptions placement;

  static EngineConfig defaults();
  AcceleratorConfig baseline() const;
};

EngineConfig parse_engine_config(const std::string& path);
EngineConfig parse_engine_config_text(const std::string& text);

}  // namespace phaze
