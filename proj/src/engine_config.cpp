#include "phaze/engine_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace phaze {

using json = nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ParseError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
T get(const json& obj, const std::string& where, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + ": wrong type");
  }
}

Rational rational(const json& obj, const std::string& where, const std::string& key, Rational fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  try {
    if (v.is_string()) return Rational::parse(v.get<std::string>());
    if (v.is_number()) return Rational::parse(v.dump());
  } catch (const Error& e) {
    throw ParseError(where + "." + key + ": " + e.what());
  }
  throw ParseError(where + "." + key + ": expected a number or a fraction string");
}

AcceleratorConfig compute_tuple(const json& obj, const std::string& where, const CostModelParams& cost,
                                Bytes lane_bytes) {
  only_keys(obj, where, {"num_tc", "num_vc", "pe_x", "pe_y", "glb_bytes", "hbm_bytes"});
  for (const char* k : {"num_tc", "num_vc", "pe_x", "pe_y", "glb_bytes"}) {
    if (!obj.contains(k)) throw ParseError(where + ": missing '" + k + "'");
  }
  try {
    return make_config(get<int>(obj, where, "num_tc", 0), get<int>(obj, where, "num_vc", 0),
                       get<int>(obj, where, "pe_x", 0), get<int>(obj, where, "pe_y", 0),
                       get<Bytes>(obj, where, "glb_bytes", 0), get<Bytes>(obj, where, "hbm_bytes", 0), cost.hbm_bw,
                       lane_bytes);
  } catch (const ValidationError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace

EngineConfig EngineConfig::defaults() {
  EngineConfig c;
  c.accelerator = reference_config(0, c.cost.hbm_bw, c.bounds.vc_lane_bytes);
  return c;
}

AcceleratorConfig EngineConfig::baseline() const {
  if (search.baseline) {
    AcceleratorConfig b = *search.baseline;
    b.hbm = bounds.hbm;
    return b;
  }
  return reference_config(bounds.hbm, cost.hbm_bw, bounds.vc_lane_bytes);
}

EngineConfig parse_engine_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("engine config: ") + e.what());
  }
  only_keys(root, "config", {"archspace", "costmodel", "accelerator", "search", "placement"});
  EngineConfig c;

  const json empty = json::object();
  const json& cm = root.value("costmodel", empty);
  only_keys(cm, "costmodel", {"word_size", "macs_per_pe_per_tick", "hbm_bw_bytes_per_tick"});
  c.cost.word_size = get<Bytes>(cm, "costmodel", "word_size", c.cost.word_size);
  c.cost.macs_per_pe_per_tick = get<std::int64_t>(cm, "costmodel", "macs_per_pe_per_tick", c.cost.macs_per_pe_per_tick);
  c.cost.hbm_bw = get<std::int64_t>(cm, "costmodel", "hbm_bw_bytes_per_tick", c.cost.hbm_bw);
  try {
    c.cost.validate();
  } catch (const ValidationError& e) {
    throw ParseError(std::string("costmodel: ") + e.what());
  }

  const json& as = root.value("archspace", empty);
  only_keys(as, "archspace",
            {"num_tc", "num_vc", "pe_x", "pe_y", "glb_bytes", "vc_lane_l2_bytes", "unit_area_mac",
             "unit_area_vec_lane", "unit_area_sram_byte"});
  c.bounds.num_tc = get<std::vector<int>>(as, "archspace", "num_tc", c.bounds.num_tc);
  c.bounds.num_vc = get<std::vector<int>>(as, "archspace", "num_vc", c.bounds.num_vc);
  c.bounds.pe_x = get<std::vector<int>>(as, "archspace", "pe_x", c.bounds.pe_x);
  c.bounds.pe_y = get<std::vector<int>>(as, "archspace", "pe_y", c.bounds.pe_y);
  c.bounds.glb = get<std::vector<Bytes>>(as, "archspace", "glb_bytes", c.bounds.glb);
  c.bounds.vc_lane_bytes = get<Bytes>(as, "archspace", "vc_lane_l2_bytes", c.bounds.vc_lane_bytes);
  c.bounds.hbm_bw = c.cost.hbm_bw;
  try {
    c.bounds.validate();
    c.area = AreaModel::with_reference_budget(
        rational(as, "archspace", "unit_area_mac", c.area.unit_area_mac),
        rational(as, "archspace", "unit_area_vec_lane", c.area.unit_area_vec_lane),
        rational(as, "archspace", "unit_area_sram_byte", c.area.unit_area_per_byte_sram), c.bounds.vc_lane_bytes);
  } catch (const ValidationError& e) {
    throw ParseError(std::string("archspace: ") + e.what());
  }

  if (root.contains("accelerator")) {
    c.accelerator = compute_tuple(root.at("accelerator"), "accelerator", c.cost, c.bounds.vc_lane_bytes);
  } else {
    c.accelerator = reference_config(0, c.cost.hbm_bw, c.bounds.vc_lane_bytes);
  }

  const json& se = root.value("search", empty);
  only_keys(se, "search", {"hysteresis", "baseline", "model_weights", "ilp_time_limit_seconds", "ilp_node_limit"});
  c.search.hysteresis = get<int>(se, "search", "hysteresis", c.search.hysteresis);
  if (c.search.hysteresis < 1) throw ParseError("search.hysteresis must be >= 1");
  if (se.contains("baseline")) {
    const json& b = se.at("baseline");
    if (b.is_string()) {
      if (b.get<std::string>() != "reference") throw ParseError("search.baseline: expected \"reference\" or an object");
    } else {
      c.search.baseline = compute_tuple(b, "search.baseline", c.cost, c.bounds.vc_lane_bytes);
    }
  }
  if (se.contains("model_weights")) {
    const json& w = se.at("model_weights");
    if (!w.is_object()) throw ParseError("search.model_weights: expected an object");
    for (const auto& [name, val] : w.items()) {
      if (!val.is_number() || val.get<double>() < 0) {
        throw ParseError("search.model_weights." + name + ": expected a non-negative number");
      }
      c.search.model_weights[name] = val.get<double>();
    }
  }
  c.search.ilp.time_limit_seconds = get<double>(se, "search", "ilp_time_limit_seconds", 60.0);
  c.search.ilp.node_limit = get<std::int64_t>(se, "search", "ilp_node_limit", 0);

  const json& pl = root.value("placement", empty);
  only_keys(pl, "placement", {"schedule", "recompute"});
  const std::string sched = get<std::string>(pl, "placement", "schedule", "pipedream-flush");
  if (sched == "pipedream-flush") {
    c.placement.schedule = PipelineSchedule::PipeDreamFlush;
  } else if (sched == "gpipe") {
    c.placement.schedule = PipelineSchedule::GPipe;
  } else {
    throw ParseError("placement.schedule must be pipedream-flush or gpipe");
  }
  try {
    c.placement.recompute = recompute_policy_from_string(get<std::string>(pl, "placement", "recompute", "auto"));
  } catch (const ValidationError& e) {
    throw ParseError(std::string("placement.recompute: ") + e.what());
  }
  return c;
}

EngineConfig parse_engine_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open engine config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_engine_config_text(ss.str());
}

}  // namespace phaze
