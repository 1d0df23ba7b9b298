// Command-line entry point: search, ilp, place, configs, gen-workload.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "phaze/driver.hpp"
#include "phaze/engine_config.hpp"
#include "phaze/generator.hpp"

using namespace phaze;

namespace {

EngineConfig load_config(const std::string& path) {
  return path.empty() ? EngineConfig::defaults() : parse_engine_config(path);
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << body;
}

std::string configs_csv(const std::vector<RankedConfig>& configs) {
  std::ostringstream os;
  os << "num_tc,num_vc,pe_x,pe_y,pe_vc,glb_bytes,glb_bw_words,l2_tc_bytes,l2_vc_bytes,area\n";
  for (const RankedConfig& r : configs) {
    const AcceleratorConfig& c = r.config;
    os << c.num_tc << "," << c.num_vc << "," << c.pe_x << "," << c.pe_y << "," << c.pe_vc << "," << c.glb << ","
       << c.glb_bw << "," << c.l2_tc << "," << c.l2_vc << "," << r.area.str() << "\n";
  }
  return os.str();
}

int find_layer(const Workload& w, const std::string& key) {
  for (std::size_t i = 0; i < w.graph.layers.size(); ++i) {
    if (w.graph.layers[i].id == key) return static_cast<int>(i);
  }
  try {
    std::size_t used = 0;
    const int idx = std::stoi(key, &used);
    if (used == key.size() && idx >= 0 && idx < static_cast<int>(w.graph.layers.size())) return idx;
  } catch (const std::exception&) {
  }
  throw ValidationError("workload has no layer '" + key + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(static_cast<T>(std::stoll(item)));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accelerator architecture and device placement co-search"};
  app.require_subcommand(1);

  // search
  auto* search = app.add_subcommand("search", "Search accelerator configurations for one or more workloads");
  std::vector<std::string> workloads;
  std::string config_path, out_dir, dump_configs;
  int hysteresis = 0;
  bool exhaustive = false;
  int workers = 0;
  search->add_option("--workloads", workloads, "Workload files")->required()->expected(1, -1);
  search->add_option("--config", config_path, "Engine configuration (JSON)");
  search->add_option("--out", out_dir, "Output directory for report.json, summary.txt and trace.csv")->required();
  search->add_option("--hysteresis", hysteresis, "Decreasing area levels required to stop (default from config)");
  search->add_flag("--exhaustive", exhaustive, "Explore every configuration");
  search->add_option("--dump-configs", dump_configs, "Write the enumerated configurations as CSV");
  search->add_option("--workers", workers, "Parallel evaluations per area level (default PHAZE_WORKERS)");

  // ilp
  auto* ilp = app.add_subcommand("ilp", "Schedule one layer's operator graph");
  std::string workload_path, layer_key, pass = "fw", export_lp, dump_estimates;
  int tmp = 1, mb = 0;
  bool full_model = false;
  double time_limit = -1;
  ilp->add_option("--workload", workload_path, "Workload file")->required();
  ilp->add_option("--config", config_path, "Engine configuration (JSON)");
  ilp->add_option("--layer", layer_key, "Layer id or index")->required();
  ilp->add_option("--tmp", tmp, "TMP width");
  ilp->add_option("--mb", mb, "Microbatch size (default: first listed)");
  ilp->add_option("--pass", pass, "fw or bw")->check(CLI::IsMember({"fw", "bw"}));
  ilp->add_flag("--full", full_model, "Solve the full model instead of adding core families lazily");
  ilp->add_option("--time-limit", time_limit, "Seconds (default from config)");
  ilp->add_option("--export-lp", export_lp, "Write the model in LP format");
  ilp->add_option("--dump-estimates", dump_estimates, "Write per-operator latencies as CSV");

  // place
  auto* place = app.add_subcommand("place", "Optimal device placement on the configured accelerator");
  bool gpipe = false, explain_text = false;
  std::string recompute;
  place->add_option("--workload", workload_path, "Workload file")->required();
  place->add_option("--config", config_path, "Engine configuration (JSON)");
  place->add_flag("--gpipe", gpipe, "GPipe in-flight memory rule");
  place->add_option("--recompute", recompute, "auto, on or off")->check(CLI::IsMember({"auto", "on", "off"}));
  place->add_flag("--explain", explain_text, "Print a stage table instead of JSON");

  // configs
  auto* configs = app.add_subcommand("configs", "List the budget-feasible configurations in area order");
  configs->add_option("--config", config_path, "Engine configuration (JSON)");
  configs->add_option("--dump-configs", dump_configs, "Write CSV to this path instead of stdout");

  // gen-workload
  auto* gen = app.add_subcommand("gen-workload", "Write a synthetic transformer workload");
  TransformerSpec spec;
  std::string gen_out, tmp_list = "1", mb_list = "1", hbm_list = "85899345920";
  gen->add_option("--out", gen_out, "Output path")->required();
  gen->add_option("--name", spec.name, "Workload name");
  gen->add_option("--layers", spec.layers, "Number of transformer blocks");
  gen->add_option("--hidden", spec.hidden, "Hidden size");
  gen->add_option("--heads", spec.heads, "Attention heads");
  gen->add_option("--seq", spec.seq_len, "Sequence length");
  gen->add_option("--tmp", tmp_list, "Comma separated TMP widths");
  gen->add_option("--mb", mb_list, "Comma separated microbatch sizes");
  gen->add_option("--B", spec.training.minibatch_microbatches, "Microbatches per minibatch");
  gen->add_option("--K", spec.training.num_accelerators, "Accelerators");
  gen->add_option("--bandwidth", spec.training.network_bandwidth, "Network bytes per tick");
  gen->add_option("--hbm", hbm_list, "Comma separated HBM candidates in bytes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (search->parsed()) {
      const EngineConfig engine = load_config(config_path);
      std::vector<Workload> models;
      for (const std::string& p : workloads) models.push_back(parse_workload(p));
      if (!dump_configs.empty()) write_file(dump_configs, configs_csv(enumerate_configs(engine.bounds, engine.area)));
      SearchOptions so;
      so.hysteresis = hysteresis > 0 ? hysteresis : engine.search.hysteresis;
      so.exhaustive = exhaustive;
      so.workers = workers > 0 ? workers : default_workers();
      const SearchReport r = run_search(models, engine, so);
      report_write(r, out_dir);
      std::cout << report_summary(r);
      return r.feasible() ? 0 : 2;
    }
    if (ilp->parsed()) {
      const EngineConfig engine = load_config(config_path);
      const Workload w = parse_workload(workload_path);
      const Layer& layer = w.graph.layers[find_layer(w, layer_key)];
      const int b = mb > 0 ? mb : w.training.microbatch_sizes.front();
      const LayerVariant& v = layer.variant(tmp, b);
      const OperatorGraph& g = pass == "fw" ? v.fw : v.bw;
      const std::vector<OperatorEstimate> est = estimate_graph(g, engine.accelerator, engine.cost);
      if (!dump_estimates.empty()) {
        std::ostringstream os;
        os << "op,single_core,intra_op\n";
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
          os << g.nodes[i].id << "," << est[i].single_core << "," << est[i].intra_op << "\n";
        }
        write_file(dump_estimates, os.str());
      }
      if (!export_lp.empty()) write_file(export_lp, IlpModel::build(g, est, engine.accelerator).export_lp());
      SolveOptions so = engine.search.ilp;
      if (time_limit >= 0) so.time_limit_seconds = time_limit;
      LayerSchedule s = full_model ? solve(IlpModel::build(g, est, engine.accelerator), so)
                                   : solve_lazy(g, est, engine.accelerator, so);
      s.pass = pass == "fw" ? Pass::Forward : Pass::Backward;
      std::cout << schedule_to_json(s);
      return 0;
    }
    if (place->parsed()) {
      EngineConfig engine = load_config(config_path);
      if (gpipe) engine.placement.schedule = PipelineSchedule::GPipe;
      if (!recompute.empty()) engine.placement.recompute = recompute_policy_from_string(recompute);
      const Workload w = parse_workload(workload_path);
      ScheduleCache cache;
      const ModelResult r = evaluate_model(w, engine.accelerator, engine, cache);
      if (!r.solution) {
        std::cerr << "infeasible: " << r.error << "\n";
        return 2;
      }
      std::cout << (explain_text ? explain(*r.solution) : solution_to_json(*r.solution));
      return 0;
    }
    if (configs->parsed()) {
      const EngineConfig engine = load_config(config_path);
      const std::string csv = configs_csv(enumerate_configs(engine.bounds, engine.area));
      if (dump_configs.empty()) {
        std::cout << csv;
      } else {
        write_file(dump_configs, csv);
      }
      return 0;
    }
    if (gen->parsed()) {
      spec.training.tmp_widths = parse_list<int>(tmp_list);
      spec.training.microbatch_sizes = parse_list<int>(mb_list);
      spec.training.hbm_candidates = parse_list<Bytes>(hbm_list);
      write_workload(generate_transformer(spec), gen_out);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
