#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "phaze/driver.hpp"
#include "phaze/generator.hpp"

namespace py = pybind11;
using namespace phaze;

namespace {

EngineConfig load_engine(const std::string& path) {
  return path.empty() ? EngineConfig::defaults() : parse_engine_config(path);
}

OpKind kind_of(const std::string& s) { return op_kind_from_string(s); }

ZFamilies families_of(const std::string& s) {
  if (s == "none") return ZFamilies::None;
  if (s == "tensor") return ZFamilies::TensorOnly;
  if (s == "vector") return ZFamilies::VectorOnly;
  if (s == "both") return ZFamilies::Both;
  throw ValidationError("families must be none, tensor, vector or both");
}

// Graph with given kinds and per-operator (single, intra) latencies.
struct RawGraph {
  OperatorGraph graph;
  std::vector<OperatorEstimate> est;
  AcceleratorConfig cfg;
};

RawGraph raw_graph(const std::vector<std::string>& kinds, const std::vector<std::pair<int, int>>& edges,
                   const std::vector<std::pair<Tick, Tick>>& latencies, int num_tc, int num_vc) {
  if (kinds.size() != latencies.size()) throw ValidationError("kinds and latencies differ in length");
  RawGraph r;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    Operator op;
    op.id = "op" + std::to_string(i + 1);
    op.kind = kind_of(kinds[i]);
    op.flops = op.kind == OpKind::Vector ? 0 : 1;
    op.elementwise_len = op.kind == OpKind::Tensor ? 0 : 1;
    r.graph.nodes.push_back(op);
    r.est.push_back({latencies[i].first, latencies[i].second});
  }
  r.graph.edges.assign(edges.begin(), edges.end());
  r.graph.validate();
  r.cfg.num_tc = num_tc;
  r.cfg.num_vc = num_vc;
  return r;
}

}  // namespace

PYBIND11_MODULE(_phaze, m) {
  m.doc() = "Accelerator architecture search and training placement";

  // Later registrations are tried first, so the base class goes first.
  const auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());

  py::class_<Workload>(m, "Workload")
      .def_readonly("name", &Workload::name)
      .def_property_readonly("num_layers", [](const Workload& w) { return w.graph.layers.size(); })
      .def_property_readonly("layer_ids",
                             [](const Workload& w) {
                               std::vector<std::string> ids;
                               for (const Layer& l : w.graph.layers) ids.push_back(l.id);
                               return ids;
                             })
      .def("to_json", [](const Workload& w) { return serialize_workload(w); })
      .def("__eq__", [](const Workload& a, const Workload& b) { return a == b; });

  m.def("load_workload", &parse_workload, py::arg("path"));
  m.def("parse_workload", &parse_workload_text, py::arg("text"), py::arg("name") = "workload");
  m.def(
      "generate_transformer",
      [](int layers, std::int64_t hidden, std::int64_t heads, std::int64_t seq_len, std::vector<int> tmp_widths,
         std::vector<int> microbatch_sizes, int minibatch, int accelerators, std::int64_t bandwidth,
         std::vector<Bytes> hbm, const std::string& name) {
        TransformerSpec s;
        s.name = name;
        s.layers = layers;
        s.hidden = hidden;
        s.heads = heads;
        s.seq_len = seq_len;
        s.training.tmp_widths = std::move(tmp_widths);
        s.training.microbatch_sizes = std::move(microbatch_sizes);
        s.training.minibatch_microbatches = minibatch;
        s.training.num_accelerators = accelerators;
        s.training.network_bandwidth = bandwidth;
        s.training.hbm_candidates = std::move(hbm);
        return generate_transformer(s);
      },
      py::arg("layers") = 24, py::arg("hidden") = 1024, py::arg("heads") = 16, py::arg("seq_len") = 1024,
      py::arg("tmp_widths") = std::vector<int>{1}, py::arg("microbatch_sizes") = std::vector<int>{1},
      py::arg("minibatch") = 1, py::arg("accelerators") = 1, py::arg("bandwidth") = 1,
      py::arg("hbm") = std::vector<Bytes>{80 * kGiB}, py::arg("name") = "transformer");

  m.def(
      "derived_l2",
      [](int pe_x, int pe_y) {
        const L2Sizes l = derived_l2(pe_x, pe_y);
        return std::make_pair(l.l2_tc, l.l2_vc);
      },
      py::arg("pe_x"), py::arg("pe_y"));
  m.def("allreduce_ticks", &allreduce_ticks, py::arg("tensor_bytes"), py::arg("num_devices"), py::arg("bandwidth"));
  m.def("transfer_ticks", &transfer_ticks, py::arg("bytes"), py::arg("bandwidth"));

  m.def(
      "enumerate_configs",
      [](const std::string& config) {
        const EngineConfig e = load_engine(config);
        py::list out;
        for (const RankedConfig& r : enumerate_configs(e.bounds, e.area)) {
          py::dict d;
          d["num_tc"] = r.config.num_tc;
          d["num_vc"] = r.config.num_vc;
          d["pe_x"] = r.config.pe_x;
          d["pe_y"] = r.config.pe_y;
          d["pe_vc"] = r.config.pe_vc;
          d["glb_bytes"] = r.config.glb;
          d["glb_bw_words"] = r.config.glb_bw;
          d["l2_tc_bytes"] = r.config.l2_tc;
          d["l2_vc_bytes"] = r.config.l2_vc;
          d["area"] = r.area.str();
          out.append(d);
        }
        return out;
      },
      py::arg("config") = "");

  m.def(
      "graph_lp",
      [](const std::vector<std::string>& kinds, const std::vector<std::pair<int, int>>& edges,
         const std::vector<std::pair<Tick, Tick>>& latencies, int num_tc, int num_vc, const std::string& families) {
        const RawGraph r = raw_graph(kinds, edges, latencies, num_tc, num_vc);
        return IlpModel::build(r.graph, r.est, r.cfg, families_of(families)).export_lp();
      },
      py::arg("kinds"), py::arg("edges"), py::arg("latencies"), py::arg("num_tc"), py::arg("num_vc"),
      py::arg("families") = "both");
  m.def(
      "schedule_graph",
      [](const std::vector<std::string>& kinds, const std::vector<std::pair<int, int>>& edges,
         const std::vector<std::pair<Tick, Tick>>& latencies, int num_tc, int num_vc, bool lazy) {
        const RawGraph r = raw_graph(kinds, edges, latencies, num_tc, num_vc);
        const LayerSchedule s =
            lazy ? solve_lazy(r.graph, r.est, r.cfg) : solve(IlpModel::build(r.graph, r.est, r.cfg));
        return schedule_to_json(s);
      },
      py::arg("kinds"), py::arg("edges"), py::arg("latencies"), py::arg("num_tc"), py::arg("num_vc"),
      py::arg("lazy") = true);

  m.def(
      "place",
      [](const Workload& w, const std::string& config, const std::string& recompute, bool gpipe) {
        EngineConfig e = load_engine(config);
        e.placement.recompute = recompute_policy_from_string(recompute);
        if (gpipe) e.placement.schedule = PipelineSchedule::GPipe;
        ScheduleCache cache;
        const ModelResult r = [&] {
          py::gil_scoped_release release;
          return evaluate_model(w, e.accelerator, e, cache);
        }();
        if (!r.solution) throw InfeasibleError(r.error);
        return solution_to_json(*r.solution);
      },
      py::arg("workload"), py::arg("config") = "", py::arg("recompute") = "auto", py::arg("gpipe") = false);

  m.def(
      "search",
      [](const std::vector<Workload>& models, const std::string& config, int hysteresis, bool exhaustive,
         int workers) {
        const EngineConfig e = load_engine(config);
        SearchOptions o;
        o.hysteresis = hysteresis > 0 ? hysteresis : e.search.hysteresis;
        o.exhaustive = exhaustive;
        o.workers = workers > 0 ? workers : default_workers();
        py::gil_scoped_release release;
        return report_json(run_search(models, e, o));
      },
      py::arg("workloads"), py::arg("config") = "", py::arg("hysteresis") = 0, py::arg("exhaustive") = false,
      py::arg("workers") = 1);
}
