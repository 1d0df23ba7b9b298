#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "phaze/costmodel.hpp"

namespace phaze {

// Which core-assignment (z) families are materialized in the model.
enum class ZFamilies { None, TensorOnly, VectorOnly, Both };
const char* to_string(ZFamilies z);

enum class Pass { Forward, Backward };
const char* to_string(Pass p);

enum class VarType { Continuous, Binary };
enum class Sense { Le, Ge, Eq };

struct Variable {
  std::string name;
  VarType type = VarType::Continuous;
  std::int64_t lower = 0;
  std::optional<std::int64_t> upper;  // unbounded when empty
};

struct Term {
  int var = 0;
  std::int64_t coef = 0;
};

struct Row {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::Le;
  std::int64_t rhs = 0;
};

// Disjunctive makespan model for one operator graph on one accelerator.
// Variables: t_i (start), p_i (duration), T (makespan), y_i (intra-op mode),
// x_i_j (i finishes before j starts), ztc_i_c / zvc_i_c (core assignment).
// Names are 1-based. Precedence-implied x values are fixed through bounds.
class IlpModel {
 public:
  struct Options {
    ZFamilies with_z = ZFamilies::Both;
    // Transitivity rows are implied by the ordering rows whenever every
    // latency is positive, so they are only materialized on request.
    // evaluate() checks them either way.
    bool explicit_transitivity = false;
  };

  static IlpModel build(const OperatorGraph& g, const std::vector<OperatorEstimate>& est, const AcceleratorConfig& cfg,
                        const Options& options);
  static IlpModel build(const OperatorGraph& g, const std::vector<OperatorEstimate>& est, const AcceleratorConfig& cfg,
                        ZFamilies with_z = ZFamilies::Both);

  int num_ops() const { return static_cast<int>(est_.size()); }
  int num_tc() const { return num_tc_; }
  int num_vc() const { return num_vc_; }
  // Tensor core c and vector core c are paired for c < num_pairs().
  int num_pairs() const { return std::min(num_tc_, num_vc_); }
  ZFamilies with_z() const { return options_.with_z; }
  bool explicit_transitivity() const { return options_.explicit_transitivity; }
  Tick big_m() const { return big_m_; }

  const std::vector<OperatorEstimate>& estimates() const { return est_; }
  const std::vector<OpKind>& kinds() const { return kinds_; }
  const std::vector<std::string>& op_ids() const { return op_ids_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool precedes(int i, int j) const { return closure_[i][j]; }

  bool uses_tc(int i) const { return kinds_[i] != OpKind::Vector; }
  bool uses_vc(int i) const { return kinds_[i] != OpKind::Tensor; }
  bool tc_family() const { return options_.with_z == ZFamilies::TensorOnly || options_.with_z == ZFamilies::Both; }
  bool vc_family() const { return options_.with_z == ZFamilies::VectorOnly || options_.with_z == ZFamilies::Both; }

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Row>& rows() const { return rows_; }

  int var_t(int i) const { return t_[i]; }
  int var_p(int i) const { return p_[i]; }
  int var_y(int i) const { return y_[i]; }
  int var_T() const { return T_; }
  int var_x(int i, int j) const { return x_[i][j]; }    // -1 when i == j
  int var_ztc(int i, int c) const;                      // -1 when absent
  int var_zvc(int i, int c) const;                      // -1 when absent
  int var_index(const std::string& name) const;         // -1 when unknown

  // Row names violated by a full assignment (indexed like variables()),
  // including bound and integrality violations and transitivity rows.
  std::vector<std::string> evaluate(const std::vector<std::int64_t>& values) const;

  // CPLEX LP text: Minimize, Subject To, Bounds, Binaries, End.
  std::string export_lp() const;

 private:
  int add_var(std::string name, VarType type, std::int64_t lower, std::optional<std::int64_t> upper);
  std::vector<Row> transitivity_rows() const;

  Options options_;
  int num_tc_ = 0;
  int num_vc_ = 0;
  Tick big_m_ = 0;
  std::vector<OperatorEstimate> est_;
  std::vector<OpKind> kinds_;
  std::vector<std::string> op_ids_;
  std::vector<Edge> edges_;
  std::vector<std::vector<bool>> closure_;

  std::vector<Variable> vars_;
  std::vector<Row> rows_;
  std::map<std::string, int> by_name_;
  std::vector<int> t_, p_, y_;
  int T_ = -1;
  std::vector<std::vector<int>> x_;
  std::vector<std::vector<int>> ztc_, zvc_;
};

enum class SolveStatus { Optimal, TimeLimit, NodeLimit };
const char* to_string(SolveStatus s);

struct ScheduledOp {
  std::string id;
  Tick start = 0;
  Tick duration = 0;
  bool intra_op = false;
  // 0-based core index for single-core operators: a tensor core, a vector
  // core, or a tensor/vector pair for fused operators. -1 in intra-op mode
  // and when the model left that core type unconstrained and no assignment
  // exists.
  int core = -1;

  Tick finish() const { return start + duration; }
  bool operator==(const ScheduledOp&) const = default;
};

struct LayerSchedule {
  Pass pass = Pass::Forward;
  std::vector<ScheduledOp> ops;  // graph node order
  Tick makespan = 0;
  SolveStatus status = SolveStatus::Optimal;
  Tick lower_bound = 0;  // proven bound on the optimal makespan
  std::int64_t nodes = 0;
  int invocations = 1;
  ZFamilies families = ZFamilies::Both;  // families of the final solve

  double gap() const;
};

struct SolveOptions {
  double time_limit_seconds = 60.0;
  std::int64_t node_limit = 0;  // 0 = unlimited
};

// Exact depth-first branch and bound over start-ordered schedules.
LayerSchedule solve(const IlpModel& m, const SolveOptions& options = SolveOptions{});

// Solves without core-assignment families and re-adds only the families whose
// capacity the relaxed schedule exceeds (at most three solves).
LayerSchedule solve_lazy(const OperatorGraph& g, const std::vector<OperatorEstimate>& est,
                         const AcceleratorConfig& cfg, const SolveOptions& options = SolveOptions{});

struct Violation {
  std::string kind;  // precedence, exclusivity, core-overlap, core-range, pairing, duration, makespan, structure
  std::string detail;
};

std::vector<Violation> validate_schedule(const LayerSchedule& s, const OperatorGraph& g,
                                         const std::vector<OperatorEstimate>& est, const AcceleratorConfig& cfg);

// Maps a schedule onto model variables (x_i_j = 1 iff i finishes before j
// starts); unassigned cores leave their z variables at 0.
std::vector<std::int64_t> assignment_from_schedule(const IlpModel& m, const LayerSchedule& s);

std::string schedule_to_json(const LayerSchedule& s, int indent = 2);

struct LayerLatencies {
  Tick fw = 0;
  Tick bw = 0;
  bool optimal = true;
};

// Thread-safe memo of layer makespans keyed by graph structure, accelerator
// and cost parameters. Operator ids do not take part in the key.
class ScheduleCache {
 public:
  struct Entry {
    Tick makespan = 0;
    bool optimal = true;
  };

  std::optional<Entry> find(const std::string& key);
  void insert(const std::string& key, Entry e);

  std::int64_t hits() const { return hits_.load(); }
  std::int64_t misses() const { return misses_.load(); }
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
  std::atomic<std::int64_t> hits_{0};
  std::atomic<std::int64_t> misses_{0};
};

std::string schedule_cache_key(const OperatorGraph& g, const AcceleratorConfig& cfg, const CostModelParams& params);

Tick graph_latency(const OperatorGraph& g, const AcceleratorConfig& cfg, const CostModelParams& params,
                   ScheduleCache& cache, const SolveOptions& options = SolveOptions{}, bool* optimal = nullptr);

// Forward and backward makespans of the (t, b) variant of a layer.
LayerLatencies layer_latencies(const Layer& layer, const AcceleratorConfig& cfg, int t, int b,
                               const CostModelParams& params, ScheduleCache& cache,
                               const SolveOptions& options = SolveOptions{});

}  // namespace phaze
