/* Copyright 2026 The Autoplan Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#ifndef AUTOPLAN_TESTS_HELPERS_HPP_
#define AUTOPLAN_TESTS_HELPERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "autoplan/ckpt.hpp"
#include "autoplan/cluster.hpp"
#include "autoplan/graph_ir.hpp"
#include "autoplan/intraop.hpp"
#include "autoplan/layout.hpp"
#include "autoplan/planner.hpp"

// Shared fixtures and independent oracles for the test suite. Everything in
// here either builds inputs or re-derives expected results from first
// principles; nothing reuses the library's own cost accounting, so a bug in
// the library cannot cancel out of a comparison.
namespace testutil {

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

inline autoplan::NodeRef nref(const std::string& id, int out = 0) {
  return autoplan::NodeRef{id, out};
}

// Assembles a ComputationGraph directly, in insertion (= topological) order,
// then runs meta inference. Bypasses the document parser on purpose: the
// parser has its own tests and direct construction keeps fixtures terse.
class GraphBuilder {
 public:
  GraphBuilder& placeholder(const std::string& id, std::vector<int64_t> shape,
                            int dtype_bytes = 4, bool requires_grad = false) {
    autoplan::GraphNode n;
    n.id = id;
    n.kind = autoplan::NodeKind::kPlaceholder;
    n.outputs = {
        autoplan::TensorMeta{std::move(shape), dtype_bytes, requires_grad}};
    g_.nodes.push_back(std::move(n));
    g_.placeholders.push_back(id);
    return *this;
  }

  GraphBuilder& parameter(const std::string& id, std::vector<int64_t> shape,
                          int dtype_bytes = 4, bool requires_grad = true) {
    autoplan::GraphNode n;
    n.id = id;
    n.kind = autoplan::NodeKind::kParameter;
    n.outputs = {
        autoplan::TensorMeta{std::move(shape), dtype_bytes, requires_grad}};
    g_.nodes.push_back(std::move(n));
    return *this;
  }

  GraphBuilder& constant(const std::string& id, std::vector<int64_t> shape,
                         int dtype_bytes = 4) {
    autoplan::GraphNode n;
    n.id = id;
    n.kind = autoplan::NodeKind::kConstant;
    n.outputs = {autoplan::TensorMeta{std::move(shape), dtype_bytes, false}};
    g_.nodes.push_back(std::move(n));
    return *this;
  }

  GraphBuilder& op(const std::string& id, autoplan::NodeKind kind,
                   std::vector<autoplan::NodeRef> inputs,
                   autoplan::NodeAttrs attrs = {}) {
    autoplan::GraphNode n;
    n.id = id;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.attrs = std::move(attrs);
    g_.nodes.push_back(std::move(n));
    return *this;
  }

  GraphBuilder& in_place() {
    g_.nodes.back().in_place = true;
    return *this;
  }

  // Appends the output marker consuming `of`, finalizes and meta-infers.
  autoplan::ComputationGraph output(const std::string& of) {
    autoplan::GraphNode n;
    n.id = "out";
    n.kind = autoplan::NodeKind::kOutput;
    n.inputs = {nref(of)};
    g_.nodes.push_back(std::move(n));
    g_.output = "out";
    g_.rebuild_index();
    autoplan::infer_meta(g_);
    return std::move(g_);
  }

 private:
  autoplan::ComputationGraph g_;
};

// x[batch,d_in] -> matmul w1 -> relu -> matmul w2 -> out. The canonical
// two-layer MLP used across the solver tests.
inline autoplan::ComputationGraph mlp_graph(int64_t batch, int64_t d_in,
                                            int64_t d_hidden, int64_t d_out) {
  GraphBuilder b;
  b.placeholder("x", {batch, d_in});
  b.parameter("w1", {d_in, d_hidden});
  b.parameter("w2", {d_hidden, d_out});
  b.op("mm1", autoplan::NodeKind::kMatmul, {nref("x"), nref("w1")});
  b.op("relu", autoplan::NodeKind::kElementwiseUnary, {nref("mm1")});
  b.op("mm2", autoplan::NodeKind::kMatmul, {nref("relu"), nref("w2")});
  return b.output("mm2");
}

// Pure elementwise chain: x -> r1 -> r2 -> ... -> rL -> out.
inline autoplan::ComputationGraph chain_graph(int length, int64_t extent = 8) {
  GraphBuilder b;
  b.placeholder("x", {extent, extent});
  std::string prev = "x";
  for (int i = 1; i <= length; ++i) {
    std::string id = "r" + std::to_string(i);
    b.op(id, autoplan::NodeKind::kElementwiseUnary, {nref(prev)});
    prev = id;
  }
  return b.output(prev);
}

// Residual block fed by an internal activation: p -> pre -> a -> b ->
// add(pre, b) -> out. `pre` plays the skip input's role; because it is a
// walked node with two children, the dependency pool keeps {a, b, add} in
// one group until `add` retires both uses.
inline autoplan::ComputationGraph residual_graph(int64_t extent = 8) {
  GraphBuilder b;
  b.placeholder("p", {extent, extent}, 4, true);
  b.op("pre", autoplan::NodeKind::kElementwiseUnary, {nref("p")});
  b.op("a", autoplan::NodeKind::kElementwiseUnary, {nref("pre")});
  b.op("b", autoplan::NodeKind::kElementwiseUnary, {nref("a")});
  b.op("add", autoplan::NodeKind::kElementwiseBinary, {nref("pre"), nref("b")});
  return b.output("add");
}

// Stack of single-head self-attention blocks over a [seq, hidden] stream,
// all sharing one boolean mask that is *derived* inside the graph (constant
// -> getitem view). Every block reads the mask view, so without common-node
// handling the mask's pending-consumer count would fuse all blocks into one
// linearization group.
inline autoplan::ComputationGraph transformer_graph(int blocks,
                                                    int64_t seq = 8,
                                                    int64_t hidden = 16) {
  using autoplan::NodeKind;
  GraphBuilder b;
  b.placeholder("h0", {seq, hidden}, 4, true);
  b.constant("mask_src", {seq, seq}, 1);
  b.op("mask", NodeKind::kGetItem, {nref("mask_src")});
  std::string h = "h0";
  for (int i = 0; i < blocks; ++i) {
    const std::string p = "b" + std::to_string(i) + "_";
    b.parameter(p + "wq", {hidden, hidden});
    b.parameter(p + "wk", {hidden, hidden});
    b.parameter(p + "wv", {hidden, hidden});
    b.op(p + "q", NodeKind::kMatmul, {nref(h), nref(p + "wq")});
    b.op(p + "k", NodeKind::kMatmul, {nref(h), nref(p + "wk")});
    b.op(p + "v", NodeKind::kMatmul, {nref(h), nref(p + "wv")});
    autoplan::NodeAttrs tr;
    tr.perm = {1, 0};
    b.op(p + "kt", NodeKind::kTranspose, {nref(p + "k")}, tr);
    b.op(p + "scores", NodeKind::kMatmul, {nref(p + "q"), nref(p + "kt")});
    b.op(p + "masked", NodeKind::kElementwiseBinary,
         {nref(p + "scores"), nref("mask")});
    b.op(p + "probs", NodeKind::kSoftmax, {nref(p + "masked")});
    b.op(p + "attn", NodeKind::kMatmul, {nref(p + "probs"), nref(p + "v")});
    b.op(p + "res", NodeKind::kElementwiseBinary, {nref(p + "attn"), nref(h)});
    h = p + "res";
  }
  return b.output(h);
}

// ---------------------------------------------------------------------------
// Topologies
// ---------------------------------------------------------------------------

// Eight devices, four fast pairs (d0,d1)(d2,d3)(d4,d5)(d6,d7), uniform slow
// links everywhere else. The canonical "NVLink pairs inside PCIe boxes"
// shape used by the fast-axis placement tests.
inline autoplan::Topology pair_topology8(double fast_latency_s = 1e-6,
                                         double fast_bandwidth = 300e9,
                                         double slow_latency_s = 5e-6,
                                         double slow_bandwidth = 16e9) {
  autoplan::Topology t;
  for (int i = 0; i < 8; ++i) t.devices.push_back("d" + std::to_string(i));
  t.device_flops_per_s = 312e12;
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) {
      const bool fast = (i / 2 == j / 2);
      t.links.push_back({t.devices[i], t.devices[j],
                         fast ? fast_latency_s : slow_latency_s,
                         fast ? fast_bandwidth : slow_bandwidth});
    }
  }
  return t;
}

// Fully uniform topology: every pair linked with the same constants.
inline autoplan::Topology uniform_topology(int devices, double latency_s = 1e-5,
                                           double bandwidth = 1e9,
                                           double flops = 1e12) {
  autoplan::Topology t;
  for (int i = 0; i < devices; ++i) t.devices.push_back("d" + std::to_string(i));
  t.device_flops_per_s = flops;
  for (int i = 0; i < devices; ++i) {
    for (int j = i + 1; j < devices; ++j) {
      t.links.push_back({t.devices[i], t.devices[j], latency_s, bandwidth});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Sharding-spec enumeration and path replay oracles
// ---------------------------------------------------------------------------

// Every valid sharding spec for `meta` on `mesh`: all ways to distribute
// ordered, disjoint mesh-axis lists over the tensor dims, divisibility
// included. Independent of one_step_transforms.
inline std::vector<autoplan::ShardingSpec> all_valid_specs(
    const autoplan::TensorMeta& meta, const autoplan::DeviceMesh& mesh) {
  const int rank = static_cast<int>(meta.rank());
  const int mesh_rank = mesh.rank();
  std::vector<autoplan::ShardingSpec> out;
  autoplan::ShardingSpec spec = autoplan::ShardingSpec::replicated(rank, mesh_rank);
  std::vector<bool> used(mesh_rank, false);

  auto recurse = [&](auto&& self, int dim) -> void {
    if (dim == rank) {
      if (spec.valid_for(meta, mesh)) out.push_back(spec);
      return;
    }
    // Replicated dim.
    self(self, dim + 1);
    // Sharded dim: every ordered list of distinct unused axes.
    auto extend = [&](auto&& ext) -> void {
      for (int axis = 0; axis < mesh_rank; ++axis) {
        if (used[axis]) continue;
        used[axis] = true;
        spec.dims[dim].axes.push_back(axis);
        self(self, dim + 1);
        ext(ext);
        spec.dims[dim].axes.pop_back();
        used[axis] = false;
      }
    };
    extend(extend);
  };
  recurse(recurse, 0);
  return out;
}

// Applies one transform step to `spec` using the documented semantics
// (gather pops the last axis of a dim, shard appends an unused axis,
// all-to-all moves the last axis of one dim onto another). Returns false on
// any inconsistency between the step's fields and the spec.
inline bool apply_step(const autoplan::TransformStep& step,
                       autoplan::ShardingSpec& spec) {
  using autoplan::CollectiveKind;
  const int rank = spec.tensor_rank();
  if (step.tensor_dim < 0 || step.tensor_dim >= rank) return false;
  autoplan::DimSpec& d = spec.dims[step.tensor_dim];
  switch (step.kind) {
    case CollectiveKind::kAllGather:
      if (d.axes.empty() || d.axes.back() != step.mesh_axis) return false;
      d.axes.pop_back();
      return true;
    case CollectiveKind::kShardSlice: {
      for (int axis : spec.used_axes()) {
        if (axis == step.mesh_axis) return false;  // axis already in use
      }
      d.axes.push_back(step.mesh_axis);
      return true;
    }
    case CollectiveKind::kAllToAll: {
      if (step.target_dim < 0 || step.target_dim >= rank) return false;
      if (step.target_dim == step.tensor_dim) return false;
      if (d.axes.empty() || d.axes.back() != step.mesh_axis) return false;
      d.axes.pop_back();
      spec.dims[step.target_dim].axes.push_back(step.mesh_axis);
      return true;
    }
    default:
      return false;  // reduce collectives never appear in conversion paths
  }
}

// Replays a conversion path step by step, checking each intermediate result
// and divisibility. Returns "" when the path soundly maps source to target.
inline std::string replay_path_error(const autoplan::TransformPath& path,
                                     const autoplan::DeviceMesh& mesh,
                                     const autoplan::TensorMeta& meta) {
  autoplan::ShardingSpec cur = path.source;
  for (size_t i = 0; i < path.steps.size(); ++i) {
    if (!apply_step(path.steps[i], cur)) {
      return "step " + std::to_string(i) + " is inconsistent with spec " +
             cur.to_string();
    }
    if (!(cur == path.steps[i].result)) {
      return "step " + std::to_string(i) + " result " +
             path.steps[i].result.to_string() + " but replay produced " +
             cur.to_string();
    }
    if (!cur.valid_for(meta, mesh)) {
      return "step " + std::to_string(i) + " leaves invalid spec " +
             cur.to_string();
    }
  }
  if (!(cur == path.target)) {
    return "replay ends at " + cur.to_string() + " instead of " +
           path.target.to_string();
  }
  return "";
}

// Breadth-first minimal step count from src to tgt over the one-step
// transform graph. The optimality oracle the heuristic search is compared
// against.
inline int bfs_min_steps(const autoplan::ShardingSpec& src,
                         const autoplan::ShardingSpec& tgt,
                         const autoplan::DeviceMesh& mesh,
                         const autoplan::TensorMeta& meta) {
  if (src == tgt) return 0;
  std::set<std::string> visited{src.to_string()};
  std::vector<std::pair<autoplan::ShardingSpec, int>> frontier{{src, 0}};
  const std::string target = tgt.to_string();
  for (size_t head = 0; head < frontier.size(); ++head) {
    auto [spec, depth] = frontier[head];
    for (auto& [next, step] : autoplan::one_step_transforms(spec, mesh, meta)) {
      (void)step;
      if (next.to_string() == target) return depth + 1;
      if (visited.insert(next.to_string()).second) {
        frontier.emplace_back(next, depth + 1);
      }
    }
  }
  return -1;  // unreachable: the transform graph is connected
}

// ---------------------------------------------------------------------------
// Strategy-table brute force
// ---------------------------------------------------------------------------

struct BruteForce {
  bool feasible = false;
  double best_time = 0;
  std::vector<int> selection;
};

// Exhaustive argmin over all strategy assignments, with its own cost
// accumulation. Selections are scanned in lexicographic order with strict
// improvement, so ties resolve to the lexicographically smallest optimum —
// the same tie-break solve() documents.
inline BruteForce brute_force(const autoplan::StrategyTable& table,
                              int64_t budget_bytes) {
  const int n = table.num_nodes();
  BruteForce out;
  std::vector<int> sel(n, 0);
  for (int i = 0; i < n; ++i) {
    if (table.strategies[i].empty()) return out;  // nothing to select
  }
  while (true) {
    int64_t mem = 0;
    double time = 0;
    for (int i = 0; i < n; ++i) {
      const autoplan::OpStrategy& s = table.strategies[i][sel[i]];
      mem += s.memory_bytes;
      time += s.compute_time_s + s.comm_time_s;
    }
    if (mem <= budget_bytes) {
      for (const auto& e : table.edges) {
        const size_t cols = table.strategies[e.dst].size();
        time += e.cost[sel[e.src] * cols + sel[e.dst]];
      }
      if (!out.feasible || time < out.best_time) {
        out.feasible = true;
        out.best_time = time;
        out.selection = sel;
      }
    }
    int i = n - 1;
    while (i >= 0 && sel[i] + 1 >= static_cast<int>(table.strategies[i].size())) {
      sel[i] = 0;
      --i;
    }
    if (i < 0) break;
    ++sel[i];
  }
  return out;
}

// Random synthetic solver instance: a spanning tree plus extra edges, with
// small-integer costs so oracle comparisons are exact equality rather than
// tolerance. Shapes mirror what merged graphs produce (src < dst, parallel
// edges possible).
inline autoplan::StrategyTable random_table(std::mt19937& rng, int max_nodes = 8,
                                            int max_strategies = 5) {
  std::uniform_int_distribution<int> node_count(1, max_nodes);
  std::uniform_int_distribution<int> strategy_count(1, max_strategies);
  std::uniform_int_distribution<int> cost(0, 10);
  std::uniform_int_distribution<int> comm(0, 5);
  std::uniform_int_distribution<int> mem(0, 12);
  std::uniform_int_distribution<int> edge_cost(0, 6);
  std::uniform_int_distribution<int> pct(0, 99);

  autoplan::StrategyTable table;
  const int n = node_count(rng);
  table.strategies.resize(n);
  for (int i = 0; i < n; ++i) {
    const int k = strategy_count(rng);
    for (int s = 0; s < k; ++s) {
      autoplan::OpStrategy strat;
      strat.name = "s" + std::to_string(s);
      strat.compute_time_s = cost(rng);
      strat.comm_time_s = comm(rng);
      strat.memory_bytes = mem(rng);
      table.strategies[i].push_back(std::move(strat));
    }
  }
  auto add_edge = [&](int u, int v) {
    autoplan::StrategyTable::Edge e;
    e.src = u;
    e.dst = v;
    const size_t rows = table.strategies[u].size();
    const size_t cols = table.strategies[v].size();
    e.cost.resize(rows * cols);
    for (double& c : e.cost) c = edge_cost(rng);
    table.edges.push_back(std::move(e));
  };
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> parent(0, v - 1);
    add_edge(parent(rng), v);
  }
  for (int v = 1; v < n; ++v) {
    if (pct(rng) < 30) {
      std::uniform_int_distribution<int> parent(0, v - 1);
      add_edge(parent(rng), v);  // extra (possibly parallel) edge
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Rematerialization oracles
// ---------------------------------------------------------------------------

// Un-memoized transcription of the communication-extended recurrence: the
// optimal persistent-sequence time for stages [s, t] under memory m.
// Mirrors the published formulas term by term; `prefix_comm` additionally
// charges the recomputed prefix its forward communication time (the
// optional variant rotor_solve exposes).
inline double rotor_oracle(const std::vector<autoplan::StageCost>& st, int s,
                           int t, int64_t m, bool prefix_comm = false) {
  const double inf = std::numeric_limits<double>::infinity();

  auto m_all = [&](int a, int b) {
    const int64_t fwd = st[b].w_delta + st[a].w_abar + st[a].o_f + st[a].o_fcomm;
    const int64_t bwd = st[a].w_delta + st[a].w_abar + st[a].o_b + st[a].o_bcomm;
    return std::max(fwd, bwd);
  };
  auto m_none = [&](int a, int b) {
    int64_t need = st[b].w_delta + st[a].w_a + st[a].o_f + st[a].o_fcomm;
    for (int j = a + 1; j < b; ++j) {
      need = std::max(need, st[b].w_delta + st[j - 1].w_a + st[j].w_a +
                                st[j].o_f + st[j].o_fcomm);
    }
    return need;
  };

  if (s == t) {
    if (m < m_all(s, s)) return inf;
    return st[s].u_f + st[s].u_fcomm + st[s].u_b + st[s].u_bcomm;
  }

  double c1 = inf;
  if (m >= m_none(s, t)) {
    for (int split = s + 1; split <= t; ++split) {
      double prefix = 0;
      for (int k = s; k < split; ++k) {
        prefix += st[k].u_f + (prefix_comm ? st[k].u_fcomm : 0.0);
      }
      const double tail =
          rotor_oracle(st, split, t, m - st[split - 1].w_a, prefix_comm);
      const double head = rotor_oracle(st, s, split - 1, m, prefix_comm);
      c1 = std::min(c1, prefix + tail + head);
    }
  }
  double c2 = inf;
  if (m >= m_all(s, t)) {
    c2 = st[s].u_f + st[s].u_fcomm +
         rotor_oracle(st, s + 1, t, m - st[s].w_abar, prefix_comm) +
         st[s].u_b + st[s].u_bcomm;
  }
  return std::min(c1, c2);
}

// The original recurrence with no communication terms at all, written
// separately so the zero-communication reduction is compared against an
// expression that never mentions comm fields.
inline double rotor_classic_oracle(const std::vector<autoplan::StageCost>& st,
                                   int s, int t, int64_t m) {
  const double inf = std::numeric_limits<double>::infinity();

  auto m_all = [&](int a, int b) {
    const int64_t fwd = st[b].w_delta + st[a].w_abar + st[a].o_f;
    const int64_t bwd = st[a].w_delta + st[a].w_abar + st[a].o_b;
    return std::max(fwd, bwd);
  };
  auto m_none = [&](int a, int b) {
    int64_t need = st[b].w_delta + st[a].w_a + st[a].o_f;
    for (int j = a + 1; j < b; ++j) {
      need = std::max(need,
                      st[b].w_delta + st[j - 1].w_a + st[j].w_a + st[j].o_f);
    }
    return need;
  };

  if (s == t) {
    if (m < m_all(s, s)) return inf;
    return st[s].u_f + st[s].u_b;
  }
  double c1 = inf;
  if (m >= m_none(s, t)) {
    for (int split = s + 1; split <= t; ++split) {
      double prefix = 0;
      for (int k = s; k < split; ++k) prefix += st[k].u_f;
      c1 = std::min(c1, prefix +
                            rotor_classic_oracle(st, split, t,
                                                 m - st[split - 1].w_a) +
                            rotor_classic_oracle(st, s, split - 1, m));
    }
  }
  double c2 = inf;
  if (m >= m_all(s, t)) {
    c2 = st[s].u_f + rotor_classic_oracle(st, s + 1, t, m - st[s].w_abar) +
         st[s].u_b;
  }
  return std::min(c1, c2);
}

// Re-prices a schedule from its op sequence: full-set forwards charge
// compute + communication, recomputation forwards charge compute only (plus
// communication when the prefix flag is on), backwards charge both. Checks
// that the DP's reported total and its expansion agree.
inline double ops_total_time(const std::vector<autoplan::StageCost>& st,
                             const std::vector<autoplan::ScheduleOp>& ops,
                             bool prefix_comm = false) {
  double total = 0;
  for (const autoplan::ScheduleOp& op : ops) {
    const autoplan::StageCost& c = st[op.stage];
    switch (op.kind) {
      case autoplan::ScheduleOp::Kind::kFAll:
        total += c.u_f + c.u_fcomm;
        break;
      case autoplan::ScheduleOp::Kind::kFCk:
      case autoplan::ScheduleOp::Kind::kFNone:
        total += c.u_f + (prefix_comm ? c.u_fcomm : 0.0);
        break;
      case autoplan::ScheduleOp::Kind::kBackward:
        total += c.u_b + c.u_bcomm;
        break;
    }
  }
  return total;
}

// Random stage chain with small-integer costs (exact in double arithmetic).
inline std::vector<autoplan::StageCost> random_stages(std::mt19937& rng,
                                                      int max_len = 5) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> time(0, 10);
  std::uniform_int_distribution<int> bytes(0, 10);
  std::uniform_int_distribution<int> overhead(0, 5);
  std::vector<autoplan::StageCost> st(len(rng));
  for (autoplan::StageCost& c : st) {
    c.u_f = time(rng);
    c.u_b = time(rng);
    c.u_fcomm = time(rng) / 2;
    c.u_bcomm = time(rng) / 2;
    c.o_f = overhead(rng);
    c.o_b = overhead(rng);
    c.o_fcomm = overhead(rng) / 2;
    c.o_bcomm = overhead(rng) / 2;
    c.w_a = bytes(rng);
    c.w_abar = bytes(rng);
    c.w_delta = c.w_a;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Compiled-plan structural verification
// ---------------------------------------------------------------------------

// Structural soundness of a compiled plan against its source graph:
//   - no partial-sum output is read by anything but its all-reduce node;
//   - every cross-group edge whose endpoint layouts differ is rewired
//     through a conversion chain that replays from the producer's layout to
//     the consumer's required layout, and matching layouts keep their direct
//     wiring;
//   - gradient-sync annotations list exactly the mesh axes the parameter
//     layout leaves unused;
//   - applied reshape rewrites match their records.
// Returns "" on success, else a description of the first violation.
inline std::string verify_rewritten_plan(const autoplan::ComputationGraph& graph,
                                         const autoplan::ExecutionPlan& plan) {
  using namespace autoplan;
  MergedGraph merged = simplify_graph(graph);
  PathCache cache;
  StrategyTable table = build_strategy_table(merged, plan.mesh, cache);
  const std::vector<int>& sel = plan.intraop.selection;
  if (static_cast<int>(sel.size()) != table.num_nodes()) {
    return "selection covers " + std::to_string(sel.size()) + " groups, table has " +
           std::to_string(table.num_nodes());
  }
  const ComputationGraph& rw = plan.rewritten_graph;
  const auto rw_consumers = rw.consumers();

  auto fallback = [&](ShardingSpec spec, const TensorMeta& meta) {
    if (!spec.valid_for(meta, plan.mesh)) {
      return ShardingSpec::replicated(static_cast<int>(meta.rank()),
                                      plan.mesh.rank());
    }
    return spec;
  };

  for (const GraphNode& node : rw.nodes) {
    for (const NodeRef& in : node.inputs) {
      if (!rw.contains(in.node)) {
        return "rewritten node " + node.id + " references missing " + in.node;
      }
    }
  }

  // Partial sums: the producer's only reader must be its all-reduce.
  for (size_t g = 0; g < merged.groups.size(); ++g) {
    const OpStrategy& strat = table.strategies[g][sel[g]];
    if (!strat.partial_sum) continue;
    const std::string& host = merged.groups[g].host;
    const int pos = rw.index.at(host);
    for (const auto& [consumer, slot] : rw_consumers[pos]) {
      (void)slot;
      const GraphNode& cn = rw.nodes[consumer];
      if (cn.id != host + ".ar") {
        return "partial sum of " + host + " read by " + cn.id +
               " instead of its all-reduce";
      }
      if (cn.kind != NodeKind::kCommunication || cn.attrs.name != "all-reduce") {
        return host + ".ar is not an all-reduce node";
      }
      std::vector<int64_t> expected(strat.reduce_axes.begin(),
                                    strat.reduce_axes.end());
      if (cn.attrs.mesh_axes != expected) {
        return host + ".ar reduces over the wrong mesh axes";
      }
    }
  }

  // Edges: follow the rewired input back through communication nodes and
  // replay the conversion they encode.
  for (const MergedEdge& edge : merged.edges) {
    const TensorMeta& meta = edge_meta(graph, edge);
    const ShardingSpec from = fallback(
        edge_produced_spec(merged, edge, table.strategies[edge.src_group][sel[edge.src_group]]),
        meta);
    const ShardingSpec to = fallback(
        edge_required_spec(merged, edge, table.strategies[edge.dst_group][sel[edge.dst_group]]),
        meta);

    const GraphNode& consumer = rw.node(edge.consumer);
    if (edge.consumer_slot >= static_cast<int>(consumer.inputs.size())) {
      return "edge slot out of range on " + edge.consumer;
    }
    NodeRef cur = consumer.inputs[edge.consumer_slot];
    std::vector<const GraphNode*> chain;
    while (rw.node(cur.node).kind == NodeKind::kCommunication) {
      chain.push_back(&rw.node(cur.node));
      cur = rw.node(cur.node).inputs[0];
    }
    if (cur.node != edge.producer || cur.out_index != edge.producer_out) {
      return "edge " + edge.producer + " -> " + edge.consumer +
             " does not lead back to its producer (reached " + cur.node + ")";
    }
    // Walk producer-to-consumer: drop the trailing all-reduce (layout
    // neutral), then apply each conversion node's recorded step.
    ShardingSpec spec = from;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const GraphNode& cv = *(*it);
      if (cv.attrs.name == "all-reduce") continue;
      TransformStep step;
      if (cv.attrs.name == "all-gather") {
        step.kind = CollectiveKind::kAllGather;
      } else if (cv.attrs.name == "shard-slice") {
        step.kind = CollectiveKind::kShardSlice;
      } else if (cv.attrs.name == "all-to-all") {
        step.kind = CollectiveKind::kAllToAll;
      } else {
        return "unknown collective '" + cv.attrs.name + "' on " + cv.id;
      }
      step.mesh_axis = static_cast<int>(cv.attrs.mesh_axes.at(0));
      step.tensor_dim = static_cast<int>(cv.attrs.axes.at(0));
      step.target_dim = cv.attrs.axes.size() > 1
                            ? static_cast<int>(cv.attrs.axes[1])
                            : -1;
      if (!apply_step(step, spec)) {
        return "conversion " + cv.id + " is inconsistent at spec " +
               spec.to_string();
      }
    }
    if (!(spec == to)) {
      return "edge " + edge.producer + " -> " + edge.consumer + " delivers " +
             spec.to_string() + " but the consumer needs " + to.to_string();
    }
  }

  // Gradient sync annotations.
  for (const auto& [id, sync] : plan.param_shards) {
    if (!graph.contains(id)) return "param shard for unknown node " + id;
    const GraphNode& node = graph.node(id);
    if (node.kind != NodeKind::kParameter) return id + " is not a parameter";
    std::vector<int> expected;
    if (node.output().requires_grad) {
      std::vector<int> used = sync.spec.used_axes();
      for (int axis = 0; axis < plan.mesh.rank(); ++axis) {
        if (std::find(used.begin(), used.end(), axis) == used.end()) {
          expected.push_back(axis);
        }
      }
    }
    if (sync.replica_axes != expected) {
      return "gradient sync of " + id + " lists the wrong replica axes";
    }
  }

  // Reshape rewrites: applied constants must match their records.
  for (const ReshapeRewrite& rr : plan.reshape_rewrites) {
    if (!rw.contains(rr.node)) return "reshape rewrite for unknown " + rr.node;
    const GraphNode& node = rw.node(rr.node);
    if (rr.fallback_replicated) {
      if (node.attrs.target_shape != graph.node(rr.node).attrs.target_shape) {
        return "fallback reshape " + rr.node + " was still rewritten";
      }
    } else if (node.attrs.target_shape != rr.new_target_shape) {
      return "reshape " + rr.node + " constants do not match the record";
    }
  }
  return "";
}

}  // namespace testutil

#endif  // AUTOPLAN_TESTS_HELPERS_HPP_
