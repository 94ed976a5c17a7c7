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
#ifndef AUTOPLAN_INTRAOP_HPP_
#define AUTOPLAN_INTRAOP_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoplan/cluster.hpp"
#include "autoplan/graph_ir.hpp"
#include "autoplan/layout.hpp"

namespace autoplan {

// One candidate SPMD strategy for a merged node: the sharding of every input
// and of the output, plus per-device cost terms. Generated for the group's
// host node; times/memory are then extended with the merged members' shares.
struct OpStrategy {
  std::string node;  // host node id ("" in synthetic solver tables)
  std::string name;
  std::vector<ShardingSpec> input_specs;
  ShardingSpec output_spec;
  // Output holds unreduced per-device partial sums; an all-reduce over
  // reduce_axes is required before any consumer reads it.
  bool partial_sum = false;
  std::vector<int> reduce_axes;
  double compute_time_s = 0;      // flops / engaged devices / device rate
  double comm_time_s = 0;         // intrinsic collectives (partial-sum reduce)
  double bwd_compute_time_s = 0;
  double bwd_comm_time_s = 0;     // mirror of the intrinsic collectives
  int64_t comm_buffer_bytes = 0;  // transient collective buffer, per device
  int64_t memory_bytes = 0;       // activation + parameter shard, per device
};

// How a member joined its group. Members merged toward their producer
// carry the host's output spec; members merged toward their consumer carry
// the spec of the host input slot their chain feeds.
enum class MemberRole { kHost, kIntoProducer, kIntoConsumer };

struct GroupMember {
  std::string node;
  MemberRole role = MemberRole::kHost;
  int host_slot = -1;  // kIntoConsumer only: host input slot the chain feeds
};

struct MergedGroup {
  std::string host;
  std::vector<GroupMember> members;  // topological order, host included
};

// Tensor edge between two groups, kept at original-node granularity so the
// resharding endpoint specs and the tensor meta stay recoverable.
struct MergedEdge {
  int src_group = -1;
  int dst_group = -1;
  std::string producer;
  int producer_out = 0;
  std::string consumer;
  int consumer_slot = 0;
};

// Solver view of the graph: trivial nodes merged into a neighboring
// compute-intensive node, scalar-only nodes dropped. group_of is the merge
// map used to re-expand solutions onto original nodes.
struct MergedGraph {
  const ComputationGraph* graph = nullptr;
  std::vector<MergedGroup> groups;
  std::vector<MergedEdge> edges;
  std::unordered_map<std::string, int> group_of;
  std::vector<std::string> removed_nodes;  // no tensor inputs or outputs
};

// Per-node strategy lists plus dense per-edge resharding cost matrices.
// Self-contained: solve() needs nothing beyond this table, which lets tests
// run it on synthetic instances.
struct StrategyTable {
  std::vector<std::vector<OpStrategy>> strategies;

  struct Edge {
    int src = -1;
    int dst = -1;
    // Row-major [|strategies(src)| x |strategies(dst)|] seconds.
    std::vector<double> cost;
  };
  std::vector<Edge> edges;

  int num_nodes() const { return static_cast<int>(strategies.size()); }
};

struct IntraOpSolution {
  std::vector<int> selection;  // strategy index per merged node
  double total_time_s = 0;
  double compute_time_s = 0;
  double comm_time_s = 0;           // intrinsic + resharding
  int64_t peak_memory_bytes = 0;    // summed selected bytes (no liveness)
  int64_t budget_bytes = 0;
  // True when the branch-and-bound ran to completion, which certifies the
  // selection as the optimum. False only when the deterministic expansion
  // cap cut the search; the selection is then the best one proven feasible.
  bool optimal = true;
};

// Expanded, per-original-node result of a solved selection.
struct NodePlan {
  std::string node;
  int group = -1;
  std::string strategy;
  ShardingSpec spec;  // sharding of this node's output
  bool partial_sum = false;
  std::vector<int> reduce_axes;
};

// Merges computationally-trivial nodes (elementwise, getitem) into the
// nearest compute-intensive node — producer side first, consumer side as
// fallback — and removes nodes with neither tensor inputs nor outputs.
MergedGraph simplify_graph(const ComputationGraph& graph);

// Dispatches on node kind to one of the strategy generators and returns the
// enumerated candidates, divisibility-filtered, replicated fallback always
// included. See docs/strategy_generators.md for the catalog.
std::vector<OpStrategy> generate_strategies(const ComputationGraph& graph,
                                            const GraphNode& node,
                                            const DeviceMesh& mesh);

// Devices holding distinct slices of the strategy's work: the product of
// extents of every mesh axis used by any of its specs.
int64_t engaged_devices(const OpStrategy& strategy, const DeviceMesh& mesh);

// Greedy two-pointer factorization of a reshape into segments with equal
// element products. A shard maps across the reshape iff it sits on the
// first input dim of its segment (row-major contiguity); it lands on the
// first output dim. Shared by the strategy generator and the planner's
// reshape-constant rewrite so both agree on mappability.
struct ReshapeSegment {
  int in_begin, in_end, out_begin, out_end;
};
std::vector<ReshapeSegment> reshape_segments(const std::vector<int64_t>& in,
                                             const std::vector<int64_t>& out);

// Spec of `node`'s output when its group selects `strategy`.
ShardingSpec member_spec(const MergedGraph& merged, int group,
                         const std::string& node, const OpStrategy& strategy);
// Spec the consumer group requires on this edge / the producer group yields.
ShardingSpec edge_required_spec(const MergedGraph& merged, const MergedEdge& edge,
                                const OpStrategy& consumer_strategy);
ShardingSpec edge_produced_spec(const MergedGraph& merged, const MergedEdge& edge,
                                const OpStrategy& producer_strategy);
const TensorMeta& edge_meta(const ComputationGraph& graph, const MergedEdge& edge);

// Generates strategies for every group and prices every cross-group edge
// through the layout manager's cached conversion search.
StrategyTable build_strategy_table(const MergedGraph& merged,
                                   const DeviceMesh& mesh, PathCache& cache);

// Branch-and-bound over the 0-1 selection problem:
//   minimize   sum_n (compute+comm)[n][x_n] + sum_(u,v) R[u,v][x_u][x_v]
//   subject to sum_n mem[n][x_n] <= budget.
// Deterministic. When the search completes within its fixed expansion cap
// (always the case at test scale) the result is exact: the
// lexicographically smallest optimal selection by node order, then
// strategy index, and `optimal` is set. Past the cap the best feasible
// selection found so far is returned with `optimal` cleared; the cap is an
// instruction count, not wall time, so results never depend on load or
// machine. Throws InfeasibleError when no assignment satisfies the budget.
IntraOpSolution solve(const StrategyTable& table, int64_t budget_bytes);

// Applies the merge map: every original node gets its spec and strategy.
std::vector<NodePlan> expand_solution(const MergedGraph& merged,
                                      const StrategyTable& table,
                                      const IntraOpSolution& solution);

// Solution document (version 1) consumed by the checkpoint solver and the
// planner CLI; embeds the mesh so downstream stages rebuild the same table.
nlohmann::json intraop_solution_to_json(const MergedGraph& merged,
                                        const StrategyTable& table,
                                        const IntraOpSolution& solution,
                                        const DeviceMesh& mesh);

struct ParsedIntraOpSolution {
  DeviceMesh mesh;
  std::vector<int> selection;
  std::vector<std::string> strategy_names;  // cross-checked on reuse
  int64_t budget_bytes = 0;
  double total_time_s = 0;
};
ParsedIntraOpSolution parse_intraop_solution(const nlohmann::json& doc);

// Re-binds a parsed solution document to a freshly built table, verifying
// the recorded strategy names still match (guards against stale documents).
IntraOpSolution rebind_solution(const ParsedIntraOpSolution& parsed,
                                const StrategyTable& table);

// Fixed-width per-node selection table plus totals.
std::string intraop_report(const MergedGraph& merged, const StrategyTable& table,
                           const IntraOpSolution& solution);

}  // namespace autoplan

#endif  // AUTOPLAN_INTRAOP_HPP_
