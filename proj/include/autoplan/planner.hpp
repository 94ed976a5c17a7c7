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
#ifndef AUTOPLAN_PLANNER_HPP_
#define AUTOPLAN_PLANNER_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoplan/ckpt.hpp"
#include "autoplan/cluster.hpp"
#include "autoplan/graph_ir.hpp"
#include "autoplan/intraop.hpp"
#include "autoplan/layout.hpp"

namespace autoplan {

// Budget-sweep parameters: intra-op budgets B_n = base * (1+alpha)^n for
// n in [0, n_max], capped by the device budget.
struct SweepConfig {
  double alpha = 0.3;
  int n_max = 9;
  // 0 selects the smallest budget any strategy assignment fits in, so the
  // sweep spans "maximally sharded" up to "maximally replicated".
  int64_t base_budget_bytes = 0;
  // The schedule solver normally receives the full device budget minus the
  // resident set: a sweep where both solvers shared B_n would let the
  // intra-op stage compress memory below what checkpointing needs to be
  // useful. This flag selects the shared-budget variant instead.
  bool share_budget_with_ckpt = false;
  bool verbose = false;  // retain every sweep candidate in the plan
  RotorOptions rotor;
  // Extra nodes pinned as common (resident, outside dependency counting),
  // on top of the non-differentiable closure.
  std::set<std::string> common_seeds;
};

// One communication node added by the compilation pass, with enough context
// to locate it: after `producer`:`producer_out`, feeding either every
// consumer (partial-sum reduction, `consumer` empty) or one rewired edge.
struct CommInsertion {
  std::string node_id;  // id of the inserted node in the rewritten graph
  std::string producer;
  int producer_out = 0;
  std::string consumer;  // empty: applies to all consumers
  int consumer_slot = -1;
  CollectiveKind kind = CollectiveKind::kAllReduce;
  std::vector<int> axes;
  int64_t bytes = 0;  // per-device payload moved
};

// A parameter's layout plus its gradient synchronization: gradients are
// all-reduced over the mesh axes the parameter is replicated on; a
// parameter sharded over every axis needs no synchronization.
struct GradSync {
  ShardingSpec spec;
  std::vector<int> replica_axes;
};

// Local-shape rewrite of one reshape constant. When a sharded input dim
// cannot be mapped through the reshape the pass falls back to a replicated
// input instead of rewriting.
struct ReshapeRewrite {
  std::string node;
  std::vector<int64_t> new_target_shape;
  bool fallback_replicated = false;
};

// One (n, B_n) point of the sweep, kept for the verbose plan document and
// for the dominance check in tests.
struct SweepCandidate {
  int n = 0;
  int64_t intraop_budget_bytes = 0;
  bool feasible = false;
  std::string failure;  // diagnostic when infeasible
  double total_time_s = 0;
  double terminal_comm_time_s = 0;
  int64_t resident_bytes = 0;
  IntraOpSolution intraop;
  CheckpointSchedule schedule;
};

struct ExecutionPlan {
  DeviceMesh mesh;
  int chosen_n = 0;
  int64_t intraop_budget_bytes = 0;
  IntraOpSolution intraop;
  std::vector<NodePlan> node_plans;
  CheckpointSchedule schedule;
  std::vector<NodeGroup> stages;
  std::vector<StageCost> costs;
  std::set<std::string> common;
  ComputationGraph rewritten_graph;  // with communication nodes, rewired edges
  std::vector<CommInsertion> inserted_comm_nodes;
  std::map<std::string, GradSync> param_shards;
  std::vector<ReshapeRewrite> reshape_rewrites;
  // schedule.total_time_s covers every stage's forward/backward compute and
  // collectives; the terminal term adds the edges into the output node,
  // which no stage owns.
  double total_time_s = 0;
  double terminal_comm_time_s = 0;
  int64_t resident_bytes = 0;      // parameters+gradients, inputs, common outputs
  int64_t peak_memory_bytes = 0;   // resident + replayed schedule peak
  int64_t device_budget_bytes = 0;
  std::vector<SweepCandidate> candidates;  // populated when verbose
};

// Bytes that stay allocated for the whole training step under the selected
// layouts: parameter shards and their gradients, placeholder inputs, and
// the outputs of common nodes.
int64_t resident_bytes(const ComputationGraph& graph, const MergedGraph& merged,
                       const StrategyTable& table, const IntraOpSolution& solution,
                       const std::set<std::string>& common, const DeviceMesh& mesh);

// Joint search: solves the intra-op problem at each budget B_n, prices the
// stage chain, schedules rematerialization against the device budget minus
// the candidate's resident set, and returns the fastest candidate with all
// compilation passes applied. Ties prefer the smaller n. Throws
// InfeasibleError when no budget yields a feasible pair.
ExecutionPlan sweep(const ComputationGraph& graph, const DeviceMesh& mesh,
                    int64_t device_budget_bytes, const SweepConfig& config = {});

// Materializes the selection's communication: an all-reduce node after
// every partial-sum output (its consumers rewired, merged trivia included),
// then per-edge conversion chains wherever producer and consumer layouts
// differ. Insertions are appended to `record` in graph walk order.
ComputationGraph insert_comm_nodes(const MergedGraph& merged,
                                   const StrategyTable& table,
                                   const IntraOpSolution& solution,
                                   const DeviceMesh& mesh, PathCache& cache,
                                   std::vector<CommInsertion>& record);

// Parameter layouts plus gradient-sync annotations (plan metadata only; no
// runtime hooks exist here).
std::map<std::string, GradSync> shard_parameters(const MergedGraph& merged,
                                                 const StrategyTable& table,
                                                 const IntraOpSolution& solution,
                                                 const DeviceMesh& mesh);

// Rescales reshape target-shape constants to per-device extents under the
// selected input layouts; an unmappable sharded dim records a
// replicated-input fallback and leaves the constant alone.
std::vector<ReshapeRewrite> rewrite_reshapes(const MergedGraph& merged,
                                             const StrategyTable& table,
                                             const IntraOpSolution& solution,
                                             const DeviceMesh& mesh);

// Applies recorded rewrites to the reshape nodes' target_shape attributes.
// Tensor metadata keeps the logical (global) shapes.
void apply_reshape_rewrites(ComputationGraph& graph,
                            const std::vector<ReshapeRewrite>& rewrites);

// Deterministic plan document (version 1): stable key order, per-node
// strategies and checkpoint block indices, inserted communication,
// parameter shards, cost summary.
nlohmann::json plan_to_json(const ExecutionPlan& plan);

// Writes plan_to_json to `path`. Throws IoError on filesystem failure.
void write_plan(const ExecutionPlan& plan, const std::string& path);

// Human-readable summary with the per-stage time/memory table.
std::string plan_report(const ExecutionPlan& plan);

}  // namespace autoplan

#endif  // AUTOPLAN_PLANNER_HPP_
