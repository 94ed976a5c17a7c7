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
#ifndef AUTOPLAN_CKPT_HPP_
#define AUTOPLAN_CKPT_HPP_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "autoplan/cluster.hpp"
#include "autoplan/graph_ir.hpp"
#include "autoplan/intraop.hpp"

namespace autoplan {

// One stage of the linearized chain: an ordered run of nodes whose only
// externally consumed tensors leave through the stage boundary.
struct NodeGroup {
  std::vector<std::string> members;
  int index = 0;
};

// Per-stage cost terms of the communication-extended rematerialization DP.
// Time in seconds, memory in per-device bytes.
struct StageCost {
  double u_f = 0;       // forward compute
  double u_b = 0;       // backward compute
  double u_fcomm = 0;   // forward collectives: intrinsic + incoming resharding
  double u_bcomm = 0;   // mirrored collectives + parameter-gradient sync
  int64_t o_f = 0;      // transient forward overhead
  int64_t o_b = 0;      // transient backward overhead
  int64_t o_fcomm = 0;  // largest forward collective buffer
  int64_t o_bcomm = 0;  // largest backward collective buffer
  int64_t w_a = 0;      // boundary activation bytes
  int64_t w_abar = 0;   // full saved-intermediate set bytes
  int64_t w_delta = 0;  // boundary gradient bytes (= w_a of the boundary)
};

// First-pass execution mode of a stage: store the full intermediate set,
// store only the boundary activation, or store nothing and recompute.
enum class StageDecision { kFAll, kFCk, kFNone };

const char* to_string(StageDecision decision);

struct ScheduleOp {
  enum class Kind { kFAll, kFCk, kFNone, kBackward };
  Kind kind = Kind::kFAll;
  int stage = 0;
};

struct CheckpointSchedule {
  std::vector<StageDecision> decision;  // first forward pass, per stage
  // Contiguous ids over maximal runs of recomputed (kFCk/kFNone) stages;
  // -1 for stages stored in full.
  std::vector<int> block_index;
  std::vector<ScheduleOp> ops;  // flat persistent execution sequence
  double total_time_s = 0;
  int64_t peak_memory_bytes = 0;  // replayed from ops with true byte sizes
  int64_t budget_bytes = 0;
  int64_t slot_bytes = 1;
};

struct RotorOptions {
  // Memory quantum for the DP's discrete memory axis; 0 picks budget/500.
  // Sizes round up and the budget rounds down, so quantization can only
  // reject true-infeasible schedules, never accept one over budget.
  int64_t slot_bytes = 0;
  // The recurrence charges a recomputed prefix its compute time only; this
  // restores the skipped stages' forward communication time as well.
  bool include_prefix_comm = false;
};

// Fixpoint closure of the non-differentiable property: a node is common if
// it is non-differentiable itself or if it has parents and all of them are
// common. Seeds must be non-differentiable (SeedError otherwise).
std::set<std::string> propagate_common_nodes(const ComputationGraph& graph,
                                             const std::set<std::string>& seeds);

// Dependency-pool chain partitioning. Placeholders, parameters and the
// output node are not walked; common nodes join groups but never register
// dependencies; a group closes when the pool is empty and no child of the
// closing node is an in-place or communication operation.
std::vector<NodeGroup> linearize(const ComputationGraph& graph,
                                 const std::set<std::string>& common);

// Prices every chain stage from the selected strategies: compute split by
// engaged devices, resharding priced on each stage's incoming edges (the
// backward direction via reversed conversions), parameter-gradient
// all-reduce charged once at the parameter's first consumer. Common nodes'
// outputs are treated as permanently resident and excluded from w_a.
std::vector<StageCost> stage_costs(const std::vector<NodeGroup>& groups,
                                   const std::set<std::string>& common,
                                   const MergedGraph& merged,
                                   const StrategyTable& table,
                                   const IntraOpSolution& solution,
                                   const DeviceMesh& mesh, PathCache& cache);

// Optimal persistent recomputation schedule for the stage chain under the
// byte budget, by exact dynamic programming over (start, end, memory).
// Throws InfeasibleError when even the fully recomputed schedule does not
// fit. Deterministic: ties prefer storing over recomputing, then the
// smallest checkpoint split point.
CheckpointSchedule rotor_solve(const std::vector<StageCost>& stages,
                               int64_t budget_bytes,
                               const RotorOptions& options = {});

// Memory replay of a schedule's op sequence using exact byte sizes;
// independent of the DP's quantized bookkeeping.
int64_t replay_peak_bytes(const std::vector<StageCost>& stages,
                          const std::vector<ScheduleOp>& ops);

std::string schedule_report(const std::vector<NodeGroup>& groups,
                            const std::vector<StageCost>& stages,
                            const CheckpointSchedule& schedule);

}  // namespace autoplan

#endif  // AUTOPLAN_CKPT_HPP_
