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
#include "autoplan/ckpt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "autoplan/errors.hpp"
#include "autoplan/layout.hpp"

namespace autoplan {

const char* to_string(StageDecision decision) {
  switch (decision) {
    case StageDecision::kFAll:
      return "store_all";
    case StageDecision::kFCk:
      return "store_boundary";
    case StageDecision::kFNone:
      return "recompute";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Common-node propagation
// ---------------------------------------------------------------------------

std::set<std::string> propagate_common_nodes(const ComputationGraph& graph,
                                             const std::set<std::string>& seeds) {
  for (const std::string& id : seeds) {
    if (!graph.contains(id)) {
      throw DanglingRefError("common-node seed '" + id + "' is not in the graph");
    }
    if (graph.node(id).differentiable) {
      throw SeedError("common-node seed '" + id +
                      "' is differentiable; seeds must be gradient-free");
    }
  }
  std::set<std::string> common(seeds);
  // Nodes are stored in topological order, so every parent is classified
  // before its children and a single sweep reaches the fixpoint.
  for (const GraphNode& node : graph.nodes) {
    if (common.count(node.id)) continue;
    if (!node.differentiable) {
      common.insert(node.id);
      continue;
    }
    if (node.inputs.empty()) continue;
    bool all_parents_common = true;
    for (const NodeRef& ref : node.inputs) {
      if (!common.count(ref.node)) {
        all_parents_common = false;
        break;
      }
    }
    if (all_parents_common) common.insert(node.id);
  }
  return common;
}

// ---------------------------------------------------------------------------
// Linearization
// ---------------------------------------------------------------------------

namespace {

bool chain_skipped(NodeKind kind) {
  return kind == NodeKind::kPlaceholder || kind == NodeKind::kParameter ||
         kind == NodeKind::kOutput;
}

}  // namespace

std::vector<NodeGroup> linearize(const ComputationGraph& graph,
                                 const std::set<std::string>& common) {
  const auto consumer_lists = graph.consumers();

  // Distinct walked consumers per node position; skipped kinds never hold a
  // dependency, otherwise the group feeding the output node could not close.
  std::vector<std::vector<int>> children(graph.nodes.size());
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    std::set<int> distinct;
    for (const auto& [consumer, slot] : consumer_lists[i]) {
      (void)slot;
      if (!chain_skipped(graph.nodes[consumer].kind)) distinct.insert(consumer);
    }
    children[i].assign(distinct.begin(), distinct.end());
  }

  std::unordered_map<int, int> pool;  // node position -> unmet consumers
  std::vector<NodeGroup> groups;
  NodeGroup current;

  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& node = graph.nodes[i];
    if (chain_skipped(node.kind)) continue;

    // Retire this node's dependency on each distinct registered parent.
    std::unordered_set<std::string> seen_parents;
    for (const NodeRef& ref : node.inputs) {
      if (!seen_parents.insert(ref.node).second) continue;
      int parent = graph.index.at(ref.node);
      if (chain_skipped(graph.nodes[parent].kind)) continue;
      if (common.count(ref.node)) continue;  // common parents never register
      auto it = pool.find(parent);
      if (it != pool.end() && --(it->second) == 0) pool.erase(it);
    }

    current.members.push_back(node.id);

    // A stage boundary is only usable if nothing still pending reaches past
    // it and no child must stay fused with this node.
    bool sink = pool.empty();
    if (sink) {
      for (int child : children[i]) {
        const GraphNode& cn = graph.nodes[child];
        if (cn.in_place || cn.kind == NodeKind::kCommunication) {
          sink = false;
          break;
        }
      }
    }
    if (sink) {
      current.index = static_cast<int>(groups.size());
      groups.push_back(std::move(current));
      current = NodeGroup{};
    }

    // Register after the boundary test: a node never blocks its own group.
    // Common nodes stay resident for the whole run, so they are no reason
    // to keep a stage open.
    if (!common.count(node.id) && !children[i].empty()) {
      pool[static_cast<int>(i)] = static_cast<int>(children[i].size());
    }
  }
  if (!current.members.empty()) {
    current.index = static_cast<int>(groups.size());
    groups.push_back(std::move(current));
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Stage costs
// ---------------------------------------------------------------------------

namespace {

// Shard count of `spec` over `mesh`, treating an inapplicable spec as
// replicated rather than failing: pricing must stay total.
int64_t safe_shards(const ShardingSpec& spec, const TensorMeta& meta,
                    const DeviceMesh& mesh) {
  if (!spec.valid_for(meta, mesh)) return 1;
  int64_t shards = spec.shard_count(mesh);
  return shards > 0 ? shards : 1;
}

const TensorMeta& input_tensor(const ComputationGraph& graph, const GraphNode& node,
                               size_t slot) {
  const NodeRef& ref = node.inputs[slot];
  return graph.node(ref.node).output(ref.out_index);
}

// Largest per-device shard a conversion step touches: a step holds both the
// shard it reads and the shard it writes.
int64_t path_step_buffer(const TransformPath& path, const TensorMeta& meta,
                         const DeviceMesh& mesh) {
  int64_t peak = 0;
  ShardingSpec cur = path.source;
  for (const TransformStep& step : path.steps) {
    int64_t before = cur.per_device_bytes(meta, mesh);
    int64_t after = step.result.per_device_bytes(meta, mesh);
    peak = std::max(peak, std::max(before, after));
    cur = step.result;
  }
  return peak;
}

}  // namespace

std::vector<StageCost> stage_costs(const std::vector<NodeGroup>& groups,
                                   const std::set<std::string>& common,
                                   const MergedGraph& merged,
                                   const StrategyTable& table,
                                   const IntraOpSolution& solution,
                                   const DeviceMesh& mesh, PathCache& cache) {
  const ComputationGraph& graph = *merged.graph;
  if (static_cast<int>(solution.selection.size()) != table.num_nodes()) {
    throw MissingStrategyError("selection size does not match the strategy table");
  }

  std::unordered_map<std::string, int> stage_of;
  for (const NodeGroup& g : groups) {
    for (const std::string& id : g.members) stage_of[id] = g.index;
  }

  std::vector<NodePlan> plans = expand_solution(merged, table, solution);
  std::unordered_map<std::string, const NodePlan*> plan_of;
  for (const NodePlan& p : plans) plan_of[p.node] = &p;

  auto selected = [&](int group) -> const OpStrategy& {
    const auto& list = table.strategies[group];
    int pick = solution.selection[group];
    if (pick < 0 || pick >= static_cast<int>(list.size())) {
      throw MissingStrategyError("selection index out of range for merged group " +
                                 std::to_string(group));
    }
    return list[pick];
  };

  const double rate = mesh.device_flops_per_s > 0 ? mesh.device_flops_per_s : 1.0;
  std::vector<StageCost> stages(groups.size());
  const auto consumer_lists = graph.consumers();

  // --- Per-node terms: compute split, intrinsic collectives, weights. -----
  for (const NodeGroup& g : groups) {
    StageCost& sc = stages[g.index];
    for (const std::string& id : g.members) {
      auto git = merged.group_of.find(id);
      if (git == merged.group_of.end()) continue;  // dropped scalar-only node
      const GraphNode& node = graph.node(id);
      const OpStrategy& strat = selected(git->second);
      const NodePlan& plan = *plan_of.at(id);
      const bool is_host = merged.groups[git->second].host == id;

      // Strategies price the whole merged group at once; stages re-derive
      // each node's own share from its profile so nothing is counted twice.
      NodeProfile prof = profile_node(graph, node);
      int64_t out_shards = 1;
      if (node.has_tensor_output()) {
        out_shards = safe_shards(plan.spec, node.output(), mesh);
      }
      int64_t work_div = is_host ? engaged_devices(strat, mesh) : out_shards;
      if (work_div <= 0) work_div = 1;
      sc.u_f += prof.flops / static_cast<double>(work_div) / rate;
      sc.u_b += prof.bwd_flops / static_cast<double>(work_div) / rate;
      sc.o_f = std::max(sc.o_f, prof.fwd_peak_overhead_bytes / out_shards);
      sc.o_b = std::max(sc.o_b, prof.bwd_peak_overhead_bytes / out_shards);

      if (is_host) {
        sc.u_fcomm += strat.comm_time_s;
        sc.u_bcomm += strat.bwd_comm_time_s;
        sc.o_fcomm = std::max(sc.o_fcomm, strat.comm_buffer_bytes);
        sc.o_bcomm = std::max(sc.o_bcomm, strat.comm_buffer_bytes);
      }

      // Saved-intermediate share of this node. The inputs of matmul-like and
      // lookup nodes shard by their input specs, which only hosts carry.
      int64_t saved = 0;
      switch (node.kind) {
        case NodeKind::kMatmul:
        case NodeKind::kBatchedMatmul: {
          for (size_t slot = 0; slot < node.inputs.size(); ++slot) {
            const TensorMeta& in = input_tensor(graph, node, slot);
            int64_t shards = is_host && slot < strat.input_specs.size()
                                 ? safe_shards(strat.input_specs[slot], in, mesh)
                                 : out_shards;
            saved += in.bytes() / shards;
          }
          break;
        }
        case NodeKind::kLayernorm: {
          const TensorMeta& in = input_tensor(graph, node, 0);
          int64_t shards = is_host && !strat.input_specs.empty()
                               ? safe_shards(strat.input_specs[0], in, mesh)
                               : out_shards;
          int64_t rows = in.num_elements() /
                         std::max<int64_t>(1, in.shape.empty() ? 1 : in.shape.back());
          saved = in.bytes() / shards + 2 * rows * 4 / shards;
          break;
        }
        case NodeKind::kEmbeddingLookup: {
          const TensorMeta& ids = input_tensor(graph, node, 0);
          int64_t shards = is_host && !strat.input_specs.empty()
                               ? safe_shards(strat.input_specs[0], ids, mesh)
                               : out_shards;
          saved = ids.bytes() / shards;
          break;
        }
        default:
          saved = prof.saved_intermediate_bytes / out_shards;
          break;
      }
      sc.w_abar += saved;

      // Boundary activations: non-common outputs that some other stage (not
      // the skipped output node) still reads. Common outputs live for the
      // whole run and belong to the resident set instead.
      if (!common.count(id) && node.has_tensor_output()) {
        bool crosses = false;
        int pos = graph.index.at(id);
        for (const auto& [consumer, slot] : consumer_lists[pos]) {
          (void)slot;
          const std::string& cid = graph.nodes[consumer].id;
          auto sit = stage_of.find(cid);
          if (sit != stage_of.end() && sit->second != g.index) {
            crosses = true;
            break;
          }
        }
        if (crosses) sc.w_a += prof.fwd_out_bytes / out_shards;
      }
    }
  }

  // --- Resharding on the stage's incoming edges. --------------------------
  // merged.edges and table.edges are index-aligned by construction.
  for (size_t e = 0; e < merged.edges.size(); ++e) {
    const MergedEdge& edge = merged.edges[e];
    auto sit = stage_of.find(edge.consumer);
    if (sit == stage_of.end()) continue;  // feeds the output node: planner's job
    auto pit = stage_of.find(edge.producer);
    if (pit != stage_of.end() && pit->second == sit->second) continue;
    StageCost& sc = stages[sit->second];

    int si = solution.selection[edge.src_group];
    int sj = solution.selection[edge.dst_group];
    size_t cols = table.strategies[edge.dst_group].size();
    sc.u_fcomm += table.edges[e].cost[static_cast<size_t>(si) * cols + sj];

    const TensorMeta& meta = edge_meta(graph, edge);
    ShardingSpec from = edge_produced_spec(merged, edge, selected(edge.src_group));
    ShardingSpec to = edge_required_spec(merged, edge, selected(edge.dst_group));
    if (!from.valid_for(meta, mesh)) from = ShardingSpec::replicated(meta.rank(), mesh.rank());
    if (!to.valid_for(meta, mesh)) to = ShardingSpec::replicated(meta.rank(), mesh.rank());
    if (from == to) continue;

    TransformPath fwd = cache.get(from, to, mesh, meta);
    sc.o_fcomm = std::max(sc.o_fcomm, path_step_buffer(fwd, meta, mesh));
    if (meta.requires_grad) {
      // The gradient travels the edge in reverse; gather/slice asymmetry
      // makes this a fresh conversion, not the forward cost mirrored.
      TransformPath bwd = cache.get(to, from, mesh, meta);
      sc.u_bcomm += bwd.comm_cost_s;
      sc.o_bcomm = std::max(sc.o_bcomm, path_step_buffer(bwd, meta, mesh));
    }
  }

  // --- Parameter-gradient synchronization. --------------------------------
  // Replicated training state accumulates identical gradients on every
  // replica axis; the all-reduce is charged once, at the first stage that
  // consumes the parameter.
  for (const GraphNode& node : graph.nodes) {
    if (node.kind != NodeKind::kParameter) continue;
    if (!node.has_tensor_output() || !node.output().requires_grad) continue;
    auto git = merged.group_of.find(node.id);
    if (git == merged.group_of.end()) continue;
    const NodePlan& plan = *plan_of.at(node.id);

    std::vector<int> replica_axes;
    std::vector<int> used = plan.spec.used_axes();
    for (int axis = 0; axis < mesh.rank(); ++axis) {
      if (std::find(used.begin(), used.end(), axis) == used.end()) {
        replica_axes.push_back(axis);
      }
    }
    if (replica_axes.empty()) continue;

    int first_stage = -1;
    int pos = graph.index.at(node.id);
    for (const auto& [consumer, slot] : consumer_lists[pos]) {
      (void)slot;
      auto sit = stage_of.find(graph.nodes[consumer].id);
      if (sit == stage_of.end()) continue;
      if (first_stage < 0 || sit->second < first_stage) first_stage = sit->second;
    }
    if (first_stage < 0) continue;

    int64_t shard_bytes =
        node.output().bytes() / safe_shards(plan.spec, node.output(), mesh);
    stages[first_stage].u_bcomm +=
        collective_cost(mesh, replica_axes, CollectiveKind::kAllReduce,
                        static_cast<double>(shard_bytes));
    stages[first_stage].o_bcomm = std::max(stages[first_stage].o_bcomm, shard_bytes);
  }

  for (StageCost& sc : stages) sc.w_delta = sc.w_a;
  return stages;
}

// ---------------------------------------------------------------------------
// Rematerialization DP
// ---------------------------------------------------------------------------

CheckpointSchedule rotor_solve(const std::vector<StageCost>& stages,
                               int64_t budget_bytes, const RotorOptions& options) {
  const int L = static_cast<int>(stages.size());
  if (L == 0) {
    throw InfeasibleError("cannot schedule an empty stage chain");
  }
  if (budget_bytes <= 0) {
    throw InfeasibleError("memory budget must be positive");
  }

  const int64_t slot = options.slot_bytes > 0
                           ? options.slot_bytes
                           : std::max<int64_t>(1, budget_bytes / 500);
  const int64_t M = budget_bytes / slot;  // budget rounds down
  auto quant = [slot](int64_t bytes) {    // sizes round up
    return (bytes + slot - 1) / slot;
  };

  std::vector<int64_t> wa(L), wab(L), wd(L), fo(L), bo(L);
  for (int i = 0; i < L; ++i) {
    wa[i] = quant(stages[i].w_a);
    wab[i] = quant(stages[i].w_abar);
    wd[i] = quant(stages[i].w_delta);
    fo[i] = quant(stages[i].o_f + stages[i].o_fcomm);
    bo[i] = quant(stages[i].o_b + stages[i].o_bcomm);
  }

  // Forward prefix times for the recompute phase. The recurrence charges a
  // recomputed prefix its compute time; the option also restores the
  // collective time those stages would spend.
  std::vector<double> prefix(L + 1, 0);
  for (int i = 0; i < L; ++i) {
    prefix[i + 1] = prefix[i] + stages[i].u_f +
                    (options.include_prefix_comm ? stages[i].u_fcomm : 0.0);
  }

  const double kInf = std::numeric_limits<double>::infinity();
  const size_t cells = static_cast<size_t>(L) * L * (M + 1);
  std::vector<double> cost(cells, kInf);
  // -2: infeasible, -1: store the full set, k >= 0: checkpoint split at k.
  std::vector<int> choice(cells, -2);
  auto at = [&](int s, int t, int64_t m) {
    return (static_cast<size_t>(s) * L + t) * (M + 1) + static_cast<size_t>(m);
  };

  for (int s = 0; s < L; ++s) {
    int64_t need = std::max(wd[s] + wab[s] + fo[s], wd[s] + wab[s] + bo[s]);
    double base = stages[s].u_f + stages[s].u_fcomm + stages[s].u_b + stages[s].u_bcomm;
    for (int64_t m = need; m <= M; ++m) {
      cost[at(s, s, m)] = base;
      choice[at(s, s, m)] = -1;
    }
  }

  for (int len = 1; len < L; ++len) {
    for (int s = 0; s + len < L; ++s) {
      const int t = s + len;
      // Recompute phase: boundary of s, then peaks of the pass-through
      // stages; the end-boundary gradient is held throughout.
      int64_t need_empty = wd[t] + wa[s] + fo[s];
      for (int j = s + 1; j < t; ++j) {
        need_empty = std::max(need_empty, wd[t] + wa[j - 1] + wa[j] + fo[j]);
      }
      // Store phase: forward with the full set of s, backward of s.
      int64_t need_all = std::max(wd[t] + wab[s] + fo[s], wd[s] + wab[s] + bo[s]);

      for (int64_t m = 0; m <= M; ++m) {
        double best = kInf;
        int arg = -2;
        if (m >= need_empty) {
          for (int split = s + 1; split <= t; ++split) {
            int64_t rest = m - wa[split - 1];
            if (rest < 0) continue;
            double c = (prefix[split] - prefix[s]) + cost[at(split, t, rest)] +
                       cost[at(s, split - 1, m)];
            if (c < best) {  // strict: the smallest split wins ties
              best = c;
              arg = split;
            }
          }
        }
        if (m >= need_all && m >= wab[s]) {
          double c = stages[s].u_f + stages[s].u_fcomm +
                     cost[at(s + 1, t, m - wab[s])] + stages[s].u_b +
                     stages[s].u_bcomm;
          if (c <= best) {  // ties prefer storing over recomputing
            best = c;
            arg = -1;
          }
        }
        if (best < kInf) {
          cost[at(s, t, m)] = best;
          choice[at(s, t, m)] = arg;
        }
      }
    }
  }

  if (!(cost[at(0, L - 1, M)] < kInf)) {
    throw InfeasibleError(
        "no rematerialization schedule fits in " + std::to_string(budget_bytes) +
        " bytes (discretized budget " + std::to_string(M) + " x " +
        std::to_string(slot) + "-byte slots)");
  }

  CheckpointSchedule schedule;
  schedule.budget_bytes = budget_bytes;
  schedule.slot_bytes = slot;
  schedule.total_time_s = cost[at(0, L - 1, M)];

  // Unfold the decision table into the flat persistent op sequence.
  auto expand = [&](auto&& self, int s, int t, int64_t m) -> void {
    if (s == t) {
      schedule.ops.push_back({ScheduleOp::Kind::kFAll, s});
      schedule.ops.push_back({ScheduleOp::Kind::kBackward, s});
      return;
    }
    int pick = choice[at(s, t, m)];
    if (pick == -2) {
      throw std::logic_error("schedule expansion reached an infeasible cell");
    }
    if (pick == -1) {
      schedule.ops.push_back({ScheduleOp::Kind::kFAll, s});
      self(self, s + 1, t, m - wab[s]);
      schedule.ops.push_back({ScheduleOp::Kind::kBackward, s});
      return;
    }
    // Checkpoint at `pick`: run s..pick-1 keeping only boundaries (the head
    // keeps its own input alive for the later replay), finish the suffix,
    // then re-run the prefix with the full budget.
    schedule.ops.push_back({ScheduleOp::Kind::kFCk, s});
    for (int k = s + 1; k < pick; ++k) {
      schedule.ops.push_back({ScheduleOp::Kind::kFNone, k});
    }
    self(self, pick, t, m - wa[pick - 1]);
    self(self, s, pick - 1, m);
  };
  expand(expand, 0, L - 1, M);

  // A stage's published mode is what its first forward pass did.
  schedule.decision.assign(L, StageDecision::kFAll);
  std::vector<bool> seen(L, false);
  for (const ScheduleOp& op : schedule.ops) {
    if (op.kind == ScheduleOp::Kind::kBackward || seen[op.stage]) continue;
    seen[op.stage] = true;
    switch (op.kind) {
      case ScheduleOp::Kind::kFAll:
        schedule.decision[op.stage] = StageDecision::kFAll;
        break;
      case ScheduleOp::Kind::kFCk:
        schedule.decision[op.stage] = StageDecision::kFCk;
        break;
      case ScheduleOp::Kind::kFNone:
        schedule.decision[op.stage] = StageDecision::kFNone;
        break;
      default:
        break;
    }
  }

  // Checkpoint blocks: maximal runs of recomputed stages, numbered left to
  // right; stored stages sit outside every block.
  schedule.block_index.assign(L, -1);
  int block = -1;
  bool in_block = false;
  for (int i = 0; i < L; ++i) {
    if (schedule.decision[i] != StageDecision::kFAll) {
      if (!in_block) {
        ++block;
        in_block = true;
      }
      schedule.block_index[i] = block;
    } else {
      in_block = false;
    }
  }

  schedule.peak_memory_bytes = replay_peak_bytes(stages, schedule.ops);
  return schedule;
}

// ---------------------------------------------------------------------------
// Memory replay
// ---------------------------------------------------------------------------

int64_t replay_peak_bytes(const std::vector<StageCost>& stages,
                          const std::vector<ScheduleOp>& ops) {
  if (stages.empty()) return 0;
  const int L = static_cast<int>(stages.size());

  enum Tag { kBoundary, kFullSet, kGradient };
  std::map<std::pair<int, int>, int64_t> held;  // (tag, stage) -> bytes
  int64_t live = 0;
  int64_t peak = 0;

  auto add = [&](Tag tag, int stage, int64_t bytes) {
    auto [it, inserted] = held.emplace(std::make_pair(tag, stage), bytes);
    (void)it;
    if (inserted) live += bytes;
  };
  auto drop = [&](Tag tag, int stage) {
    auto it = held.find(std::make_pair(tag, stage));
    if (it != held.end()) {
      live -= it->second;
      held.erase(it);
    }
  };

  // The end-boundary gradient is charged for the whole run, mirroring the
  // feasibility thresholds; the replay stays an upper bound on the real peak.
  add(kGradient, L - 1, stages[L - 1].w_delta);

  for (const ScheduleOp& op : ops) {
    const StageCost& sc = stages[op.stage];
    switch (op.kind) {
      case ScheduleOp::Kind::kFAll:
        add(kFullSet, op.stage, sc.w_abar);
        peak = std::max(peak, live + sc.o_f + sc.o_fcomm);
        break;
      case ScheduleOp::Kind::kFCk:
        // Keeps its input boundary alive: the prefix re-run restarts there.
        add(kBoundary, op.stage, sc.w_a);
        peak = std::max(peak, live + sc.o_f + sc.o_fcomm);
        break;
      case ScheduleOp::Kind::kFNone:
        add(kBoundary, op.stage, sc.w_a);
        peak = std::max(peak, live + sc.o_f + sc.o_fcomm);
        drop(kBoundary, op.stage - 1);
        break;
      case ScheduleOp::Kind::kBackward:
        peak = std::max(peak, live + sc.o_b + sc.o_bcomm);
        drop(kFullSet, op.stage);
        drop(kGradient, op.stage);
        drop(kBoundary, op.stage - 1);
        if (op.stage > 0) {
          add(kGradient, op.stage - 1, stages[op.stage - 1].w_delta);
        }
        break;
    }
  }
  return peak;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

std::string schedule_report(const std::vector<NodeGroup>& groups,
                            const std::vector<StageCost>& stages,
                            const CheckpointSchedule& schedule) {
  std::ostringstream out;
  out << "stages: " << groups.size() << "  budget: " << schedule.budget_bytes
      << " B  slot: " << schedule.slot_bytes << " B\n";
  out << "total time: " << schedule.total_time_s
      << " s  replayed peak: " << schedule.peak_memory_bytes << " B\n";
  for (size_t i = 0; i < groups.size(); ++i) {
    out << "  [" << i << "] " << to_string(schedule.decision[i]);
    if (schedule.block_index[i] >= 0) out << " block " << schedule.block_index[i];
    out << "  fwd " << stages[i].u_f + stages[i].u_fcomm << " s  bwd "
        << stages[i].u_b + stages[i].u_bcomm << " s  w_a " << stages[i].w_a
        << " B  w_abar " << stages[i].w_abar << " B  nodes:";
    size_t shown = std::min<size_t>(groups[i].members.size(), 4);
    for (size_t k = 0; k < shown; ++k) out << ' ' << groups[i].members[k];
    if (groups[i].members.size() > shown) {
      out << " (+" << groups[i].members.size() - shown << ")";
    }
    out << '\n';
  }
  out << "  ops:";
  for (const ScheduleOp& op : schedule.ops) {
    switch (op.kind) {
      case ScheduleOp::Kind::kFAll:
        out << " Fa" << op.stage;
        break;
      case ScheduleOp::Kind::kFCk:
        out << " Fc" << op.stage;
        break;
      case ScheduleOp::Kind::kFNone:
        out << " Fn" << op.stage;
        break;
      case ScheduleOp::Kind::kBackward:
        out << " B" << op.stage;
        break;
    }
  }
  out << '\n';
  return out.str();
}

}  // namespace autoplan
