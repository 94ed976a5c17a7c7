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
#include "autoplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "autoplan/errors.hpp"

namespace autoplan {

namespace {

using nlohmann::json;

const OpStrategy& selected_strategy(const StrategyTable& table,
                                    const IntraOpSolution& solution, int group) {
  return table.strategies[group][solution.selection[group]];
}

// Per-device bytes of `meta` under `spec`, falling back to the full tensor
// when the spec does not apply (pricing stays total).
int64_t shard_bytes(const TensorMeta& meta, const ShardingSpec& spec,
                    const DeviceMesh& mesh) {
  if (spec.valid_for(meta, mesh)) return spec.per_device_bytes(meta, mesh);
  return meta.bytes();
}

ShardingSpec normalized(ShardingSpec spec, const TensorMeta& meta,
                        const DeviceMesh& mesh) {
  if (!spec.valid_for(meta, mesh)) {
    return ShardingSpec::replicated(static_cast<int>(meta.rank()), mesh.rank());
  }
  return spec;
}

}  // namespace

// ---------------------------------------------------------------------------
// Resident set
// ---------------------------------------------------------------------------

int64_t resident_bytes(const ComputationGraph& graph, const MergedGraph& merged,
                       const StrategyTable& table, const IntraOpSolution& solution,
                       const std::set<std::string>& common, const DeviceMesh& mesh) {
  std::vector<NodePlan> plans = expand_solution(merged, table, solution);
  std::unordered_map<std::string, const NodePlan*> plan_of;
  for (const NodePlan& p : plans) plan_of[p.node] = &p;

  int64_t total = 0;
  for (const GraphNode& node : graph.nodes) {
    if (node.kind == NodeKind::kOutput || !node.has_tensor_output()) continue;
    auto it = plan_of.find(node.id);
    if (it == plan_of.end()) continue;
    const TensorMeta& meta = node.output();
    int64_t bytes = shard_bytes(meta, it->second->spec, mesh);
    if (node.kind == NodeKind::kParameter) {
      total += bytes;                          // the shard itself
      if (meta.requires_grad) total += bytes;  // its gradient, held to the step
    } else if (node.kind == NodeKind::kPlaceholder) {
      total += bytes;
    } else if (common.count(node.id)) {
      total += bytes;  // common outputs never leave memory
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Budget sweep
// ---------------------------------------------------------------------------

ExecutionPlan sweep(const ComputationGraph& graph, const DeviceMesh& mesh,
                    int64_t device_budget_bytes, const SweepConfig& config) {
  if (device_budget_bytes <= 0) {
    throw InfeasibleError("device budget must be positive");
  }
  if (config.alpha <= 0) {
    throw SchemaError("sweep alpha must be positive");
  }

  MergedGraph merged = simplify_graph(graph);
  PathCache cache;
  StrategyTable table = build_strategy_table(merged, mesh, cache);
  std::set<std::string> common = propagate_common_nodes(graph, config.common_seeds);
  std::vector<NodeGroup> groups = linearize(graph, common);

  // The smallest budget any assignment fits in. The constraint is a plain
  // sum, so the per-group minima are independent and their sum is exactly
  // the feasibility threshold a bisection over solve() would converge to.
  int64_t base = config.base_budget_bytes;
  if (base <= 0) {
    base = 0;
    for (const auto& list : table.strategies) {
      int64_t least = std::numeric_limits<int64_t>::max();
      for (const OpStrategy& s : list) least = std::min(least, s.memory_bytes);
      if (least != std::numeric_limits<int64_t>::max()) base += least;
    }
    base = std::max<int64_t>(base, 1);
  }

  std::vector<SweepCandidate> candidates;
  for (int n = 0; n <= config.n_max; ++n) {
    SweepCandidate cand;
    cand.n = n;
    cand.intraop_budget_bytes =
        static_cast<int64_t>(std::llround(base * std::pow(1.0 + config.alpha, n)));
    if (cand.intraop_budget_bytes > device_budget_bytes) {
      if (n == 0) {
        cand.failure = "base budget exceeds the device budget";
        candidates.push_back(std::move(cand));
      }
      break;  // budgets are strictly increasing
    }
    try {
      cand.intraop = solve(table, cand.intraop_budget_bytes);
      std::vector<StageCost> costs =
          stage_costs(groups, common, merged, table, cand.intraop, mesh, cache);
      cand.resident_bytes =
          resident_bytes(graph, merged, table, cand.intraop, common, mesh);

      // Edges into the output node belong to no stage; their conversion
      // cost closes the accounting.
      for (size_t e = 0; e < merged.edges.size(); ++e) {
        const MergedEdge& edge = merged.edges[e];
        if (edge.consumer != graph.output) continue;
        int si = cand.intraop.selection[edge.src_group];
        int sj = cand.intraop.selection[edge.dst_group];
        size_t cols = table.strategies[edge.dst_group].size();
        cand.terminal_comm_time_s +=
            table.edges[e].cost[static_cast<size_t>(si) * cols + sj];
      }

      int64_t ckpt_budget = (config.share_budget_with_ckpt
                                 ? std::min(cand.intraop_budget_bytes,
                                            device_budget_bytes)
                                 : device_budget_bytes) -
                            cand.resident_bytes;
      if (ckpt_budget <= 0) {
        throw InfeasibleError("resident set (" +
                              std::to_string(cand.resident_bytes) +
                              " B) exceeds the device budget");
      }
      cand.schedule = rotor_solve(costs, ckpt_budget, config.rotor);
      cand.total_time_s = cand.schedule.total_time_s + cand.terminal_comm_time_s;
      cand.feasible = true;
    } catch (const InfeasibleError& e) {
      cand.failure = e.what();
    }
    candidates.push_back(std::move(cand));
  }

  int best = -1;
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (!candidates[i].feasible) continue;
    if (best < 0 || candidates[i].total_time_s < candidates[best].total_time_s) {
      best = static_cast<int>(i);  // strict <: ties keep the smaller n
    }
  }
  if (best < 0) {
    std::string detail;
    for (const SweepCandidate& c : candidates) {
      detail += "\n  n=" + std::to_string(c.n) + " budget=" +
                std::to_string(c.intraop_budget_bytes) + ": " + c.failure;
    }
    throw InfeasibleError("no sweep budget yields a feasible plan" + detail);
  }

  ExecutionPlan plan;
  plan.mesh = mesh;
  plan.chosen_n = candidates[best].n;
  plan.intraop_budget_bytes = candidates[best].intraop_budget_bytes;
  plan.intraop = candidates[best].intraop;
  plan.node_plans = expand_solution(merged, table, plan.intraop);
  plan.schedule = candidates[best].schedule;
  plan.stages = groups;
  plan.costs = stage_costs(groups, common, merged, table, plan.intraop, mesh, cache);
  plan.common = common;
  plan.terminal_comm_time_s = candidates[best].terminal_comm_time_s;
  plan.total_time_s = candidates[best].total_time_s;
  plan.resident_bytes = candidates[best].resident_bytes;
  plan.peak_memory_bytes = plan.resident_bytes + plan.schedule.peak_memory_bytes;
  plan.device_budget_bytes = device_budget_bytes;

  plan.rewritten_graph =
      insert_comm_nodes(merged, table, plan.intraop, mesh, cache,
                        plan.inserted_comm_nodes);
  plan.param_shards = shard_parameters(merged, table, plan.intraop, mesh);
  plan.reshape_rewrites = rewrite_reshapes(merged, table, plan.intraop, mesh);
  apply_reshape_rewrites(plan.rewritten_graph, plan.reshape_rewrites);

  if (config.verbose) plan.candidates = std::move(candidates);
  return plan;
}

// ---------------------------------------------------------------------------
// Communication insertion
// ---------------------------------------------------------------------------

ComputationGraph insert_comm_nodes(const MergedGraph& merged,
                                   const StrategyTable& table,
                                   const IntraOpSolution& solution,
                                   const DeviceMesh& mesh, PathCache& cache,
                                   std::vector<CommInsertion>& record) {
  const ComputationGraph& graph = *merged.graph;

  // Outgoing merged edges per producer, in table order.
  std::unordered_map<std::string, std::vector<size_t>> edges_of;
  for (size_t e = 0; e < merged.edges.size(); ++e) {
    edges_of[merged.edges[e].producer].push_back(e);
  }

  ComputationGraph out;
  out.placeholders = graph.placeholders;
  out.output = graph.output;

  // (producer id, out index) -> reduce node replacing that output for all
  // consumers; (consumer id, slot) -> last conversion node of that edge.
  std::map<std::pair<std::string, int>, std::string> reduce_redirect;
  std::map<std::pair<std::string, int>, std::string> edge_redirect;
  // Consumers needing the same conversion of the same output share a chain.
  std::map<std::string, std::string> chain_of;
  int sequence = 0;

  for (const GraphNode& node : graph.nodes) {
    GraphNode copy = node;
    for (size_t slot = 0; slot < copy.inputs.size(); ++slot) {
      auto er = edge_redirect.find({copy.id, static_cast<int>(slot)});
      if (er != edge_redirect.end()) {
        copy.inputs[slot] = NodeRef{er->second, 0};
        continue;
      }
      auto rr = reduce_redirect.find(
          {copy.inputs[slot].node, copy.inputs[slot].out_index});
      if (rr != reduce_redirect.end()) copy.inputs[slot] = NodeRef{rr->second, 0};
    }
    out.nodes.push_back(std::move(copy));

    auto git = merged.group_of.find(node.id);
    if (git == merged.group_of.end()) continue;
    const int group = git->second;
    const OpStrategy& strat = selected_strategy(table, solution, group);
    const bool is_host = merged.groups[group].host == node.id;

    // Partial sums are made whole right at the producer, before any member
    // of the group (or any other consumer) reads them.
    if (is_host && strat.partial_sum && node.has_tensor_output()) {
      const TensorMeta& meta = node.output();
      GraphNode reduce;
      reduce.id = node.id + ".ar";
      reduce.kind = NodeKind::kCommunication;
      reduce.inputs = {NodeRef{node.id, 0}};
      reduce.outputs = {meta};
      reduce.differentiable = meta.requires_grad;
      reduce.attrs.name = to_string(CollectiveKind::kAllReduce);
      reduce.attrs.mesh_axes.assign(strat.reduce_axes.begin(),
                                    strat.reduce_axes.end());
      reduce.attrs.bytes = shard_bytes(meta, strat.output_spec, mesh);
      record.push_back(CommInsertion{reduce.id, node.id, 0, "", -1,
                                     CollectiveKind::kAllReduce,
                                     strat.reduce_axes, reduce.attrs.bytes});
      reduce_redirect[{node.id, 0}] = reduce.id;
      out.nodes.push_back(std::move(reduce));
    }

    auto eit = edges_of.find(node.id);
    if (eit == edges_of.end()) continue;
    for (size_t e : eit->second) {
      const MergedEdge& edge = merged.edges[e];
      const TensorMeta& meta = edge_meta(graph, edge);
      ShardingSpec from = normalized(
          edge_produced_spec(merged, edge, selected_strategy(table, solution,
                                                             edge.src_group)),
          meta, mesh);
      ShardingSpec to = normalized(
          edge_required_spec(merged, edge, selected_strategy(table, solution,
                                                             edge.dst_group)),
          meta, mesh);
      if (from == to) continue;

      std::string chain_key = node.id + "#" + std::to_string(edge.producer_out) +
                              "|" + from.to_string() + ">" + to.to_string();
      auto hit = chain_of.find(chain_key);
      if (hit != chain_of.end()) {
        edge_redirect[{edge.consumer, edge.consumer_slot}] = hit->second;
        continue;
      }

      TransformPath path;
      try {
        path = cache.get(from, to, mesh, meta);
      } catch (const PlanError& err) {
        throw MissingPathError("no conversion " + from.to_string() + " -> " +
                               to.to_string() + " for edge " + edge.producer +
                               " -> " + edge.consumer + ": " + err.what());
      }

      std::string src_id = node.id;
      int src_out = edge.producer_out;
      auto rr = reduce_redirect.find({node.id, edge.producer_out});
      if (rr != reduce_redirect.end()) {
        src_id = rr->second;
        src_out = 0;
      }
      ShardingSpec cur = from;
      for (const TransformStep& step : path.steps) {
        GraphNode conv;
        conv.id = node.id + ".cv" + std::to_string(sequence++);
        conv.kind = NodeKind::kCommunication;
        conv.inputs = {NodeRef{src_id, src_out}};
        conv.outputs = {meta};
        conv.differentiable = meta.requires_grad;
        conv.attrs.name = to_string(step.kind);
        conv.attrs.mesh_axes = {step.mesh_axis};
        conv.attrs.axes = {step.tensor_dim};
        if (step.target_dim >= 0) conv.attrs.axes.push_back(step.target_dim);
        conv.attrs.bytes = shard_bytes(meta, cur, mesh);  // moved payload
        record.push_back(CommInsertion{conv.id, edge.producer, edge.producer_out,
                                       edge.consumer, edge.consumer_slot,
                                       step.kind, std::vector<int>{step.mesh_axis},
                                       conv.attrs.bytes});
        src_id = conv.id;
        src_out = 0;
        cur = step.result;
        out.nodes.push_back(std::move(conv));
      }
      chain_of[chain_key] = src_id;
      edge_redirect[{edge.consumer, edge.consumer_slot}] = src_id;
    }
  }

  out.rebuild_index();
  return out;
}

// ---------------------------------------------------------------------------
// Parameter sharding
// ---------------------------------------------------------------------------

std::map<std::string, GradSync> shard_parameters(const MergedGraph& merged,
                                                 const StrategyTable& table,
                                                 const IntraOpSolution& solution,
                                                 const DeviceMesh& mesh) {
  const ComputationGraph& graph = *merged.graph;
  std::vector<NodePlan> plans = expand_solution(merged, table, solution);
  std::unordered_map<std::string, const NodePlan*> plan_of;
  for (const NodePlan& p : plans) plan_of[p.node] = &p;

  std::map<std::string, GradSync> result;
  for (const GraphNode& node : graph.nodes) {
    if (node.kind != NodeKind::kParameter || !node.has_tensor_output()) continue;
    auto it = plan_of.find(node.id);
    if (it == plan_of.end()) continue;
    GradSync sync;
    sync.spec = it->second->spec;
    if (node.output().requires_grad) {
      std::vector<int> used = sync.spec.used_axes();
      for (int axis = 0; axis < mesh.rank(); ++axis) {
        if (std::find(used.begin(), used.end(), axis) == used.end()) {
          sync.replica_axes.push_back(axis);
        }
      }
    }
    result.emplace(node.id, std::move(sync));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reshape constant rewrite
// ---------------------------------------------------------------------------

std::vector<ReshapeRewrite> rewrite_reshapes(const MergedGraph& merged,
                                             const StrategyTable& table,
                                             const IntraOpSolution& solution,
                                             const DeviceMesh& mesh) {
  const ComputationGraph& graph = *merged.graph;
  std::vector<ReshapeRewrite> rewrites;
  for (const GraphNode& node : graph.nodes) {
    if (node.kind != NodeKind::kReshape) continue;
    auto git = merged.group_of.find(node.id);
    if (git == merged.group_of.end()) continue;
    const OpStrategy& strat = selected_strategy(table, solution, git->second);
    if (merged.groups[git->second].host != node.id || strat.input_specs.empty()) {
      continue;  // merged-away or spec-less: constants stay logical
    }
    const NodeRef& in_ref = node.inputs[0];
    const TensorMeta& in = graph.node(in_ref.node).output(in_ref.out_index);
    const ShardingSpec& spec = strat.input_specs[0];
    if (!spec.valid_for(in, mesh)) continue;

    ReshapeRewrite rw;
    rw.node = node.id;
    rw.new_target_shape = node.attrs.target_shape;
    bool changed = false;
    auto segs = reshape_segments(in.shape, node.output().shape);
    for (int d = 0; d < spec.tensor_rank(); ++d) {
      if (spec.dims[d].replicated()) continue;
      int64_t factor = 1;
      for (int axis : spec.dims[d].axes) factor *= mesh.axis_extent(axis);
      const ReshapeSegment* seg = nullptr;
      for (const auto& s : segs) {
        if (d >= s.in_begin && d < s.in_end) {
          seg = &s;
          break;
        }
      }
      // A shard off its segment head (or an indivisible constant) cannot be
      // expressed as a local constant: fall back to a replicated input.
      if (seg == nullptr || d != seg->in_begin || seg->out_begin >= seg->out_end ||
          rw.new_target_shape[seg->out_begin] % factor != 0) {
        rw.new_target_shape = node.attrs.target_shape;
        rw.fallback_replicated = true;
        changed = true;
        break;
      }
      rw.new_target_shape[seg->out_begin] /= factor;
      changed = true;
    }
    if (changed) rewrites.push_back(std::move(rw));
  }
  return rewrites;
}

void apply_reshape_rewrites(ComputationGraph& graph,
                            const std::vector<ReshapeRewrite>& rewrites) {
  for (const ReshapeRewrite& rw : rewrites) {
    if (rw.fallback_replicated || !graph.contains(rw.node)) continue;
    graph.node(rw.node).attrs.target_shape = rw.new_target_shape;
  }
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

nlohmann::json plan_to_json(const ExecutionPlan& plan) {
  json doc;
  doc["version"] = 1;
  doc["mesh"] = mesh_to_json(plan.mesh);
  doc["device_budget_bytes"] = plan.device_budget_bytes;
  doc["chosen_n"] = plan.chosen_n;
  doc["intraop_budget_bytes"] = plan.intraop_budget_bytes;
  doc["total_time_s"] = plan.total_time_s;
  doc["terminal_comm_time_s"] = plan.terminal_comm_time_s;
  doc["peak_memory_bytes"] = plan.peak_memory_bytes;
  doc["resident_bytes"] = plan.resident_bytes;

  json intraop;
  intraop["total_time_s"] = plan.intraop.total_time_s;
  intraop["compute_time_s"] = plan.intraop.compute_time_s;
  intraop["comm_time_s"] = plan.intraop.comm_time_s;
  intraop["peak_memory_bytes"] = plan.intraop.peak_memory_bytes;
  intraop["budget_bytes"] = plan.intraop.budget_bytes;
  doc["intraop"] = std::move(intraop);

  // Stage index per node for checkpoint-block annotations.
  std::map<std::string, int> stage_of;
  for (const NodeGroup& g : plan.stages) {
    for (const std::string& id : g.members) stage_of[id] = g.index;
  }

  json nodes = json::object();
  for (const NodePlan& p : plan.node_plans) {
    json entry;
    entry["group"] = p.group;
    entry["strategy"] = p.strategy;
    entry["spec"] = p.spec.to_string();
    entry["partial_sum"] = p.partial_sum;
    if (!p.reduce_axes.empty()) entry["reduce_axes"] = p.reduce_axes;
    auto sit = stage_of.find(p.node);
    if (sit != stage_of.end()) {
      entry["stage"] = sit->second;
      entry["checkpoint_block"] = plan.schedule.block_index[sit->second];
    }
    if (plan.common.count(p.node)) entry["common"] = true;
    nodes[p.node] = std::move(entry);
  }
  doc["nodes"] = std::move(nodes);

  json schedule;
  {
    json decisions = json::array();
    for (StageDecision d : plan.schedule.decision) decisions.push_back(to_string(d));
    schedule["decision"] = std::move(decisions);
    schedule["block_index"] = plan.schedule.block_index;
    json ops = json::array();
    for (const ScheduleOp& op : plan.schedule.ops) {
      const char* kind = "";
      switch (op.kind) {
        case ScheduleOp::Kind::kFAll: kind = "f_all"; break;
        case ScheduleOp::Kind::kFCk: kind = "f_ck"; break;
        case ScheduleOp::Kind::kFNone: kind = "f_none"; break;
        case ScheduleOp::Kind::kBackward: kind = "backward"; break;
      }
      ops.push_back(json{{"op", kind}, {"stage", op.stage}});
    }
    schedule["ops"] = std::move(ops);
    schedule["total_time_s"] = plan.schedule.total_time_s;
    schedule["peak_memory_bytes"] = plan.schedule.peak_memory_bytes;
    schedule["budget_bytes"] = plan.schedule.budget_bytes;
    schedule["slot_bytes"] = plan.schedule.slot_bytes;
  }
  doc["schedule"] = std::move(schedule);

  json stages = json::array();
  for (size_t i = 0; i < plan.stages.size(); ++i) {
    const StageCost& c = plan.costs[i];
    stages.push_back(json{{"index", plan.stages[i].index},
                          {"members", plan.stages[i].members},
                          {"u_f", c.u_f},
                          {"u_b", c.u_b},
                          {"u_fcomm", c.u_fcomm},
                          {"u_bcomm", c.u_bcomm},
                          {"o_f", c.o_f},
                          {"o_b", c.o_b},
                          {"o_fcomm", c.o_fcomm},
                          {"o_bcomm", c.o_bcomm},
                          {"w_a", c.w_a},
                          {"w_abar", c.w_abar},
                          {"w_delta", c.w_delta}});
  }
  doc["stages"] = std::move(stages);

  json comm = json::array();
  for (const CommInsertion& c : plan.inserted_comm_nodes) {
    json entry;
    entry["node"] = c.node_id;
    entry["producer"] = c.producer;
    entry["producer_out"] = c.producer_out;
    if (!c.consumer.empty()) {
      entry["consumer"] = c.consumer;
      entry["consumer_slot"] = c.consumer_slot;
    }
    entry["collective"] = to_string(c.kind);
    entry["axes"] = c.axes;
    entry["bytes"] = c.bytes;
    comm.push_back(std::move(entry));
  }
  doc["inserted_comm_nodes"] = std::move(comm);

  json params = json::object();
  for (const auto& [id, sync] : plan.param_shards) {
    json entry;
    entry["spec"] = sync.spec.to_string();
    if (!sync.replica_axes.empty()) {
      entry["gradient"] = "all-reduce";
      entry["replica_axes"] = sync.replica_axes;
    } else {
      entry["gradient"] = "none";
    }
    params[id] = std::move(entry);
  }
  doc["param_shards"] = std::move(params);

  json reshapes = json::array();
  for (const ReshapeRewrite& rw : plan.reshape_rewrites) {
    reshapes.push_back(json{{"node", rw.node},
                            {"new_target_shape", rw.new_target_shape},
                            {"fallback_replicated", rw.fallback_replicated}});
  }
  doc["reshape_rewrites"] = std::move(reshapes);

  if (!plan.candidates.empty()) {
    json cands = json::array();
    for (const SweepCandidate& c : plan.candidates) {
      json entry;
      entry["n"] = c.n;
      entry["intraop_budget_bytes"] = c.intraop_budget_bytes;
      entry["feasible"] = c.feasible;
      if (c.feasible) {
        entry["total_time_s"] = c.total_time_s;
        entry["resident_bytes"] = c.resident_bytes;
      } else {
        entry["failure"] = c.failure;
      }
      cands.push_back(std::move(entry));
    }
    doc["candidates"] = std::move(cands);
  }
  return doc;
}

void write_plan(const ExecutionPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << plan_to_json(plan).dump(2) << '\n';
  if (!out) throw IoError("failed writing plan to '" + path + "'");
}

std::string plan_report(const ExecutionPlan& plan) {
  std::ostringstream out;
  out << "plan: n=" << plan.chosen_n << "  intra-op budget "
      << plan.intraop_budget_bytes << " B  device budget "
      << plan.device_budget_bytes << " B\n";
  out << "total time: " << plan.total_time_s << " s (schedule "
      << plan.schedule.total_time_s << " s + terminal comm "
      << plan.terminal_comm_time_s << " s)\n";
  out << "memory: resident " << plan.resident_bytes << " B + schedule peak "
      << plan.schedule.peak_memory_bytes << " B = " << plan.peak_memory_bytes
      << " B\n";
  out << "communication nodes inserted: " << plan.inserted_comm_nodes.size()
      << "  parameters sharded: " << plan.param_shards.size()
      << "  reshapes rewritten: " << plan.reshape_rewrites.size() << "\n\n";

  out << std::left << std::setw(6) << "stage" << std::setw(16) << "decision"
      << std::setw(7) << "block" << std::right << std::setw(12) << "fwd_s"
      << std::setw(12) << "bwd_s" << std::setw(14) << "w_a_B" << std::setw(14)
      << "w_abar_B" << "  members\n";
  for (size_t i = 0; i < plan.stages.size(); ++i) {
    const StageCost& c = plan.costs[i];
    std::ostringstream fwd, bwd;
    fwd << std::scientific << std::setprecision(3) << c.u_f + c.u_fcomm;
    bwd << std::scientific << std::setprecision(3) << c.u_b + c.u_bcomm;
    out << std::left << std::setw(6) << i << std::setw(16)
        << to_string(plan.schedule.decision[i]) << std::setw(7)
        << plan.schedule.block_index[i] << std::right << std::setw(12)
        << fwd.str() << std::setw(12) << bwd.str() << std::setw(14) << c.w_a
        << std::setw(14) << c.w_abar << "  ";
    size_t shown = std::min<size_t>(plan.stages[i].members.size(), 3);
    for (size_t k = 0; k < shown; ++k) {
      if (k) out << ' ';
      out << plan.stages[i].members[k];
    }
    if (plan.stages[i].members.size() > shown) {
      out << " (+" << plan.stages[i].members.size() - shown << ")";
    }
    out << '\n';
  }

  if (!plan.candidates.empty()) {
    out << "\nsweep candidates:\n";
    for (const SweepCandidate& c : plan.candidates) {
      out << "  n=" << c.n << " budget=" << c.intraop_budget_bytes << " B: ";
      if (c.feasible) {
        out << c.total_time_s << " s"
            << (c.n == plan.chosen_n ? "  <- selected" : "") << '\n';
      } else {
        out << "infeasible\n";
      }
    }
  }
  return out.str();
}

}  // namespace autoplan
