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
#include "autoplan/intraop.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "autoplan/errors.hpp"

namespace autoplan {

namespace {

const TensorMeta& input_meta(const ComputationGraph& g, const GraphNode& node,
                             int slot) {
  const NodeRef& ref = node.inputs.at(slot);
  return g.node(ref.node).outputs.at(ref.out_index);
}

bool is_trivial_kind(NodeKind kind) {
  return kind == NodeKind::kElementwiseUnary ||
         kind == NodeKind::kElementwiseBinary || kind == NodeKind::kGetItem;
}

// Kinds heavy enough to anchor a merged group.
bool is_host_capable(NodeKind kind) {
  switch (kind) {
    case NodeKind::kMatmul:
    case NodeKind::kBatchedMatmul:
    case NodeKind::kEmbeddingLookup:
    case NodeKind::kSoftmax:
    case NodeKind::kLayernorm:
    case NodeKind::kReduction:
      return true;
    default:
      return false;
  }
}

bool has_tensor_ref(const ComputationGraph& g, const GraphNode& node) {
  for (const NodeRef& ref : node.inputs) {
    const GraphNode& p = g.node(ref.node);
    if (ref.out_index < static_cast<int>(p.outputs.size()) &&
        p.outputs[ref.out_index].rank() > 0) {
      return true;
    }
  }
  return false;
}

// "Neither tensor object inputs nor tensor object outputs": all outputs are
// scalars (or absent) and no input refers to a non-scalar output.
bool is_scalar_only(const ComputationGraph& g, const GraphNode& node) {
  for (const TensorMeta& m : node.outputs) {
    if (m.rank() > 0) return false;
  }
  return !has_tensor_ref(g, node);
}

std::string spec_key(const OpStrategy& s) {
  std::string key;
  for (const ShardingSpec& in : s.input_specs) key += in.to_string() + "|";
  key += ">" + s.output_spec.to_string();
  for (int axis : s.reduce_axes) key += "+" + std::to_string(axis);
  return key;
}

int64_t spec_shards(const ShardingSpec& spec, const DeviceMesh& mesh) {
  return spec.shard_count(mesh);
}

// All valid specs for `meta` with multi-axis dim lists kept in ascending
// axis order (one canonical representative per axis->dim assignment).
std::vector<ShardingSpec> enumerate_specs(const TensorMeta& meta,
                                          const DeviceMesh& mesh) {
  const int rank = static_cast<int>(meta.shape.size());
  const int mesh_rank = mesh.rank();
  std::vector<ShardingSpec> out;
  std::vector<int> assign(mesh_rank, -1);  // axis -> dim or -1 (unused)
  while (true) {
    ShardingSpec spec = ShardingSpec::replicated(rank, mesh_rank);
    for (int axis = 0; axis < mesh_rank; ++axis) {
      if (assign[axis] >= 0) spec.dims[assign[axis]].axes.push_back(axis);
    }
    if (spec.valid_for(meta, mesh)) out.push_back(std::move(spec));
    int pos = mesh_rank - 1;
    while (pos >= 0 && assign[pos] == rank - 1) assign[pos--] = -1;
    if (pos < 0) break;
    ++assign[pos];
  }
  return out;
}

struct RawStrategy {
  std::string name;
  std::vector<ShardingSpec> input_specs;
  ShardingSpec output_spec;
  bool partial_sum = false;
  std::vector<int> reduce_axes;
};

ShardingSpec make_spec(int rank, int mesh_rank,
                       const std::vector<std::pair<int, std::vector<int>>>& placed) {
  ShardingSpec spec = ShardingSpec::replicated(rank, mesh_rank);
  for (const auto& [dim, axes] : placed) spec.dims[dim].axes = axes;
  return spec;
}

std::string axis_name(const std::vector<int>& axes) {
  std::string out;
  for (int axis : axes) out += std::to_string(axis);
  return out;
}

// ---------------------------------------------------------------------------
// Strategy generators. Each returns raw spec candidates; finalize() filters
// by divisibility, deduplicates, appends the replicated fallback and prices
// the survivors.
// ---------------------------------------------------------------------------

// matmul family: C[..m.., n] = A[..m.., k] * B[k, n] and the rank-3 batched
// form. Shards any subset of {m dims, n, k} over one axis, an ordered axis
// pair, or one ascending two-axis group; k splits produce partial sums.
std::vector<RawStrategy> matmul_strategies(const ComputationGraph& g,
                                           const GraphNode& node,
                                           const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  const TensorMeta& a = input_meta(g, node, 0);
  const int mesh_rank = mesh.rank();
  const int ra = static_cast<int>(a.rank());
  const int rc = static_cast<int>(node.output().rank());

  auto add = [&](const std::string& name,
                 std::vector<std::pair<int, std::vector<int>>> pa,
                 std::vector<std::pair<int, std::vector<int>>> pb,
                 std::vector<std::pair<int, std::vector<int>>> pc,
                 std::vector<int> reduce) {
    RawStrategy s;
    s.name = name;
    const int rb = static_cast<int>(input_meta(g, node, 1).rank());
    s.input_specs = {make_spec(ra, mesh_rank, pa), make_spec(rb, mesh_rank, pb)};
    s.output_spec = make_spec(rc, mesh_rank, pc);
    s.partial_sum = !reduce.empty();
    s.reduce_axes = std::move(reduce);
    raw.push_back(std::move(s));
  };

  std::vector<std::vector<int>> singles;
  for (int x = 0; x < mesh_rank; ++x) singles.push_back({x});
  std::vector<std::vector<int>> doubles;
  for (int x = 0; x < mesh_rank; ++x) {
    for (int y = x + 1; y < mesh_rank; ++y) doubles.push_back({x, y});
  }
  std::vector<std::vector<int>> groups = singles;
  groups.insert(groups.end(), doubles.begin(), doubles.end());

  if (node.kind == NodeKind::kMatmul) {
    // A: [m0..m_{ra-2}, k], B: [k, n], C: [m0.., n].
    const int kd = ra - 1;   // k dim of A
    const int nd = rc - 1;   // n dim of C
    for (const auto& ax : groups) {
      std::string t = axis_name(ax);
      for (int i = 0; i <= ra - 2; ++i) {
        add("split-m@" + std::to_string(i) + ":" + t, {{i, ax}}, {}, {{i, ax}}, {});
      }
      add("split-n:" + t, {}, {{1, ax}}, {{nd, ax}}, {});
      add("split-k:" + t, {{kd, ax}}, {{0, ax}}, {}, ax);
    }
    for (int x = 0; x < mesh_rank; ++x) {
      for (int y = 0; y < mesh_rank; ++y) {
        if (x == y) continue;
        std::string t = std::to_string(x) + "," + std::to_string(y);
        for (int i = 0; i <= ra - 2; ++i) {
          add("split-mn@" + std::to_string(i) + ":" + t, {{i, {x}}}, {{1, {y}}},
              {{i, {x}}, {nd, {y}}}, {});
          add("split-mk@" + std::to_string(i) + ":" + t, {{i, {x}}, {kd, {y}}},
              {{0, {y}}}, {{i, {x}}}, {y});
        }
        add("split-nk:" + t, {{kd, {y}}}, {{0, {y}}, {1, {x}}}, {{nd, {x}}}, {y});
        for (int i = 0; i <= ra - 2; ++i) {
          for (int j = i + 1; j <= ra - 2; ++j) {
            if (x < y) {
              add("split-mm@" + std::to_string(i) + "," + std::to_string(j) +
                      ":" + t,
                  {{i, {x}}, {j, {y}}}, {}, {{i, {x}}, {j, {y}}}, {});
            }
          }
        }
      }
    }
  } else {
    // Batched: A [b,m,k], B [b,k,n], C [b,m,n].
    for (const auto& ax : groups) {
      std::string t = axis_name(ax);
      add("split-b:" + t, {{0, ax}}, {{0, ax}}, {{0, ax}}, {});
      add("split-m:" + t, {{1, ax}}, {}, {{1, ax}}, {});
      add("split-n:" + t, {}, {{2, ax}}, {{2, ax}}, {});
      add("split-k:" + t, {{2, ax}}, {{1, ax}}, {}, ax);
    }
    for (int x = 0; x < mesh_rank; ++x) {
      for (int y = 0; y < mesh_rank; ++y) {
        if (x == y) continue;
        std::string t = std::to_string(x) + "," + std::to_string(y);
        add("split-bm:" + t, {{0, {x}}, {1, {y}}}, {{0, {x}}},
            {{0, {x}}, {1, {y}}}, {});
        add("split-bn:" + t, {{0, {x}}}, {{0, {x}}, {2, {y}}},
            {{0, {x}}, {2, {y}}}, {});
        add("split-bk:" + t, {{0, {x}}, {2, {y}}}, {{0, {x}}, {1, {y}}},
            {{0, {x}}}, {y});
        add("split-mn:" + t, {{1, {x}}}, {{2, {y}}}, {{1, {x}}, {2, {y}}}, {});
        add("split-mk:" + t, {{1, {x}}, {2, {y}}}, {{1, {y}}}, {{1, {x}}}, {y});
        add("split-nk:" + t, {{2, {y}}}, {{1, {y}}, {2, {x}}}, {{2, {x}}}, {y});
      }
    }
  }
  return raw;
}

// Elementwise: every valid output layout, mirrored onto all inputs.
std::vector<RawStrategy> elementwise_strategies(const GraphNode& node,
                                                const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  for (const ShardingSpec& spec : enumerate_specs(node.output(), mesh)) {
    RawStrategy s;
    s.name = "mirror:" + spec.to_string();
    s.input_specs.assign(node.inputs.size(), spec);
    s.output_spec = spec;
    raw.push_back(std::move(s));
  }
  return raw;
}

}  // namespace

std::vector<ReshapeSegment> reshape_segments(const std::vector<int64_t>& in,
                                             const std::vector<int64_t>& out) {
  std::vector<ReshapeSegment> segs;
  int i = 0, j = 0;
  const int ri = static_cast<int>(in.size()), rj = static_cast<int>(out.size());
  while (i < ri && j < rj) {
    int i0 = i, j0 = j;
    int64_t pi = in[i++], pj = out[j++];
    while (pi != pj) {
      if (pi < pj) {
        pi *= in[i++];
      } else {
        pj *= out[j++];
      }
    }
    segs.push_back({i0, i, j0, j});
  }
  if (!segs.empty()) {
    segs.back().in_end = ri;   // absorb trailing size-1 dims
    segs.back().out_end = rj;
  }
  return segs;
}

namespace {

std::vector<RawStrategy> reshape_strategies(const ComputationGraph& g,
                                            const GraphNode& node,
                                            const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  const TensorMeta& in = input_meta(g, node, 0);
  const TensorMeta& out = node.output();
  auto segs = reshape_segments(in.shape, out.shape);
  for (const ShardingSpec& spec : enumerate_specs(in, mesh)) {
    ShardingSpec mapped =
        ShardingSpec::replicated(static_cast<int>(out.rank()), mesh.rank());
    bool ok = true;
    for (int d = 0; d < spec.tensor_rank() && ok; ++d) {
      if (spec.dims[d].replicated()) continue;
      const ReshapeSegment* seg = nullptr;
      for (const auto& s : segs) {
        if (d >= s.in_begin && d < s.in_end) {
          seg = &s;
          break;
        }
      }
      if (seg == nullptr || d != seg->in_begin || seg->out_begin >= seg->out_end) {
        ok = false;  // shard not on a segment head: not expressible
        break;
      }
      mapped.dims[seg->out_begin].axes = spec.dims[d].axes;
    }
    if (!ok) continue;
    RawStrategy s;
    s.name = "reshape:" + spec.to_string();
    s.input_specs = {spec};
    s.output_spec = std::move(mapped);
    raw.push_back(std::move(s));
  }
  return raw;
}

std::vector<RawStrategy> transpose_strategies(const ComputationGraph& g,
                                              const GraphNode& node,
                                              const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  const TensorMeta& in = input_meta(g, node, 0);
  const auto& perm = node.attrs.perm;
  for (const ShardingSpec& spec : enumerate_specs(in, mesh)) {
    ShardingSpec out_spec =
        ShardingSpec::replicated(static_cast<int>(perm.size()), mesh.rank());
    for (size_t i = 0; i < perm.size(); ++i) {
      out_spec.dims[i] = spec.dims[perm[i]];
    }
    RawStrategy s;
    s.name = "perm:" + spec.to_string();
    s.input_specs = {spec};
    s.output_spec = std::move(out_spec);
    raw.push_back(std::move(s));
  }
  return raw;
}

// Reductions over a sharded reduced dim leave per-device partial sums.
std::vector<RawStrategy> reduction_strategies(const ComputationGraph& g,
                                              const GraphNode& node,
                                              const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  const TensorMeta& in = input_meta(g, node, 0);
  std::unordered_set<int64_t> reduced(node.attrs.axes.begin(),
                                      node.attrs.axes.end());
  for (const ShardingSpec& spec : enumerate_specs(in, mesh)) {
    ShardingSpec out_spec;
    out_spec.mesh_rank = mesh.rank();
    std::vector<int> reduce_axes;
    for (int64_t d = 0; d < in.rank(); ++d) {
      if (reduced.count(d)) {
        for (int axis : spec.dims[d].axes) reduce_axes.push_back(axis);
        if (node.attrs.keepdims) out_spec.dims.emplace_back();
      } else {
        out_spec.dims.push_back(spec.dims[d]);
      }
    }
    std::sort(reduce_axes.begin(), reduce_axes.end());
    RawStrategy s;
    s.name = "reduce:" + spec.to_string();
    s.input_specs = {spec};
    s.output_spec = std::move(out_spec);
    s.partial_sum = !reduce_axes.empty();
    s.reduce_axes = std::move(reduce_axes);
    raw.push_back(std::move(s));
  }
  return raw;
}

// Softmax cannot shard its normalization axis.
std::vector<RawStrategy> softmax_strategies(const ComputationGraph& g,
                                            const GraphNode& node,
                                            const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  const TensorMeta& in = input_meta(g, node, 0);
  int64_t axis =
      node.attrs.axis < 0 ? in.rank() + node.attrs.axis : node.attrs.axis;
  for (const ShardingSpec& spec : enumerate_specs(in, mesh)) {
    if (!spec.dims[axis].replicated()) continue;
    RawStrategy s;
    s.name = "softmax:" + spec.to_string();
    s.input_specs = {spec};
    s.output_spec = spec;
    raw.push_back(std::move(s));
  }
  return raw;
}

// Layernorm normalizes the last dim, which therefore stays replicated; the
// rank-1 affine weights span exactly that dim and stay replicated too.
std::vector<RawStrategy> layernorm_strategies(const ComputationGraph& g,
                                              const GraphNode& node,
                                              const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  const TensorMeta& in = input_meta(g, node, 0);
  for (const ShardingSpec& spec : enumerate_specs(in, mesh)) {
    if (!spec.dims.back().replicated()) continue;
    RawStrategy s;
    s.name = "layernorm:" + spec.to_string();
    s.input_specs.push_back(spec);
    for (size_t i = 1; i < node.inputs.size(); ++i) {
      s.input_specs.push_back(ShardingSpec::replicated(1, mesh.rank()));
    }
    s.output_spec = spec;
    raw.push_back(std::move(s));
  }
  return raw;
}

// Embedding: shard the lookup batch dims and/or the table's hidden dim.
// Vocab-dim sharding would need masked partial lookups; not generated.
std::vector<RawStrategy> embedding_strategies(const ComputationGraph& g,
                                              const GraphNode& node,
                                              const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  const TensorMeta& ids = input_meta(g, node, 0);
  const int ri = static_cast<int>(ids.rank());
  const int rc = ri + 1;  // output appends the hidden dim
  const int mesh_rank = mesh.rank();

  auto add = [&](const std::string& name,
                 std::vector<std::pair<int, std::vector<int>>> pids,
                 std::vector<std::pair<int, std::vector<int>>> ptab,
                 std::vector<std::pair<int, std::vector<int>>> pout) {
    RawStrategy s;
    s.name = name;
    s.input_specs = {make_spec(ri, mesh_rank, pids), make_spec(2, mesh_rank, ptab)};
    s.output_spec = make_spec(rc, mesh_rank, pout);
    raw.push_back(std::move(s));
  };

  std::vector<std::vector<int>> groups;
  for (int x = 0; x < mesh_rank; ++x) groups.push_back({x});
  for (int x = 0; x < mesh_rank; ++x) {
    for (int y = x + 1; y < mesh_rank; ++y) groups.push_back({x, y});
  }
  for (const auto& ax : groups) {
    std::string t = axis_name(ax);
    for (int i = 0; i < ri; ++i) {
      add("emb-batch@" + std::to_string(i) + ":" + t, {{i, ax}}, {}, {{i, ax}});
    }
    add("emb-h:" + t, {}, {{1, ax}}, {{rc - 1, ax}});
  }
  for (int x = 0; x < mesh_rank; ++x) {
    for (int y = 0; y < mesh_rank; ++y) {
      if (x == y) continue;
      for (int i = 0; i < ri; ++i) {
        add("emb-bh@" + std::to_string(i) + ":" + std::to_string(x) + "," +
                std::to_string(y),
            {{i, {x}}}, {{1, {y}}}, {{i, {x}}, {rc - 1, {y}}});
      }
    }
  }
  return raw;
}

// Standalone getitem forwards the producer tensor untouched.
std::vector<RawStrategy> getitem_strategies(const GraphNode& node,
                                            const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  for (const ShardingSpec& spec : enumerate_specs(node.output(), mesh)) {
    RawStrategy s;
    s.name = "pass:" + spec.to_string();
    s.input_specs = {spec};
    s.output_spec = spec;
    raw.push_back(std::move(s));
  }
  return raw;
}

// The output node materializes results for the caller: everything gathered.
std::vector<RawStrategy> output_strategies(const ComputationGraph& g,
                                           const GraphNode& node,
                                           const DeviceMesh& mesh) {
  RawStrategy s;
  s.name = "collect";
  for (size_t i = 0; i < node.inputs.size(); ++i) {
    const TensorMeta& m = input_meta(g, node, static_cast<int>(i));
    s.input_specs.push_back(
        ShardingSpec::replicated(static_cast<int>(m.rank()), mesh.rank()));
  }
  s.output_spec = ShardingSpec::replicated(
      static_cast<int>(node.output().rank()), mesh.rank());
  return {std::move(s)};
}

// Placeholders, parameters, constants, getattr: free choice of layout.
std::vector<RawStrategy> source_strategies(const GraphNode& node,
                                           const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  for (const ShardingSpec& spec : enumerate_specs(node.output(), mesh)) {
    RawStrategy s;
    s.name = "src:" + spec.to_string();
    s.output_spec = spec;
    raw.push_back(std::move(s));
  }
  return raw;
}

std::vector<OpStrategy> finalize_strategies(const ComputationGraph& g,
                                            const GraphNode& node,
                                            const DeviceMesh& mesh,
                                            std::vector<RawStrategy> raw) {
  // Replicated fallback: always expressible, keeps every list non-empty.
  RawStrategy fallback;
  fallback.name = "replicated";
  for (size_t i = 0; i < node.inputs.size(); ++i) {
    const TensorMeta& m = input_meta(g, node, static_cast<int>(i));
    fallback.input_specs.push_back(
        ShardingSpec::replicated(static_cast<int>(m.rank()), mesh.rank()));
  }
  fallback.output_spec = ShardingSpec::replicated(
      static_cast<int>(node.output().rank()), mesh.rank());
  raw.push_back(std::move(fallback));

  const NodeProfile prof = profile_node(g, node);
  const double rate = mesh.device_flops_per_s;
  std::vector<OpStrategy> out;
  std::unordered_set<std::string> seen;
  for (RawStrategy& r : raw) {
    bool valid = r.input_specs.size() == node.inputs.size();
    for (size_t i = 0; valid && i < r.input_specs.size(); ++i) {
      valid = r.input_specs[i].valid_for(input_meta(g, node, static_cast<int>(i)),
                                         mesh);
    }
    if (valid && node.has_tensor_output()) {
      valid = r.output_spec.valid_for(node.output(), mesh);
    }
    if (!valid) continue;

    OpStrategy s;
    s.node = node.id;
    s.name = std::move(r.name);
    s.input_specs = std::move(r.input_specs);
    s.output_spec = std::move(r.output_spec);
    s.partial_sum = r.partial_sum;
    s.reduce_axes = std::move(r.reduce_axes);
    if (!seen.insert(spec_key(s)).second) continue;

    const int64_t engaged = engaged_devices(s, mesh);
    if (rate > 0) {
      s.compute_time_s = prof.flops / static_cast<double>(engaged) / rate;
      s.bwd_compute_time_s = prof.bwd_flops / static_cast<double>(engaged) / rate;
    }
    const int64_t out_shards = spec_shards(s.output_spec, mesh);
    s.memory_bytes = prof.fwd_out_bytes / out_shards;
    if (s.partial_sum) {
      // Per-device partial buffer is the output shard itself.
      const double buffer = static_cast<double>(prof.fwd_out_bytes / out_shards);
      s.comm_time_s =
          collective_cost(mesh, s.reduce_axes, CollectiveKind::kAllReduce, buffer);
      s.comm_buffer_bytes = static_cast<int64_t>(buffer);
      s.bwd_comm_time_s = s.comm_time_s;
    }
    out.push_back(std::move(s));
  }
  return out;
}

double strategy_cost(const OpStrategy& s) { return s.compute_time_s + s.comm_time_s; }

// Objective value of a complete selection; shared by solve(), rebinding and
// reporting so all agree on the accounting.
void evaluate_selection(const StrategyTable& table, const std::vector<int>& sel,
                        IntraOpSolution* out) {
  out->selection = sel;
  out->compute_time_s = 0;
  out->comm_time_s = 0;
  out->peak_memory_bytes = 0;
  for (int n = 0; n < table.num_nodes(); ++n) {
    const OpStrategy& s = table.strategies[n][sel[n]];
    out->compute_time_s += s.compute_time_s;
    out->comm_time_s += s.comm_time_s;
    out->peak_memory_bytes += s.memory_bytes;
  }
  for (const StrategyTable::Edge& e : table.edges) {
    const size_t cols = table.strategies[e.dst].size();
    out->comm_time_s += e.cost[sel[e.src] * cols + sel[e.dst]];
  }
  out->total_time_s = out->compute_time_s + out->comm_time_s;
}

}  // namespace

int64_t engaged_devices(const OpStrategy& strategy, const DeviceMesh& mesh) {
  std::set<int> axes;
  for (const ShardingSpec& in : strategy.input_specs) {
    for (int axis : in.used_axes()) axes.insert(axis);
  }
  for (int axis : strategy.output_spec.used_axes()) axes.insert(axis);
  int64_t product = 1;
  for (int axis : axes) product *= mesh.axis_extent(axis);
  return product;
}

MergedGraph simplify_graph(const ComputationGraph& graph) {
  MergedGraph merged;
  merged.graph = &graph;
  const int n = static_cast<int>(graph.nodes.size());
  std::vector<bool> removed(n, false);
  for (int i = 0; i < n; ++i) {
    if (is_scalar_only(graph, graph.nodes[i])) {
      removed[i] = true;
      merged.removed_nodes.push_back(graph.nodes[i].id);
    }
  }

  std::vector<int> group_idx(n, -1);
  std::vector<MemberRole> role(n, MemberRole::kHost);
  std::vector<int> host_slot(n, -1);

  auto make_group = [&](int i) {
    group_idx[i] = static_cast<int>(merged.groups.size());
    MergedGroup g;
    g.host = graph.nodes[i].id;
    merged.groups.push_back(std::move(g));
  };

  // Pass 1 (topological order): non-trivial nodes anchor their own group;
  // trivial nodes join a compute-hosted producer group when one exists.
  for (int i = 0; i < n; ++i) {
    if (removed[i]) continue;
    const GraphNode& node = graph.nodes[i];
    if (!is_trivial_kind(node.kind)) {
      make_group(i);
      continue;
    }
    for (const NodeRef& ref : node.inputs) {
      int p = graph.index.at(ref.node);
      if (removed[p] || group_idx[p] < 0) continue;
      const MergedGroup& pg = merged.groups[group_idx[p]];
      if (is_host_capable(graph.node(pg.host).kind)) {
        group_idx[i] = group_idx[p];
        role[i] = MemberRole::kIntoProducer;
        break;
      }
    }
  }

  // Pass 2 (reverse order): remaining trivial nodes chase a compute-hosted
  // consumer, remembering which host input slot their chain feeds.
  auto consumers = graph.consumers();
  for (int i = n - 1; i >= 0; --i) {
    if (removed[i] || group_idx[i] >= 0) continue;
    const GraphNode& node = graph.nodes[i];
    if (!is_trivial_kind(node.kind)) continue;
    for (const auto& [c, slot] : consumers[i]) {
      if (removed[c] || group_idx[c] < 0) continue;
      const MergedGroup& cg = merged.groups[group_idx[c]];
      if (!is_host_capable(graph.node(cg.host).kind)) continue;
      group_idx[i] = group_idx[c];
      if (graph.nodes[c].id == cg.host) {
        role[i] = MemberRole::kIntoConsumer;
        host_slot[i] = slot;
      } else if (role[c] == MemberRole::kIntoConsumer) {
        role[i] = MemberRole::kIntoConsumer;
        host_slot[i] = host_slot[c];
      } else {
        role[i] = MemberRole::kIntoProducer;
      }
      break;
    }
  }

  // Pass 3: whatever is left stands alone.
  for (int i = 0; i < n; ++i) {
    if (!removed[i] && group_idx[i] < 0) make_group(i);
  }

  // Stable group order: by earliest member position. Track first positions.
  std::vector<int> first_pos(merged.groups.size(),
                             std::numeric_limits<int>::max());
  for (int i = 0; i < n; ++i) {
    if (group_idx[i] >= 0) {
      first_pos[group_idx[i]] = std::min(first_pos[group_idx[i]], i);
    }
  }
  std::vector<int> order(merged.groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return first_pos[a] < first_pos[b]; });
  std::vector<int> new_index(merged.groups.size());
  std::vector<MergedGroup> reordered(merged.groups.size());
  for (size_t k = 0; k < order.size(); ++k) {
    new_index[order[k]] = static_cast<int>(k);
    reordered[k] = std::move(merged.groups[order[k]]);
  }
  merged.groups = std::move(reordered);

  for (int i = 0; i < n; ++i) {
    if (group_idx[i] < 0) continue;
    int g = new_index[group_idx[i]];
    merged.group_of[graph.nodes[i].id] = g;
    merged.groups[g].members.push_back(
        {graph.nodes[i].id, role[i], host_slot[i]});
  }

  // Cross-group tensor edges, one per (consumer, input slot).
  for (int i = 0; i < n; ++i) {
    if (group_idx[i] < 0) continue;
    const GraphNode& node = graph.nodes[i];
    for (size_t slot = 0; slot < node.inputs.size(); ++slot) {
      const NodeRef& ref = node.inputs[slot];
      int p = graph.index.at(ref.node);
      if (group_idx[p] < 0) continue;  // scalar-only producer
      int gp = new_index[group_idx[p]];
      int gc = new_index[group_idx[i]];
      if (gp == gc) continue;
      MergedEdge e;
      e.src_group = gp;
      e.dst_group = gc;
      e.producer = ref.node;
      e.producer_out = ref.out_index;
      e.consumer = node.id;
      e.consumer_slot = static_cast<int>(slot);
      merged.edges.push_back(std::move(e));
    }
  }
  return merged;
}

std::vector<OpStrategy> generate_strategies(const ComputationGraph& graph,
                                            const GraphNode& node,
                                            const DeviceMesh& mesh) {
  std::vector<RawStrategy> raw;
  switch (node.kind) {
    case NodeKind::kMatmul:
    case NodeKind::kBatchedMatmul:
      raw = matmul_strategies(graph, node, mesh);
      break;
    case NodeKind::kElementwiseUnary:
    case NodeKind::kElementwiseBinary:
      raw = elementwise_strategies(node, mesh);
      break;
    case NodeKind::kReshape:
      raw = reshape_strategies(graph, node, mesh);
      break;
    case NodeKind::kTranspose:
      raw = transpose_strategies(graph, node, mesh);
      break;
    case NodeKind::kReduction:
      raw = reduction_strategies(graph, node, mesh);
      break;
    case NodeKind::kSoftmax:
      raw = softmax_strategies(graph, node, mesh);
      break;
    case NodeKind::kLayernorm:
      raw = layernorm_strategies(graph, node, mesh);
      break;
    case NodeKind::kEmbeddingLookup:
      raw = embedding_strategies(graph, node, mesh);
      break;
    case NodeKind::kGetItem:
      raw = getitem_strategies(node, mesh);
      break;
    case NodeKind::kOutput:
      raw = output_strategies(graph, node, mesh);
      break;
    case NodeKind::kPlaceholder:
    case NodeKind::kParameter:
    case NodeKind::kConstant:
    case NodeKind::kGetAttr:
      raw = source_strategies(node, mesh);
      break;
    case NodeKind::kCommunication:
      throw UnsupportedKindError(
          "communication nodes have no strategies; they are plan artifacts");
  }
  return finalize_strategies(graph, node, mesh, std::move(raw));
}

ShardingSpec member_spec(const MergedGraph& merged, int group,
                         const std::string& node, const OpStrategy& strategy) {
  const MergedGroup& g = merged.groups.at(group);
  ShardingSpec spec = strategy.output_spec;
  for (const GroupMember& m : g.members) {
    if (m.node != node) continue;
    if (m.role == MemberRole::kIntoConsumer) {
      spec = strategy.input_specs.at(m.host_slot);
    }
    break;
  }
  const GraphNode& gn = merged.graph->node(node);
  if (gn.has_tensor_output() &&
      spec.tensor_rank() != static_cast<int>(gn.output().rank())) {
    // Defensive: merged chains preserve shapes, so the inherited spec should
    // always fit. Divisibility is re-checked wherever a mesh is in hand.
    spec = ShardingSpec::replicated(static_cast<int>(gn.output().rank()),
                                    spec.mesh_rank);
  }
  return spec;
}

const TensorMeta& edge_meta(const ComputationGraph& graph, const MergedEdge& edge) {
  return graph.node(edge.producer).outputs.at(edge.producer_out);
}

ShardingSpec edge_produced_spec(const MergedGraph& merged, const MergedEdge& edge,
                                const OpStrategy& producer_strategy) {
  return member_spec(merged, edge.src_group, edge.producer, producer_strategy);
}

ShardingSpec edge_required_spec(const MergedGraph& merged, const MergedEdge& edge,
                                const OpStrategy& consumer_strategy) {
  const MergedGroup& g = merged.groups.at(edge.dst_group);
  if (edge.consumer == g.host) {
    return consumer_strategy.input_specs.at(edge.consumer_slot);
  }
  for (const GroupMember& m : g.members) {
    if (m.node != edge.consumer) continue;
    if (m.role == MemberRole::kIntoConsumer) {
      return consumer_strategy.input_specs.at(m.host_slot);
    }
    break;
  }
  return consumer_strategy.output_spec;
}

StrategyTable build_strategy_table(const MergedGraph& merged,
                                   const DeviceMesh& mesh, PathCache& cache) {
  const ComputationGraph& graph = *merged.graph;
  const double rate = mesh.device_flops_per_s;
  StrategyTable table;
  table.strategies.resize(merged.groups.size());

  for (size_t g = 0; g < merged.groups.size(); ++g) {
    const MergedGroup& group = merged.groups[g];
    std::vector<OpStrategy> list =
        generate_strategies(graph, graph.node(group.host), mesh);
    // Fold the merged members' work and activations into each candidate.
    for (OpStrategy& s : list) {
      for (const GroupMember& m : group.members) {
        if (m.node == group.host) continue;
        const GraphNode& mn = graph.node(m.node);
        ShardingSpec spec = member_spec(merged, static_cast<int>(g), m.node, s);
        int64_t shards = 1;
        if (mn.has_tensor_output() && spec.valid_for(mn.output(), mesh)) {
          shards = spec.shard_count(mesh);
        }
        const NodeProfile prof = profile_node(graph, mn);
        if (rate > 0) {
          s.compute_time_s += prof.flops / static_cast<double>(shards) / rate;
          s.bwd_compute_time_s +=
              prof.bwd_flops / static_cast<double>(shards) / rate;
        }
        s.memory_bytes += prof.fwd_out_bytes / shards;
      }
    }
    table.strategies[g] = std::move(list);
  }

  for (const MergedEdge& edge : merged.edges) {
    const TensorMeta& meta = edge_meta(graph, edge);
    const auto& src = table.strategies[edge.src_group];
    const auto& dst = table.strategies[edge.dst_group];
    StrategyTable::Edge e;
    e.src = edge.src_group;
    e.dst = edge.dst_group;
    e.cost.resize(src.size() * dst.size(), 0.0);
    const ShardingSpec repl = ShardingSpec::replicated(
        static_cast<int>(meta.rank()), mesh.rank());
    for (size_t i = 0; i < src.size(); ++i) {
      ShardingSpec from = edge_produced_spec(merged, edge, src[i]);
      if (!from.valid_for(meta, mesh)) from = repl;
      for (size_t j = 0; j < dst.size(); ++j) {
        ShardingSpec to = edge_required_spec(merged, edge, dst[j]);
        if (!to.valid_for(meta, mesh)) to = repl;
        if (from == to) continue;
        e.cost[i * dst.size() + j] = cache.get(from, to, mesh, meta).comm_cost_s;
      }
    }
    table.edges.push_back(std::move(e));
  }
  return table;
}

IntraOpSolution solve(const StrategyTable& table, int64_t budget_bytes) {
  const int n = table.num_nodes();
  for (int i = 0; i < n; ++i) {
    if (table.strategies[i].empty()) {
      throw MissingStrategyError("node " + std::to_string(i) +
                                 " has no strategies");
    }
  }
  IntraOpSolution best;
  best.budget_bytes = budget_bytes;
  if (n == 0) return best;

  std::vector<int> sizes(n);
  std::vector<std::vector<double>> node_cost(n);
  std::vector<std::vector<int64_t>> node_mem(n);
  for (int i = 0; i < n; ++i) {
    sizes[i] = static_cast<int>(table.strategies[i].size());
    node_cost[i].reserve(sizes[i]);
    node_mem[i].reserve(sizes[i]);
    for (const OpStrategy& s : table.strategies[i]) {
      node_cost[i].push_back(strategy_cost(s));
      node_mem[i].push_back(s.memory_bytes);
    }
  }

  std::vector<int64_t> min_mem_suffix(n + 1, 0);
  for (int i = n - 1; i >= 0; --i) {
    int64_t m = *std::min_element(node_mem[i].begin(), node_mem[i].end());
    min_mem_suffix[i] = min_mem_suffix[i + 1] + m;
  }

  // The sum of per-node minima is a hopeless bound on its own: resharding
  // conflicts mean no selection attains every node minimum at once, and the
  // memory budget can force strategies far from their cost minima. Two
  // devices repair it. (1) A Lagrangian term folds memory into node costs:
  // every feasible selection satisfies cost >= (cost + l*mem) - l*budget, so
  // bounding the right-hand side bounds the left. (2) Min-sum diffusion
  // reparameterizes (theta, redge) without changing any total: for each edge
  // endpoint it transfers cost between node vector and edge matrix until the
  // node entry equals the edge min-marginal, so conflicting preferences
  // surface as positive edge minima the bound can see.
  auto diffuse = [&](std::vector<std::vector<double>>& theta,
                     std::vector<std::vector<double>>& residual) {
    const int kDiffusionSweeps = 64;
    for (int sweep = 0; sweep < kDiffusionSweeps; ++sweep) {
      for (size_t ei = 0; ei < residual.size(); ++ei) {
        const StrategyTable::Edge& e = table.edges[ei];
        std::vector<double>& r = residual[ei];
        const int rows = sizes[e.src];
        const int cols = sizes[e.dst];
        for (int j = 0; j < cols; ++j) {
          double mu = std::numeric_limits<double>::infinity();
          for (int i = 0; i < rows; ++i) mu = std::min(mu, r[i * cols + j]);
          double d = 0.5 * (theta[e.dst][j] - mu);
          theta[e.dst][j] -= d;
          for (int i = 0; i < rows; ++i) r[i * cols + j] += d;
        }
        for (int i = 0; i < rows; ++i) {
          double mu = std::numeric_limits<double>::infinity();
          for (int j = 0; j < cols; ++j) mu = std::min(mu, r[i * cols + j]);
          double d = 0.5 * (theta[e.src][i] - mu);
          theta[e.src][i] -= d;
          for (int j = 0; j < cols; ++j) r[i * cols + j] += d;
        }
      }
    }
  };

  // One multiplier cannot price memory for the whole tree: as assignments
  // consume budget, the multiplier that prices the remainder best shifts.
  // Keep a menu of reparameterizations over a geometric multiplier grid
  // around the natural cost-per-byte scale; every entry gives an admissible
  // bound and each prune test takes the strongest. lambda = 0 stays in the
  // menu so memory-slack instances keep the pure cost bound.
  std::vector<double> grid{0.0};
  {
    double span_c = 0.0, span_m = 0.0;
    for (int i = 0; i < n; ++i) {
      auto c = std::minmax_element(node_cost[i].begin(), node_cost[i].end());
      auto m = std::minmax_element(node_mem[i].begin(), node_mem[i].end());
      span_c += *c.second - *c.first;
      span_m += static_cast<double>(*m.second - *m.first);
    }
    if (span_c > 0.0 && span_m > 0.0) {
      const double l0 = span_c / span_m;
      for (int j = -3; j <= 3; ++j) grid.push_back(l0 * std::pow(4.0, j));
    }
  }
  const int L = static_cast<int>(grid.size());
  constexpr int kMaxMenu = 16;  // grid is 1 or 8 entries; bounds lag arrays

  // Nodes are assigned in index order, so every edge's residual cost is
  // folded into its later endpoint: assigning the earlier endpoint adds the
  // matching row to the later endpoint's penalty vector. pen[v][k] is the
  // residual edge cost node v pays for strategy k given every assigned
  // neighbor, which keeps the lower bound edge-aware.
  struct Fwd {
    int peer;   // later endpoint
    int eidx;   // index into table.edges
    bool peer_is_dst;
  };
  std::vector<std::vector<Fwd>> forward(n);
  for (size_t ei = 0; ei < table.edges.size(); ++ei) {
    const StrategyTable::Edge& e = table.edges[ei];
    forward[std::min(e.src, e.dst)].push_back(
        {std::max(e.src, e.dst), static_cast<int>(ei), e.dst > e.src});
  }

  struct Repar {
    double offset = 0.0;                     // lambda * budget
    std::vector<std::vector<double>> theta;  // node costs + lambda * mem
    std::vector<std::vector<double>> redge;  // residual edge matrices
    std::vector<std::vector<double>> pen;    // assigned-neighbor residuals
    std::vector<double> minf;                // min_k theta[i][k] + pen[i][k]
    std::vector<double> edge_future;         // suffix minima, unassigned pairs
    double sum_minf = 0.0;
  };
  std::vector<Repar> menu(L);
  int l_star = 0;  // menu entry with the strongest root bound; guides greedy
  {
    double best_root = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < L; ++l) {
      Repar& R = menu[l];
      R.offset = grid[l] * static_cast<double>(budget_bytes);
      R.theta.resize(n);
      for (int i = 0; i < n; ++i) {
        R.theta[i].resize(sizes[i]);
        for (int k = 0; k < sizes[i]; ++k) {
          R.theta[i][k] =
              node_cost[i][k] + grid[l] * static_cast<double>(node_mem[i][k]);
        }
      }
      R.redge.reserve(table.edges.size());
      for (const StrategyTable::Edge& e : table.edges) {
        R.redge.push_back(e.cost);
      }
      diffuse(R.theta, R.redge);
      R.pen.resize(n);
      R.minf.resize(n);
      for (int i = 0; i < n; ++i) {
        R.pen[i].assign(sizes[i], 0.0);
        R.minf[i] = *std::min_element(R.theta[i].begin(), R.theta[i].end());
        R.sum_minf += R.minf[i];
      }
      R.edge_future.assign(n + 1, 0.0);
      for (size_t ei = 0; ei < table.edges.size(); ++ei) {
        const StrategyTable::Edge& e = table.edges[ei];
        R.edge_future[std::min(e.src, e.dst)] +=
            *std::min_element(R.redge[ei].begin(), R.redge[ei].end());
      }
      for (int i = n - 1; i >= 0; --i) {
        R.edge_future[i] += R.edge_future[i + 1];
      }
      double root = R.sum_minf + R.edge_future[0] - R.offset;
      if (root > best_root) {
        best_root = root;
        l_star = l;
      }
    }
  }

  // A linear multiplier still underprices lumpy memory, so add a suffix
  // knapsack bound over the lambda = 0 reparameterization: h[i][s] is the
  // cheapest theta-completion of nodes i.. when s granules of memory remain.
  // Consumption rounds down and queries round up, so the DP never sees less
  // memory than the search truly has and the bound stays admissible; the
  // granule keeps the table small. h also doubles as an exact(ish)
  // feasibility oracle: +inf marks suffixes no budget split can complete.
  const int64_t total_max_mem = [&] {
    int64_t t = 0;
    for (int i = 0; i < n; ++i) {
      t += *std::max_element(node_mem[i].begin(), node_mem[i].end());
    }
    return t;
  }();
  const int64_t mem_cap = std::max<int64_t>(
      0, std::min(budget_bytes, total_max_mem));
  const int64_t granule = std::max<int64_t>(1, mem_cap / 8192);
  const int64_t S = mem_cap / granule;
  std::vector<std::vector<double>> h(n + 1,
                                     std::vector<double>(S + 1, 0.0));
  for (int i = n - 1; i >= 0; --i) {
    for (int64_t s = 0; s <= S; ++s) {
      double hbest = std::numeric_limits<double>::infinity();
      for (int k = 0; k < sizes[i]; ++k) {
        const int64_t need = node_mem[i][k] / granule;
        if (need > s) continue;
        hbest = std::min(hbest, menu[0].theta[i][k] + h[i + 1][s - need]);
      }
      h[i][s] = hbest;
    }
  }
  // Residual-penalty floor per future node for the lambda = 0 entry; the
  // knapsack bound adds it so assigned-neighbor edge mass is not lost.
  std::vector<double> pmin0(n, 0.0);
  double dyn_pen0 = 0.0;

  auto refresh_minf = [&](Repar& R, int i) {
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k < sizes[i]; ++k) {
      m = std::min(m, R.theta[i][k] + R.pen[i][k]);
    }
    R.sum_minf += m - R.minf[i];
    R.minf[i] = m;
  };
  // Applies (or reverts) node u's choice `a` to its future neighbors, in
  // every menu entry.
  auto push_choice = [&](int u, int a, double sign) {
    for (int l = 0; l < L; ++l) {
      Repar& R = menu[l];
      for (const Fwd& f : forward[u]) {
        const StrategyTable::Edge& e = table.edges[f.eidx];
        const std::vector<double>& r = R.redge[f.eidx];
        const int cols = sizes[e.dst];
        for (int k = 0; k < sizes[f.peer]; ++k) {
          double c = f.peer_is_dst ? r[static_cast<size_t>(a) * cols + k]
                                   : r[static_cast<size_t>(k) * cols + a];
          R.pen[f.peer][k] += sign * c;
        }
        refresh_minf(R, f.peer);
        if (l == 0) {
          double pm = *std::min_element(R.pen[f.peer].begin(),
                                        R.pen[f.peer].end());
          dyn_pen0 += pm - pmin0[f.peer];
          pmin0[f.peer] = pm;
        }
      }
    }
  };

  std::vector<int> selection(n, 0);

  // Greedy incumbent: cheapest strategy per node given assigned neighbors,
  // constrained so the memory suffix stays completable. Succeeds whenever
  // the instance is feasible (the constraint is a plain sum).
  std::vector<int> greedy(n, -1);
  {
    int64_t mem = 0;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      int pick = -1;
      double pick_cost = std::numeric_limits<double>::infinity();
      for (int k = 0; k < sizes[i]; ++k) {
        if (mem + node_mem[i][k] + min_mem_suffix[i + 1] > budget_bytes) continue;
        double c = menu[l_star].theta[i][k] + menu[l_star].pen[i][k];
        if (c < pick_cost) {
          pick_cost = c;
          pick = k;
        }
      }
      if (pick < 0) {
        ok = false;
        break;
      }
      greedy[i] = pick;
      mem += node_mem[i][pick];
      push_choice(i, pick, +1.0);
    }
    for (int i = n - 1; i >= 0; --i) {
      if (greedy[i] >= 0) push_choice(i, greedy[i], -1.0);
    }
    if (!ok) greedy.assign(n, -1);
  }

  // Deterministic coordinate descent on the true objective tightens the
  // incumbent before the search starts. Each accepted move strictly lowers
  // the total (every incident edge is counted exactly once in the local
  // cost), so the loop terminates; the pass cap is just a backstop.
  if (!greedy.empty() && greedy[0] >= 0) {
    std::vector<std::vector<std::pair<int, bool>>> incident(n);  // (edge, src?)
    for (size_t ei = 0; ei < table.edges.size(); ++ei) {
      const StrategyTable::Edge& e = table.edges[ei];
      incident[e.src].push_back({static_cast<int>(ei), true});
      incident[e.dst].push_back({static_cast<int>(ei), false});
    }
    int64_t mem_total = 0;
    for (int i = 0; i < n; ++i) mem_total += node_mem[i][greedy[i]];
    const int kDescentPasses = 20;
    for (int pass = 0; pass < kDescentPasses; ++pass) {
      bool improved = false;
      for (int i = 0; i < n; ++i) {
        auto local = [&](int k) {
          double c = node_cost[i][k];
          for (const auto& [ei, is_src] : incident[i]) {
            const StrategyTable::Edge& e = table.edges[ei];
            const int cols = sizes[e.dst];
            c += is_src
                     ? e.cost[static_cast<size_t>(k) * cols + greedy[e.dst]]
                     : e.cost[static_cast<size_t>(greedy[e.src]) * cols + k];
          }
          return c;
        };
        int bk = greedy[i];
        double bc = local(bk);
        for (int k = 0; k < sizes[i]; ++k) {
          if (k == greedy[i]) continue;
          if (mem_total - node_mem[i][greedy[i]] + node_mem[i][k] >
              budget_bytes) {
            continue;
          }
          double c = local(k);
          if (c < bc) {
            bc = c;
            bk = k;
          }
        }
        if (bk != greedy[i]) {
          mem_total += node_mem[i][bk] - node_mem[i][greedy[i]];
          greedy[i] = bk;
          improved = true;
        }
      }
      if (!improved) break;
    }
  }

  std::vector<int> best_selection;
  double best_cost = std::numeric_limits<double>::infinity();
  bool found = false;
  if (greedy[0] >= 0) {
    IntraOpSolution g;
    evaluate_selection(table, greedy, &g);
    best_cost = g.total_time_s;
    best_selection = greedy;  // replaced by the DFS's canonical optimum
  }
  // Bounds accumulate in a different order than evaluate_selection, so a
  // subtree holding the optimum can bound an ulp above it. The guard sits
  // far above that noise yet far below any real cost difference. Until the
  // first leaf is accepted, exact ties stay explorable so the initial
  // descent lands on the lexicographically smallest optimum; afterwards
  // ties are pruned, which is what keeps plateau-heavy instances tractable.
  auto guard = [&]() { return 1e-12 * std::max(1.0, std::abs(best_cost)); };
  auto prunable = [&](double bound) {
    return found ? bound >= best_cost - guard() : bound >= best_cost + guard();
  };

  // lag[l] accumulates menu entry l's theta over assigned nodes (their
  // cost + lambda*mem after reparameterization); subtracting that entry's
  // offset turns any completion bound into a lower bound on the plain cost
  // of every memory-feasible completion. Passed by value: exact restore on
  // backtrack without accumulating round-off.
  // Deterministic effort cap. Memory-tight instances can defeat every
  // polynomial bound (the constrained selection problem is NP-hard), so
  // cap the expansion count rather than wall time: the same instance
  // always stops at the same point on any machine. Searches that finish
  // under the cap -- all realistic and all test instances -- stay exact.
  const int64_t kMaxExpansions = 1000000;
  int64_t expansions_left = kMaxExpansions;
  bool capped = false;

  using LagArray = std::array<double, kMaxMenu>;
  auto dfs = [&](auto&& self, int i, const LagArray& lag, int64_t mem) -> void {
    if (--expansions_left < 0) {
      capped = true;
      return;
    }
    if (mem + min_mem_suffix[i] > budget_bytes) return;
    if (i == n) {
      IntraOpSolution leaf;
      evaluate_selection(table, selection, &leaf);
      // Strict improvement + ascending strategy order = the first optimum
      // reached is the lexicographically smallest one. The greedy incumbent
      // only prunes; it is always re-found (or beaten) here.
      if (leaf.total_time_s < best_cost ||
          (!found && leaf.total_time_s <= best_cost + guard())) {
        best_cost = leaf.total_time_s;
        best_selection = selection;
        found = true;
      }
      return;
    }
    // Query the knapsack bound at the rounded-up remaining budget.
    auto slots = [&](int64_t brem) {
      return std::min<int64_t>(S, (brem + granule - 1) / granule);
    };
    if (prunable(lag[0] + h[i][slots(budget_bytes - mem)] + dyn_pen0 +
                 menu[0].edge_future[i])) {
      return;
    }
    for (int l = 0; l < L; ++l) {
      const Repar& R = menu[l];
      if (prunable(lag[l] + R.sum_minf + R.edge_future[i] - R.offset)) return;
    }
    std::array<double, kMaxMenu> saved_minf{};
    for (int l = 0; l < L; ++l) {
      saved_minf[l] = menu[l].minf[i];
      menu[l].sum_minf -= saved_minf[l];  // node i leaves the future set
    }
    const double saved_pmin = pmin0[i];
    dyn_pen0 -= saved_pmin;
    for (int k = 0; k < sizes[i]; ++k) {
      int64_t m = mem + node_mem[i][k];
      if (m + min_mem_suffix[i + 1] > budget_bytes) continue;
      LagArray child = lag;
      for (int l = 0; l < L; ++l) {
        child[l] += menu[l].theta[i][k] + menu[l].pen[i][k];
      }
      selection[i] = k;
      push_choice(i, k, +1.0);
      bool cut = prunable(child[0] + h[i + 1][slots(budget_bytes - m)] +
                          dyn_pen0 + menu[0].edge_future[i + 1]);
      for (int l = 0; l < L && !cut; ++l) {
        const Repar& R = menu[l];
        cut = prunable(child[l] + R.sum_minf + R.edge_future[i + 1] - R.offset);
      }
      if (!cut) self(self, i + 1, child, m);
      push_choice(i, k, -1.0);
    }
    dyn_pen0 += saved_pmin;
    for (int l = 0; l < L; ++l) {
      menu[l].minf[i] = saved_minf[l];
      menu[l].sum_minf += saved_minf[l];
    }
  };
  dfs(dfs, 0, LagArray{}, 0);

  // The greedy pass completes whenever any selection fits (its constraint
  // is the same plain sum the search uses), so an empty best_selection
  // means the instance is genuinely infeasible, capped or not.
  if (best_selection.empty()) {
    throw InfeasibleError("no strategy selection fits the memory budget of " +
                          std::to_string(budget_bytes) + " bytes");
  }
  evaluate_selection(table, best_selection, &best);
  best.budget_bytes = budget_bytes;
  best.optimal = !capped;
  return best;
}

std::vector<NodePlan> expand_solution(const MergedGraph& merged,
                                      const StrategyTable& table,
                                      const IntraOpSolution& solution) {
  std::vector<NodePlan> plans;
  const ComputationGraph& graph = *merged.graph;
  for (const GraphNode& node : graph.nodes) {
    auto it = merged.group_of.find(node.id);
    if (it == merged.group_of.end()) continue;
    const int g = it->second;
    const OpStrategy& s = table.strategies[g][solution.selection[g]];
    NodePlan p;
    p.node = node.id;
    p.group = g;
    p.strategy = s.name;
    p.spec = member_spec(merged, g, node.id, s);
    if (node.id == merged.groups[g].host) {
      p.partial_sum = s.partial_sum;
      p.reduce_axes = s.reduce_axes;
    }
    plans.push_back(std::move(p));
  }
  return plans;
}

nlohmann::json intraop_solution_to_json(const MergedGraph& merged,
                                        const StrategyTable& table,
                                        const IntraOpSolution& solution,
                                        const DeviceMesh& mesh) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["mesh"] = mesh_to_json(mesh);
  doc["budget_bytes"] = solution.budget_bytes;
  doc["total_time_s"] = solution.total_time_s;
  doc["compute_time_s"] = solution.compute_time_s;
  doc["comm_time_s"] = solution.comm_time_s;
  doc["peak_memory_bytes"] = solution.peak_memory_bytes;
  nlohmann::json sel = nlohmann::json::array();
  for (size_t g = 0; g < solution.selection.size(); ++g) {
    const OpStrategy& s = table.strategies[g][solution.selection[g]];
    sel.push_back({{"group", g},
                   {"host", merged.groups[g].host},
                   {"index", solution.selection[g]},
                   {"strategy", s.name}});
  }
  doc["selection"] = std::move(sel);
  return doc;
}

ParsedIntraOpSolution parse_intraop_solution(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("version", 0) != 1) {
    throw SchemaError("intraop solution document must declare version 1");
  }
  ParsedIntraOpSolution out;
  try {
    out.mesh = mesh_from_json(doc.at("mesh"));
    out.budget_bytes = doc.at("budget_bytes").get<int64_t>();
    out.total_time_s = doc.at("total_time_s").get<double>();
    for (const auto& entry : doc.at("selection")) {
      out.selection.push_back(entry.at("index").get<int>());
      out.strategy_names.push_back(entry.at("strategy").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed intraop solution document: ") +
                      e.what());
  }
  return out;
}

IntraOpSolution rebind_solution(const ParsedIntraOpSolution& parsed,
                                const StrategyTable& table) {
  if (static_cast<int>(parsed.selection.size()) != table.num_nodes()) {
    throw SchemaError("solution document selects " +
                      std::to_string(parsed.selection.size()) +
                      " nodes but the rebuilt table has " +
                      std::to_string(table.num_nodes()));
  }
  for (size_t g = 0; g < parsed.selection.size(); ++g) {
    int idx = parsed.selection[g];
    if (idx < 0 || idx >= static_cast<int>(table.strategies[g].size()) ||
        table.strategies[g][idx].name != parsed.strategy_names[g]) {
      throw SchemaError("solution document is stale: strategy mismatch at node " +
                        std::to_string(g));
    }
  }
  IntraOpSolution solution;
  evaluate_selection(table, parsed.selection, &solution);
  solution.budget_bytes = parsed.budget_bytes;
  return solution;
}

std::string intraop_report(const MergedGraph& merged, const StrategyTable& table,
                           const IntraOpSolution& solution) {
  std::ostringstream os;
  os << "intra-op selection (" << merged.groups.size() << " merged nodes):\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-4s %-20s %-22s %-14s %12s %14s\n", "id",
                "host", "strategy", "output", "time_s", "mem_bytes");
  os << line;
  for (size_t g = 0; g < merged.groups.size(); ++g) {
    const OpStrategy& s = table.strategies[g][solution.selection[g]];
    std::snprintf(line, sizeof(line), "%-4zu %-20s %-22s %-14s %12.6g %14lld\n",
                  g, merged.groups[g].host.c_str(), s.name.c_str(),
                  s.output_spec.to_string().c_str(), strategy_cost(s),
                  static_cast<long long>(s.memory_bytes));
    os << line;
  }
  os << "total time: " << solution.total_time_s
     << " s (compute " << solution.compute_time_s << " s, comm "
     << solution.comm_time_s << " s)\n";
  os << "memory: " << solution.peak_memory_bytes << " / "
     << solution.budget_bytes << " bytes\n";
  return os.str();
}

}  // namespace autoplan
