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
#ifndef AUTOPLAN_GRAPH_IR_HPP_
#define AUTOPLAN_GRAPH_IR_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoplan/errors.hpp"

namespace autoplan {

// Shape/dtype metadata of a tensor. Never backed by real data; byte sizes
// are computed from extents alone.
struct TensorMeta {
  std::vector<int64_t> shape;
  int dtype_bytes = 4;
  bool requires_grad = false;

  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t num_elements() const;
  int64_t bytes() const { return num_elements() * dtype_bytes; }

  bool operator==(const TensorMeta&) const = default;
};

enum class NodeKind {
  kPlaceholder,
  kParameter,
  kMatmul,
  kBatchedMatmul,
  kElementwiseUnary,
  kElementwiseBinary,
  kReshape,
  kTranspose,
  kReduction,
  kSoftmax,
  kLayernorm,
  kEmbeddingLookup,
  kGetItem,
  kGetAttr,
  kConstant,
  kOutput,
  // Inserted by the planner's communication pass; rejected by the input
  // graph schema (input graphs are logical, pre-distribution).
  kCommunication,
};

const char* to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(const std::string& name);

// Reference to the out_index-th output of another node.
struct NodeRef {
  std::string node;
  int out_index = 0;

  bool operator==(const NodeRef&) const = default;
};

// Kind-specific attributes. Unknown attribute keys in the document are
// rejected, not ignored.
struct NodeAttrs {
  std::vector<int64_t> target_shape;  // reshape
  std::vector<int64_t> perm;          // transpose
  std::vector<int64_t> axes;          // reduction
  bool keepdims = false;              // reduction
  int64_t axis = -1;                  // softmax dim; -1 = last
  int64_t index = 0;                  // getitem
  std::string name;                   // getattr / communication collective
  std::vector<int64_t> mesh_axes;     // communication
  int64_t bytes = 0;                  // communication payload
};

struct GraphNode {
  std::string id;
  NodeKind kind = NodeKind::kPlaceholder;
  std::vector<NodeRef> inputs;
  NodeAttrs attrs;
  std::vector<TensorMeta> outputs;  // empty for non-tensor nodes
  // False for getattr/getitem/constant and for nodes none of whose outputs
  // require grad (bool-valued tensors never do). Set by infer_meta.
  bool differentiable = false;
  bool in_place = false;

  bool has_tensor_output() const { return !outputs.empty(); }
  const TensorMeta& output(int idx = 0) const;
};

// DAG of tensor operations. `nodes` is kept in a deterministic topological
// order after parsing; the graph is immutable once meta inference ran and
// safe to share read-only across solver instances.
struct ComputationGraph {
  std::vector<GraphNode> nodes;
  std::unordered_map<std::string, int> index;  // id -> position in nodes
  std::vector<std::string> placeholders;       // ordered placeholder ids
  std::string output;                          // id of the output node

  bool contains(const std::string& id) const { return index.count(id) > 0; }
  const GraphNode& node(const std::string& id) const;
  GraphNode& node(const std::string& id);

  // consumers()[i] lists (consumer position, input slot) pairs for nodes[i].
  std::vector<std::vector<std::pair<int, int>>> consumers() const;

  void rebuild_index();
};

// Closed-form per-node statistics, computed without materializing data.
// Backward FLOP model: 2x forward for matmul-family nodes, 1x forward for
// the remaining compute kinds, 0 for views and markers.
struct NodeProfile {
  double flops = 0;                      // forward op FLOPs
  double bwd_flops = 0;
  int64_t fwd_out_bytes = 0;             // bytes of the saved forward output
  int64_t saved_intermediate_bytes = 0;  // intermediates needed for backward
  int64_t grad_bytes = 0;                // output-gradient bytes
  int64_t param_bytes = 0;               // parameter bytes (parameter nodes)
  int64_t fwd_peak_overhead_bytes = 0;   // transient forward memory
  int64_t bwd_peak_overhead_bytes = 0;   // transient backward memory
  double fwd_time_s = 0;                 // zero until a device rate is known
  double bwd_time_s = 0;
};

struct GraphProfile {
  std::unordered_map<std::string, NodeProfile> per_node;
  double total_flops = 0;
  int64_t total_activation_bytes = 0;  // sum of fwd_out_bytes over compute nodes
  int64_t total_param_bytes = 0;
  // Peak forward memory under serial topological execution: placeholders and
  // parameters resident, activations freed once their last consumer ran.
  int64_t serial_peak_bytes = 0;
};

// Parses and validates a version-1 graph document. Rejects cycles, dangling
// references, unknown kinds and unknown attributes.
ComputationGraph parse_graph(const nlohmann::json& doc);
ComputationGraph parse_graph_text(const std::string& text);
nlohmann::json graph_to_json(const ComputationGraph& graph);

// Fills every tensor-producing node's outputs via per-kind shape rules.
// Placeholders, parameters and tensor constants must already carry metadata.
// Pure meta execution: no tensor payload is ever allocated.
void infer_meta(ComputationGraph& graph);

// Per-kind closed-form profile. Time fields are flops / device_flops_per_s
// when a rate is given, zero otherwise.
NodeProfile profile_node(const ComputationGraph& graph, const GraphNode& node,
                         double device_flops_per_s = 0);

GraphProfile profile_graph(const ComputationGraph& graph,
                           double device_flops_per_s = 0);

// True for kinds that perform arithmetic (matmul family, elementwise family,
// softmax, layernorm, reduction, embedding lookup).
bool is_compute_kind(NodeKind kind);

// Deterministic fixed-width table of per-node profiles plus graph totals.
std::string profile_report(const ComputationGraph& graph,
                           const GraphProfile& profile);

}  // namespace autoplan

#endif  // AUTOPLAN_GRAPH_IR_HPP_
