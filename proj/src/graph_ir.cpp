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
#include "autoplan/graph_ir.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace autoplan {

namespace {

using nlohmann::json;

struct KindName {
  NodeKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {NodeKind::kPlaceholder, "placeholder"},
    {NodeKind::kParameter, "parameter"},
    {NodeKind::kMatmul, "matmul"},
    {NodeKind::kBatchedMatmul, "batched-matmul"},
    {NodeKind::kElementwiseUnary, "elementwise-unary"},
    {NodeKind::kElementwiseBinary, "elementwise-binary"},
    {NodeKind::kReshape, "reshape"},
    {NodeKind::kTranspose, "transpose"},
    {NodeKind::kReduction, "reduction"},
    {NodeKind::kSoftmax, "softmax"},
    {NodeKind::kLayernorm, "layernorm"},
    {NodeKind::kEmbeddingLookup, "embedding-lookup"},
    {NodeKind::kGetItem, "getitem"},
    {NodeKind::kGetAttr, "getattr"},
    {NodeKind::kConstant, "constant"},
    {NodeKind::kOutput, "output"},
    {NodeKind::kCommunication, "communication"},
};

bool is_source_kind(NodeKind kind) {
  return kind == NodeKind::kPlaceholder || kind == NodeKind::kParameter ||
         kind == NodeKind::kConstant;
}

int64_t checked_extent(const json& v, const std::string& ctx) {
  if (!v.is_number_integer() || v.get<int64_t>() < 1) {
    throw SchemaError("invalid extent in " + ctx + ": extents must be integers >= 1");
  }
  return v.get<int64_t>();
}

TensorMeta parse_meta(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw SchemaError("output meta must be an object in " + ctx);
  TensorMeta meta;
  for (const auto& [key, value] : j.items()) {
    if (key == "shape") {
      if (!value.is_array()) throw SchemaError("shape must be an array in " + ctx);
      for (const auto& e : value) meta.shape.push_back(checked_extent(e, ctx));
    } else if (key == "dtype_bytes") {
      meta.dtype_bytes = value.get<int>();
    } else if (key == "requires_grad") {
      meta.requires_grad = value.get<bool>();
    } else {
      throw SchemaError("unknown output field '" + key + "' in " + ctx);
    }
  }
  if (meta.dtype_bytes != 1 && meta.dtype_bytes != 2 && meta.dtype_bytes != 4 &&
      meta.dtype_bytes != 8) {
    throw SchemaError("dtype_bytes must be one of {1,2,4,8} in " + ctx);
  }
  return meta;
}

std::vector<int64_t> parse_int_list(const json& v, const std::string& ctx) {
  if (!v.is_array()) throw SchemaError(ctx + " must be an array");
  std::vector<int64_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw SchemaError(ctx + " must hold integers");
    out.push_back(e.get<int64_t>());
  }
  return out;
}

NodeAttrs parse_attrs(const json& j, NodeKind kind, const std::string& ctx) {
  NodeAttrs attrs;
  for (const auto& [key, value] : j.items()) {
    if (key == "target_shape" && kind == NodeKind::kReshape) {
      for (const auto& e : value) attrs.target_shape.push_back(checked_extent(e, ctx));
    } else if (key == "perm" && kind == NodeKind::kTranspose) {
      attrs.perm = parse_int_list(value, ctx + ".perm");
    } else if (key == "axes" && kind == NodeKind::kReduction) {
      attrs.axes = parse_int_list(value, ctx + ".axes");
    } else if (key == "keepdims" && kind == NodeKind::kReduction) {
      attrs.keepdims = value.get<bool>();
    } else if (key == "axis" && kind == NodeKind::kSoftmax) {
      attrs.axis = value.get<int64_t>();
    } else if (key == "index" && kind == NodeKind::kGetItem) {
      attrs.index = value.get<int64_t>();
    } else if (key == "name" && kind == NodeKind::kGetAttr) {
      attrs.name = value.get<std::string>();
    } else {
      throw SchemaError("unknown attr '" + key + "' for kind " +
                        std::string(to_string(kind)) + " in " + ctx);
    }
  }
  return attrs;
}

// Stable Kahn topological sort; ties broken by document order so parsing is
// deterministic. Throws CycleError when the node list has a cycle.
std::vector<int> topological_order(const std::vector<GraphNode>& nodes,
                                   const std::unordered_map<std::string, int>& index) {
  const int n = static_cast<int>(nodes.size());
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> children(n);
  for (int i = 0; i < n; ++i) {
    std::unordered_set<int> seen;
    for (const NodeRef& ref : nodes[i].inputs) {
      const int p = index.at(ref.node);
      children[p].push_back(i);
      ++indegree[i];
      (void)seen;
    }
  }
  std::vector<int> order;
  order.reserve(n);
  std::deque<int> ready;
  for (int i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  while (!ready.empty()) {
    const int i = ready.front();
    ready.pop_front();
    order.push_back(i);
    for (int c : children[i]) {
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  if (static_cast<int>(order.size()) != n) {
    throw CycleError("graph contains a cycle");
  }
  return order;
}

int64_t product(const std::vector<int64_t>& v) {
  return std::accumulate(v.begin(), v.end(), int64_t{1}, std::multiplies<int64_t>());
}

const TensorMeta& input_meta(const ComputationGraph& g, const GraphNode& node,
                             size_t slot) {
  if (slot >= node.inputs.size()) {
    throw ShapeMismatchError("node " + node.id + " missing input " +
                             std::to_string(slot));
  }
  const NodeRef& ref = node.inputs[slot];
  const GraphNode& producer = g.node(ref.node);
  if (ref.out_index < 0 ||
      ref.out_index >= static_cast<int>(producer.outputs.size())) {
    throw ShapeMismatchError("node " + node.id + " references output " +
                             std::to_string(ref.out_index) + " of " + ref.node +
                             " which has " + std::to_string(producer.outputs.size()) +
                             " outputs");
  }
  return producer.outputs[ref.out_index];
}

void require_inputs(const GraphNode& node, size_t count) {
  if (node.inputs.size() != count) {
    throw ShapeMismatchError("node " + node.id + " (" + to_string(node.kind) +
                             ") expects " + std::to_string(count) + " inputs, got " +
                             std::to_string(node.inputs.size()));
  }
}

std::vector<TensorMeta> infer_outputs(const ComputationGraph& g, GraphNode& node) {
  switch (node.kind) {
    case NodeKind::kPlaceholder:
    case NodeKind::kParameter:
    case NodeKind::kConstant:
      if (node.kind != NodeKind::kConstant && node.outputs.empty()) {
        throw ShapeMismatchError("node " + node.id +
                                 ": placeholders and parameters must declare metadata");
      }
      return node.outputs;
    case NodeKind::kGetAttr:
      return {};  // non-tensor
    case NodeKind::kMatmul: {
      require_inputs(node, 2);
      const TensorMeta& a = input_meta(g, node, 0);
      const TensorMeta& b = input_meta(g, node, 1);
      if (a.rank() < 2 || b.rank() != 2) {
        throw ShapeMismatchError("matmul " + node.id +
                                 ": lhs rank must be >= 2 and rhs rank exactly 2");
      }
      if (a.shape.back() != b.shape[0]) {
        throw ShapeMismatchError("matmul " + node.id + ": inner dims differ (" +
                                 std::to_string(a.shape.back()) + " vs " +
                                 std::to_string(b.shape[0]) + ")");
      }
      TensorMeta out;
      out.shape.assign(a.shape.begin(), a.shape.end() - 1);
      out.shape.push_back(b.shape[1]);
      out.dtype_bytes = a.dtype_bytes;
      out.requires_grad = a.requires_grad || b.requires_grad;
      return {out};
    }
    case NodeKind::kBatchedMatmul: {
      require_inputs(node, 2);
      const TensorMeta& a = input_meta(g, node, 0);
      const TensorMeta& b = input_meta(g, node, 1);
      if (a.rank() != 3 || b.rank() != 3 || a.shape[0] != b.shape[0]) {
        throw ShapeMismatchError("batched-matmul " + node.id +
                                 ": operands must be rank 3 with equal batch");
      }
      if (a.shape[2] != b.shape[1]) {
        throw ShapeMismatchError("batched-matmul " + node.id + ": inner dims differ");
      }
      TensorMeta out;
      out.shape = {a.shape[0], a.shape[1], b.shape[2]};
      out.dtype_bytes = a.dtype_bytes;
      out.requires_grad = a.requires_grad || b.requires_grad;
      return {out};
    }
    case NodeKind::kElementwiseUnary: {
      require_inputs(node, 1);
      TensorMeta out = input_meta(g, node, 0);
      return {out};
    }
    case NodeKind::kElementwiseBinary: {
      require_inputs(node, 2);
      const TensorMeta& a = input_meta(g, node, 0);
      const TensorMeta& b = input_meta(g, node, 1);
      if (a.shape != b.shape) {
        throw ShapeMismatchError("elementwise-binary " + node.id +
                                 ": operand shapes differ (no broadcasting)");
      }
      TensorMeta out = a;
      out.dtype_bytes = std::max(a.dtype_bytes, b.dtype_bytes);
      out.requires_grad = a.requires_grad || b.requires_grad;
      return {out};
    }
    case NodeKind::kReshape: {
      require_inputs(node, 1);
      const TensorMeta& in = input_meta(g, node, 0);
      if (node.attrs.target_shape.empty()) {
        throw SchemaError("reshape " + node.id + " missing target_shape attr");
      }
      if (product(node.attrs.target_shape) != in.num_elements()) {
        throw ShapeMismatchError("reshape " + node.id +
                                 ": element count not conserved");
      }
      TensorMeta out = in;
      out.shape = node.attrs.target_shape;
      return {out};
    }
    case NodeKind::kTranspose: {
      require_inputs(node, 1);
      const TensorMeta& in = input_meta(g, node, 0);
      const auto& perm = node.attrs.perm;
      std::vector<int64_t> sorted(perm);
      std::sort(sorted.begin(), sorted.end());
      std::vector<int64_t> iota(in.rank());
      std::iota(iota.begin(), iota.end(), 0);
      if (sorted != iota) {
        throw ShapeMismatchError("transpose " + node.id +
                                 ": perm is not a permutation of input dims");
      }
      TensorMeta out = in;
      for (size_t i = 0; i < perm.size(); ++i) out.shape[i] = in.shape[perm[i]];
      return {out};
    }
    case NodeKind::kReduction: {
      require_inputs(node, 1);
      const TensorMeta& in = input_meta(g, node, 0);
      std::unordered_set<int64_t> reduced(node.attrs.axes.begin(),
                                          node.attrs.axes.end());
      for (int64_t ax : reduced) {
        if (ax < 0 || ax >= in.rank()) {
          throw ShapeMismatchError("reduction " + node.id + ": axis out of range");
        }
      }
      TensorMeta out = in;
      out.shape.clear();
      for (int64_t d = 0; d < in.rank(); ++d) {
        if (reduced.count(d)) {
          if (node.attrs.keepdims) out.shape.push_back(1);
        } else {
          out.shape.push_back(in.shape[d]);
        }
      }
      return {out};
    }
    case NodeKind::kSoftmax: {
      require_inputs(node, 1);
      const TensorMeta& in = input_meta(g, node, 0);
      int64_t axis = node.attrs.axis < 0 ? in.rank() + node.attrs.axis : node.attrs.axis;
      if (axis < 0 || axis >= in.rank()) {
        throw ShapeMismatchError("softmax " + node.id + ": axis out of range");
      }
      return {in};
    }
    case NodeKind::kLayernorm: {
      if (node.inputs.empty() || node.inputs.size() > 3) {
        throw ShapeMismatchError("layernorm " + node.id +
                                 " takes input [, gamma, beta]");
      }
      const TensorMeta& in = input_meta(g, node, 0);
      for (size_t s = 1; s < node.inputs.size(); ++s) {
        const TensorMeta& w = input_meta(g, node, s);
        if (w.rank() != 1 || w.shape[0] != in.shape.back()) {
          throw ShapeMismatchError("layernorm " + node.id +
                                   ": affine weights must match the last dim");
        }
      }
      return {in};
    }
    case NodeKind::kEmbeddingLookup: {
      require_inputs(node, 2);
      const TensorMeta& ids = input_meta(g, node, 0);
      const TensorMeta& table = input_meta(g, node, 1);
      if (table.rank() != 2) {
        throw ShapeMismatchError("embedding-lookup " + node.id +
                                 ": table must be rank 2");
      }
      TensorMeta out;
      out.shape = ids.shape;
      out.shape.push_back(table.shape[1]);
      out.dtype_bytes = table.dtype_bytes;
      out.requires_grad = table.requires_grad;
      return {out};
    }
    case NodeKind::kGetItem: {
      require_inputs(node, 1);
      const GraphNode& producer = g.node(node.inputs[0].node);
      const int64_t idx = node.attrs.index;
      if (idx < 0 || idx >= static_cast<int64_t>(producer.outputs.size())) {
        throw ShapeMismatchError("getitem " + node.id + ": index out of range");
      }
      TensorMeta out = producer.outputs[idx];
      out.requires_grad = false;  // getitem is non-differentiable
      return {out};
    }
    case NodeKind::kOutput: {
      if (node.inputs.empty()) {
        throw ShapeMismatchError("output node " + node.id + " has no inputs");
      }
      std::vector<TensorMeta> outs;
      for (size_t s = 0; s < node.inputs.size(); ++s) {
        outs.push_back(input_meta(g, node, s));
      }
      return outs;
    }
    case NodeKind::kCommunication: {
      require_inputs(node, 1);
      return {input_meta(g, node, 0)};
    }
  }
  throw UnsupportedKindError("no shape rule for node " + node.id);
}

int64_t sum_input_bytes(const ComputationGraph& g, const GraphNode& node) {
  int64_t total = 0;
  for (size_t s = 0; s < node.inputs.size(); ++s) {
    total += input_meta(g, node, s).bytes();
  }
  return total;
}

int64_t sum_differentiable_input_bytes(const ComputationGraph& g,
                                       const GraphNode& node) {
  int64_t total = 0;
  for (size_t s = 0; s < node.inputs.size(); ++s) {
    const TensorMeta& m = input_meta(g, node, s);
    if (m.requires_grad) total += m.bytes();
  }
  return total;
}

}  // namespace

int64_t TensorMeta::num_elements() const {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

const TensorMeta& GraphNode::output(int idx) const {
  if (idx < 0 || idx >= static_cast<int>(outputs.size())) {
    throw ShapeMismatchError("node " + id + " has no output " + std::to_string(idx));
  }
  return outputs[idx];
}

const char* to_string(NodeKind kind) {
  for (const auto& e : kKindNames) {
    if (e.kind == kind) return e.name;
  }
  return "?";
}

std::optional<NodeKind> node_kind_from_string(const std::string& name) {
  for (const auto& e : kKindNames) {
    if (name == e.name) return e.kind;
  }
  return std::nullopt;
}

const GraphNode& ComputationGraph::node(const std::string& id) const {
  auto it = index.find(id);
  if (it == index.end()) throw DanglingRefError("unknown node id '" + id + "'");
  return nodes[it->second];
}

GraphNode& ComputationGraph::node(const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) throw DanglingRefError("unknown node id '" + id + "'");
  return nodes[it->second];
}

std::vector<std::vector<std::pair<int, int>>> ComputationGraph::consumers() const {
  std::vector<std::vector<std::pair<int, int>>> result(nodes.size());
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    for (int slot = 0; slot < static_cast<int>(nodes[i].inputs.size()); ++slot) {
      result[index.at(nodes[i].inputs[slot].node)].emplace_back(i, slot);
    }
  }
  return result;
}

void ComputationGraph::rebuild_index() {
  index.clear();
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) index[nodes[i].id] = i;
}

ComputationGraph parse_graph(const json& doc) {
  if (!doc.is_object()) throw SchemaError("graph document must be an object");
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (key != "version" && key != "placeholders" && key != "nodes" &&
        key != "output") {
      throw SchemaError("unknown top-level field '" + key + "'");
    }
  }
  if (!doc.contains("version") || doc["version"] != 1) {
    throw SchemaError("graph document must declare version 1");
  }
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw SchemaError("graph document missing 'nodes' array");
  }

  ComputationGraph graph;
  for (const auto& nj : doc["nodes"]) {
    if (!nj.is_object()) throw SchemaError("node entries must be objects");
    GraphNode node;
    json attrs_json = json::object();
    for (const auto& [key, value] : nj.items()) {
      if (key == "id") {
        node.id = value.get<std::string>();
      } else if (key == "kind") {
        const std::string name = value.get<std::string>();
        auto kind = node_kind_from_string(name);
        if (!kind || *kind == NodeKind::kCommunication) {
          throw SchemaError("unknown node kind '" + name + "'");
        }
        node.kind = *kind;
      } else if (key == "inputs") {
        for (const auto& ref : value) {
          if (!ref.is_array() || ref.size() != 2) {
            throw SchemaError("inputs must be [id, out_index] pairs");
          }
          node.inputs.push_back({ref[0].get<std::string>(), ref[1].get<int>()});
        }
      } else if (key == "attrs") {
        attrs_json = value;
      } else if (key == "outputs") {
        for (const auto& m : value) {
          node.outputs.push_back(parse_meta(m, "node outputs"));
        }
      } else if (key == "in_place") {
        node.in_place = value.get<bool>();
      } else {
        throw SchemaError("unknown node field '" + key + "'");
      }
    }
    if (node.id.empty()) throw SchemaError("node missing id");
    node.attrs = parse_attrs(attrs_json, node.kind, "node " + node.id);
    if (graph.index.count(node.id)) {
      throw SchemaError("duplicate node id '" + node.id + "'");
    }
    graph.index[node.id] = static_cast<int>(graph.nodes.size());
    graph.nodes.push_back(std::move(node));
  }

  // Dangling references before anything else.
  for (const GraphNode& node : graph.nodes) {
    for (const NodeRef& ref : node.inputs) {
      if (!graph.contains(ref.node)) {
        throw DanglingRefError("node " + node.id + " references missing id '" +
                               ref.node + "'");
      }
    }
  }

  if (doc.contains("placeholders")) {
    for (const auto& p : doc["placeholders"]) {
      const std::string id = p.get<std::string>();
      if (!graph.contains(id)) {
        throw DanglingRefError("placeholder list references missing id '" + id + "'");
      }
      if (graph.node(id).kind != NodeKind::kPlaceholder) {
        throw SchemaError("placeholder list entry '" + id + "' is not a placeholder");
      }
      graph.placeholders.push_back(id);
    }
  } else {
    for (const GraphNode& node : graph.nodes) {
      if (node.kind == NodeKind::kPlaceholder) graph.placeholders.push_back(node.id);
    }
  }

  if (doc.contains("output")) {
    graph.output = doc["output"].get<std::string>();
    if (!graph.contains(graph.output)) {
      throw DanglingRefError("output references missing id '" + graph.output + "'");
    }
  } else {
    for (const GraphNode& node : graph.nodes) {
      if (node.kind == NodeKind::kOutput) {
        if (!graph.output.empty()) throw SchemaError("multiple output nodes");
        graph.output = node.id;
      }
    }
  }

  // Reorder into a deterministic topological order.
  std::vector<int> order = topological_order(graph.nodes, graph.index);
  std::vector<GraphNode> sorted;
  sorted.reserve(graph.nodes.size());
  for (int i : order) sorted.push_back(std::move(graph.nodes[i]));
  graph.nodes = std::move(sorted);
  graph.rebuild_index();

  // Every non-source node must reach the output; dead nodes are rejected so
  // downstream passes can assume a live graph.
  if (!graph.output.empty()) {
    std::unordered_set<std::string> reaches{graph.output};
    for (int i = static_cast<int>(graph.nodes.size()) - 1; i >= 0; --i) {
      const GraphNode& node = graph.nodes[i];
      if (!reaches.count(node.id)) continue;
      for (const NodeRef& ref : node.inputs) reaches.insert(ref.node);
    }
    for (const GraphNode& node : graph.nodes) {
      if (!reaches.count(node.id)) {
        throw SchemaError("node '" + node.id + "' cannot reach the output");
      }
    }
  }
  return graph;
}

ComputationGraph parse_graph_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("graph document is not valid JSON: ") + e.what());
  }
  return parse_graph(doc);
}

nlohmann::json graph_to_json(const ComputationGraph& graph) {
  json doc;
  doc["version"] = 1;
  doc["placeholders"] = graph.placeholders;
  doc["output"] = graph.output;
  json nodes = json::array();
  for (const GraphNode& node : graph.nodes) {
    json nj;
    nj["id"] = node.id;
    nj["kind"] = to_string(node.kind);
    json inputs = json::array();
    for (const NodeRef& ref : node.inputs) {
      inputs.push_back(json::array({ref.node, ref.out_index}));
    }
    nj["inputs"] = inputs;
    json attrs = json::object();
    if (!node.attrs.target_shape.empty()) attrs["target_shape"] = node.attrs.target_shape;
    if (!node.attrs.perm.empty()) attrs["perm"] = node.attrs.perm;
    if (node.kind == NodeKind::kReduction) {
      attrs["axes"] = node.attrs.axes;
      attrs["keepdims"] = node.attrs.keepdims;
    }
    if (node.kind == NodeKind::kSoftmax) attrs["axis"] = node.attrs.axis;
    if (node.kind == NodeKind::kGetItem) attrs["index"] = node.attrs.index;
    if (!node.attrs.name.empty()) attrs["name"] = node.attrs.name;
    nj["attrs"] = attrs;
    json outs = json::array();
    for (const TensorMeta& m : node.outputs) {
      outs.push_back({{"shape", m.shape},
                      {"dtype_bytes", m.dtype_bytes},
                      {"requires_grad", m.requires_grad}});
    }
    nj["outputs"] = outs;
    if (node.in_place) nj["in_place"] = true;
    nodes.push_back(nj);
  }
  doc["nodes"] = nodes;
  return doc;
}

void infer_meta(ComputationGraph& graph) {
  for (GraphNode& node : graph.nodes) {
    std::vector<TensorMeta> inferred = infer_outputs(graph, node);
    if (!node.outputs.empty() && !is_source_kind(node.kind)) {
      // Declared metadata on compute nodes is verified, not trusted.
      if (node.outputs != inferred) {
        throw ShapeMismatchError("node " + node.id +
                                 ": declared outputs disagree with inference");
      }
    }
    node.outputs = std::move(inferred);
    const bool kind_differentiable = node.kind != NodeKind::kGetAttr &&
                                     node.kind != NodeKind::kGetItem &&
                                     node.kind != NodeKind::kConstant;
    bool any_grad = false;
    for (const TensorMeta& m : node.outputs) any_grad = any_grad || m.requires_grad;
    node.differentiable = kind_differentiable && any_grad;
  }
}

bool is_compute_kind(NodeKind kind) {
  switch (kind) {
    case NodeKind::kMatmul:
    case NodeKind::kBatchedMatmul:
    case NodeKind::kElementwiseUnary:
    case NodeKind::kElementwiseBinary:
    case NodeKind::kReduction:
    case NodeKind::kSoftmax:
    case NodeKind::kLayernorm:
    case NodeKind::kEmbeddingLookup:
      return true;
    default:
      return false;
  }
}

// FLOP formulas: matmul 2mkn, batched-matmul 2bmkn, elementwise 1/element,
// reduction 1/element, softmax 5/element, layernorm 8/element, views and
// lookups 0. Backward: 2x forward for the matmul family, 1x forward for the
// other compute kinds.
NodeProfile profile_node(const ComputationGraph& graph, const GraphNode& node,
                         double device_flops_per_s) {
  NodeProfile p;
  switch (node.kind) {
    case NodeKind::kMatmul: {
      const TensorMeta& a = input_meta(graph, node, 0);
      const TensorMeta& b = input_meta(graph, node, 1);
      double m = 1;
      for (size_t i = 0; i + 1 < a.shape.size(); ++i) m *= static_cast<double>(a.shape[i]);
      p.flops = 2.0 * m * static_cast<double>(a.shape.back()) *
                static_cast<double>(b.shape[1]);
      p.bwd_flops = 2.0 * p.flops;
      p.saved_intermediate_bytes = sum_input_bytes(graph, node);
      break;
    }
    case NodeKind::kBatchedMatmul: {
      const TensorMeta& a = input_meta(graph, node, 0);
      const TensorMeta& b = input_meta(graph, node, 1);
      p.flops = 2.0 * static_cast<double>(a.shape[0]) *
                static_cast<double>(a.shape[1]) * static_cast<double>(a.shape[2]) *
                static_cast<double>(b.shape[2]);
      p.bwd_flops = 2.0 * p.flops;
      p.saved_intermediate_bytes = sum_input_bytes(graph, node);
      break;
    }
    case NodeKind::kElementwiseUnary: {
      p.flops = static_cast<double>(node.output().num_elements());
      p.bwd_flops = p.flops;
      p.saved_intermediate_bytes = node.output().bytes();
      break;
    }
    case NodeKind::kElementwiseBinary: {
      p.flops = static_cast<double>(node.output().num_elements());
      p.bwd_flops = p.flops;
      // Modeled as additive: the backward passes gradients through unchanged.
      p.saved_intermediate_bytes = 0;
      break;
    }
    case NodeKind::kReduction: {
      p.flops = static_cast<double>(input_meta(graph, node, 0).num_elements());
      p.bwd_flops = p.flops;
      p.saved_intermediate_bytes = 0;
      break;
    }
    case NodeKind::kSoftmax: {
      p.flops = 5.0 * static_cast<double>(node.output().num_elements());
      p.bwd_flops = p.flops;
      p.saved_intermediate_bytes = node.output().bytes();
      break;
    }
    case NodeKind::kLayernorm: {
      const TensorMeta& in = input_meta(graph, node, 0);
      p.flops = 8.0 * static_cast<double>(in.num_elements());
      p.bwd_flops = p.flops;
      // Normalized output plus mean/rstd statistics (one scalar pair per row).
      const int64_t rows = in.num_elements() / in.shape.back();
      p.saved_intermediate_bytes = in.bytes() + 2 * rows * 4;
      break;
    }
    case NodeKind::kEmbeddingLookup: {
      p.flops = 0;
      p.bwd_flops = 0;
      p.saved_intermediate_bytes = input_meta(graph, node, 0).bytes();  // indices
      break;
    }
    case NodeKind::kParameter:
      p.param_bytes = node.has_tensor_output() ? node.output().bytes() : 0;
      break;
    case NodeKind::kPlaceholder:
    case NodeKind::kConstant:
    case NodeKind::kReshape:
    case NodeKind::kTranspose:
    case NodeKind::kGetItem:
    case NodeKind::kGetAttr:
    case NodeKind::kOutput:
    case NodeKind::kCommunication:
      break;
  }
  for (const TensorMeta& m : node.outputs) p.fwd_out_bytes += m.bytes();
  if (node.kind == NodeKind::kOutput) p.fwd_out_bytes = 0;  // aliases its inputs
  p.grad_bytes = node.differentiable ? p.fwd_out_bytes : 0;
  if (is_compute_kind(node.kind) && !node.in_place) {
    p.fwd_peak_overhead_bytes = p.fwd_out_bytes;
    p.bwd_peak_overhead_bytes =
        p.fwd_out_bytes + sum_differentiable_input_bytes(graph, node);
  }
  if (device_flops_per_s > 0) {
    p.fwd_time_s = p.flops / device_flops_per_s;
    p.bwd_time_s = p.bwd_flops / device_flops_per_s;
  }
  return p;
}

GraphProfile profile_graph(const ComputationGraph& graph,
                           double device_flops_per_s) {
  GraphProfile gp;
  for (const GraphNode& node : graph.nodes) {
    NodeProfile p = profile_node(graph, node, device_flops_per_s);
    gp.total_flops += p.flops;
    gp.total_param_bytes += p.param_bytes;
    if (is_compute_kind(node.kind)) gp.total_activation_bytes += p.fwd_out_bytes;
    gp.per_node.emplace(node.id, std::move(p));
  }

  // Serial liveness walk: activations die after their last consumer.
  auto cons = graph.consumers();
  std::vector<int> remaining(graph.nodes.size());
  int64_t live = 0;
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    remaining[i] = static_cast<int>(cons[i].size());
    const GraphNode& node = graph.nodes[i];
    if (node.kind == NodeKind::kPlaceholder || node.kind == NodeKind::kParameter ||
        node.kind == NodeKind::kConstant) {
      live += gp.per_node.at(node.id).fwd_out_bytes;
    }
  }
  int64_t peak = live;
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& node = graph.nodes[i];
    const NodeProfile& p = gp.per_node.at(node.id);
    if (is_compute_kind(node.kind)) {
      live += p.fwd_out_bytes;
      peak = std::max(peak, live + p.fwd_peak_overhead_bytes - p.fwd_out_bytes);
      peak = std::max(peak, live);
    }
    for (const NodeRef& ref : node.inputs) {
      const int producer = graph.index.at(ref.node);
      if (--remaining[producer] == 0 &&
          is_compute_kind(graph.nodes[producer].kind)) {
        live -= gp.per_node.at(graph.nodes[producer].id).fwd_out_bytes;
      }
    }
  }
  gp.serial_peak_bytes = peak;
  return gp;
}

std::string profile_report(const ComputationGraph& graph,
                           const GraphProfile& profile) {
  std::ostringstream os;
  os << "node                          kind                 flops      out_bytes"
        "    saved_bytes\n";
  for (const GraphNode& node : graph.nodes) {
    const NodeProfile& p = profile.per_node.at(node.id);
    char line[160];
    std::snprintf(line, sizeof(line), "%-28s  %-18s  %12.0f  %12lld  %12lld\n",
                  node.id.c_str(), to_string(node.kind), p.flops,
                  static_cast<long long>(p.fwd_out_bytes),
                  static_cast<long long>(p.saved_intermediate_bytes));
    os << line;
  }
  os << "total flops: " << std::fixed << profile.total_flops << "\n";
  os << "total activation bytes: " << profile.total_activation_bytes << "\n";
  os << "total parameter bytes: " << profile.total_param_bytes << "\n";
  os << "serial peak bytes: " << profile.serial_peak_bytes << "\n";
  return os.str();
}

}  // namespace autoplan
