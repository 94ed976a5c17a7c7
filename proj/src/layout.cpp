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
#include "autoplan/layout.hpp"

#include <algorithm>
#include <cctype>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "autoplan/errors.hpp"

namespace autoplan {

namespace {

// Unambiguous serialization used for closed sets and cache keys (to_string
// would be ambiguous for mesh axes >= 10).
std::string key_of(const ShardingSpec& spec) {
  std::ostringstream out;
  for (const DimSpec& dim : spec.dims) {
    if (dim.replicated()) {
      out << "R";
    } else {
      out << "S";
      for (size_t i = 0; i < dim.axes.size(); ++i) {
        if (i > 0) out << ".";
        out << dim.axes[i];
      }
    }
    out << ";";
  }
  return out.str();
}

int64_t axes_extent_product(const std::vector<int>& axes, const DeviceMesh& mesh) {
  int64_t product = 1;
  for (int axis : axes) product *= mesh.axis_extent(axis);
  return product;
}

void check_rank(const ShardingSpec& spec, const TensorMeta& meta) {
  if (spec.tensor_rank() != static_cast<int>(meta.shape.size())) {
    throw RankMismatchError("sharding spec rank " +
                            std::to_string(spec.tensor_rank()) +
                            " does not match tensor rank " +
                            std::to_string(meta.shape.size()));
  }
}

}  // namespace

std::string DimSpec::to_string() const {
  if (replicated()) return "R";
  std::string out = "S";
  for (int axis : axes) out += std::to_string(axis);
  return out;
}

ShardingSpec ShardingSpec::replicated(int tensor_rank, int mesh_rank) {
  ShardingSpec spec;
  spec.dims.resize(tensor_rank);
  spec.mesh_rank = mesh_rank;
  return spec;
}

ShardingSpec ShardingSpec::parse(const std::string& text, int mesh_rank) {
  ShardingSpec spec;
  spec.mesh_rank = mesh_rank;
  std::vector<bool> used(mesh_rank, false);
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == 'R') {
      spec.dims.emplace_back();
      ++i;
    } else if (c == 'S') {
      DimSpec dim;
      ++i;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        int axis = text[i] - '0';
        if (axis >= mesh_rank) {
          throw AxisError("mesh axis " + std::to_string(axis) +
                          " out of range for mesh rank " + std::to_string(mesh_rank));
        }
        if (used[axis]) {
          throw AxisError("mesh axis " + std::to_string(axis) +
                          " used more than once in spec '" + text + "'");
        }
        used[axis] = true;
        dim.axes.push_back(axis);
        ++i;
      }
      if (dim.axes.empty()) {
        throw SchemaError("'S' without mesh axes in sharding spec '" + text + "'");
      }
      spec.dims.push_back(std::move(dim));
    } else {
      throw SchemaError("unexpected character '" + std::string(1, c) +
                        "' in sharding spec '" + text + "'");
    }
  }
  if (spec.dims.empty()) {
    throw SchemaError("empty sharding spec");
  }
  return spec;
}

std::string ShardingSpec::to_string() const {
  std::string out;
  for (const DimSpec& dim : dims) out += dim.to_string();
  return out;
}

std::vector<int> ShardingSpec::used_axes() const {
  std::vector<int> axes;
  for (const DimSpec& dim : dims) {
    axes.insert(axes.end(), dim.axes.begin(), dim.axes.end());
  }
  std::sort(axes.begin(), axes.end());
  return axes;
}

int64_t ShardingSpec::shard_count(const DeviceMesh& mesh) const {
  int64_t count = 1;
  for (const DimSpec& dim : dims) count *= axes_extent_product(dim.axes, mesh);
  return count;
}

int64_t ShardingSpec::per_device_bytes(const TensorMeta& meta,
                                       const DeviceMesh& mesh) const {
  return meta.bytes() / shard_count(mesh);
}

bool ShardingSpec::valid_for(const TensorMeta& meta, const DeviceMesh& mesh) const {
  if (tensor_rank() != static_cast<int>(meta.shape.size())) return false;
  if (mesh_rank != static_cast<int>(mesh.shape.size())) return false;
  std::vector<bool> used(mesh_rank, false);
  for (size_t d = 0; d < dims.size(); ++d) {
    for (int axis : dims[d].axes) {
      if (axis < 0 || axis >= mesh_rank || used[axis]) return false;
      used[axis] = true;
    }
    int64_t product = axes_extent_product(dims[d].axes, mesh);
    if (meta.shape[d] % product != 0) return false;
  }
  return true;
}

std::vector<std::pair<ShardingSpec, TransformStep>> one_step_transforms(
    const ShardingSpec& spec, const DeviceMesh& mesh, const TensorMeta& meta) {
  check_rank(spec, meta);
  std::vector<std::pair<ShardingSpec, TransformStep>> result;
  std::unordered_set<std::string> seen;
  auto emit = [&](ShardingSpec&& next, TransformStep&& step) {
    if (!next.valid_for(meta, mesh)) return;
    if (!seen.insert(key_of(next)).second) return;
    step.result = next;
    result.emplace_back(std::move(next), std::move(step));
  };

  const int rank = spec.tensor_rank();
  std::vector<bool> used(spec.mesh_rank, false);
  for (int axis : spec.used_axes()) used[axis] = true;

  // All-gather: drop the last mesh axis of a sharded dimension.
  for (int d = 0; d < rank; ++d) {
    if (spec.dims[d].replicated()) continue;
    ShardingSpec next = spec;
    int axis = next.dims[d].axes.back();
    next.dims[d].axes.pop_back();
    TransformStep step;
    step.kind = CollectiveKind::kAllGather;
    step.tensor_dim = d;
    step.mesh_axis = axis;
    emit(std::move(next), std::move(step));
  }
  // Shard-slice: append an unused mesh axis to any dimension.
  for (int d = 0; d < rank; ++d) {
    for (int axis = 0; axis < spec.mesh_rank; ++axis) {
      if (used[axis]) continue;
      ShardingSpec next = spec;
      next.dims[d].axes.push_back(axis);
      TransformStep step;
      step.kind = CollectiveKind::kShardSlice;
      step.tensor_dim = d;
      step.mesh_axis = axis;
      emit(std::move(next), std::move(step));
    }
  }
  // All-to-all: move the last mesh axis of one dimension onto another.
  for (int d = 0; d < rank; ++d) {
    if (spec.dims[d].replicated()) continue;
    for (int d2 = 0; d2 < rank; ++d2) {
      if (d2 == d) continue;
      ShardingSpec next = spec;
      int axis = next.dims[d].axes.back();
      next.dims[d].axes.pop_back();
      next.dims[d2].axes.push_back(axis);
      TransformStep step;
      step.kind = CollectiveKind::kAllToAll;
      step.tensor_dim = d;
      step.target_dim = d2;
      step.mesh_axis = axis;
      emit(std::move(next), std::move(step));
    }
  }
  return result;
}

double dim_diff(const DimSpec& src, const DimSpec& tgt, const DimDiffWeights& weights) {
  size_t common = 0;
  while (common < src.axes.size() && common < tgt.axes.size() &&
         src.axes[common] == tgt.axes[common]) {
    ++common;
  }
  // Axes past the common prefix must be gathered away (last-first), then the
  // target's remaining axes sliced back on.
  double gathers = static_cast<double>(src.axes.size() - common);
  double shards = static_cast<double>(tgt.axes.size() - common);
  double steps = gathers + shards;
  double score = gathers * weights.all_gather + shards * weights.shard;
  if (steps > 1) score += weights.step_penalty * (steps - 1);
  return score;
}

double heuristic_diff(const ShardingSpec& src, const ShardingSpec& tgt,
                      const DimDiffWeights& weights) {
  if (src.tensor_rank() != tgt.tensor_rank()) {
    throw RankMismatchError("cannot compare sharding specs of ranks " +
                            std::to_string(src.tensor_rank()) + " and " +
                            std::to_string(tgt.tensor_rank()));
  }
  double total = 0;
  for (int d = 0; d < src.tensor_rank(); ++d) {
    total += dim_diff(src.dims[d], tgt.dims[d], weights);
  }
  return total;
}

TransformPath find_transform_path(const ShardingSpec& src, const ShardingSpec& tgt,
                                  const DeviceMesh& mesh, const TensorMeta& meta,
                                  const DimDiffWeights& weights) {
  if (!src.valid_for(meta, mesh)) {
    throw ShapeError("source sharding spec " + src.to_string() +
                     " is not valid for the tensor/mesh");
  }
  if (!tgt.valid_for(meta, mesh)) {
    throw ShapeError("target sharding spec " + tgt.to_string() +
                     " is not valid for the tensor/mesh");
  }
  TransformPath path;
  path.source = src;
  path.target = tgt;
  if (src == tgt) return path;

  struct SearchNode {
    ShardingSpec spec;
    int parent = -1;
    TransformStep step;  // step taken from parent to reach this node
  };
  std::vector<SearchNode> nodes;
  std::unordered_set<std::string> visited;

  // Min-heap on (heuristic, insertion sequence); the sequence number makes
  // tie-breaking deterministic.
  using QueueEntry = std::pair<double, int>;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> open;

  nodes.push_back({src, -1, {}});
  visited.insert(key_of(src));
  open.emplace(heuristic_diff(src, tgt, weights), 0);

  const std::string target_key = key_of(tgt);
  int found = -1;
  while (found < 0 && !open.empty()) {
    int current = open.top().second;
    open.pop();
    // Copy: nodes may reallocate while we expand.
    ShardingSpec spec = nodes[current].spec;
    for (auto& [next, step] : one_step_transforms(spec, mesh, meta)) {
      std::string key = key_of(next);
      if (!visited.insert(key).second) continue;
      nodes.push_back({next, current, step});
      if (key == target_key) {
        found = static_cast<int>(nodes.size()) - 1;
        break;
      }
      open.emplace(heuristic_diff(next, tgt, weights),
                   static_cast<int>(nodes.size()) - 1);
    }
  }
  if (found < 0) {
    // Unreachable in practice: every valid spec connects to the fully
    // replicated spec by gathers, and back by shard-slices.
    throw InfeasibleError("no conversion path from " + src.to_string() + " to " +
                          tgt.to_string());
  }
  for (int at = found; at > 0; at = nodes[at].parent) {
    path.steps.push_back(nodes[at].step);
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

double conversion_cost(TransformPath& path, const DeviceMesh& mesh,
                       const TensorMeta& meta) {
  double total = 0;
  ShardingSpec current = path.source;
  for (const TransformStep& step : path.steps) {
    int64_t bytes = current.per_device_bytes(meta, mesh);
    total += collective_cost(mesh, {step.mesh_axis}, step.kind, bytes);
    current = step.result;
  }
  path.comm_cost_s = total;
  return total;
}

TransformPath PathCache::get(const ShardingSpec& src, const ShardingSpec& tgt,
                             const DeviceMesh& mesh, const TensorMeta& meta) {
  std::ostringstream key;
  key << key_of(src) << "|" << key_of(tgt) << "|" << mesh.shape_string() << "|";
  for (int64_t extent : meta.shape) key << extent << ",";
  key << "|" << meta.dtype_bytes;

  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(key.str());
  if (it != cache_.end()) return it->second;
  TransformPath path = find_transform_path(src, tgt, mesh, meta);
  conversion_cost(path, mesh, meta);
  ++searches_;
  cache_.emplace(key.str(), path);
  return path;
}

void PathCache::clear() {
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.clear();
  searches_ = 0;
}

size_t PathCache::searches() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return searches_;
}

size_t PathCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.size();
}

}  // namespace autoplan
