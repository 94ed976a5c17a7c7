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
#ifndef AUTOPLAN_LAYOUT_HPP_
#define AUTOPLAN_LAYOUT_HPP_

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "autoplan/cluster.hpp"
#include "autoplan/graph_ir.hpp"

namespace autoplan {

// Layout of one tensor dimension: replicated, or sharded over an ordered
// list of distinct mesh axes ("S01" shards over axis 0 then axis 1).
struct DimSpec {
  std::vector<int> axes;

  bool replicated() const { return axes.empty(); }
  std::string to_string() const;

  bool operator==(const DimSpec&) const = default;
};

// Per-dimension layout of a tensor on a device mesh. A mesh axis may appear
// at most once across all dimensions.
struct ShardingSpec {
  std::vector<DimSpec> dims;
  int mesh_rank = 0;

  static ShardingSpec replicated(int tensor_rank, int mesh_rank);
  // Text form, e.g. "S0R", "S01S2", "RR". Single-digit axes only.
  static ShardingSpec parse(const std::string& text, int mesh_rank);

  int tensor_rank() const { return static_cast<int>(dims.size()); }
  std::string to_string() const;
  std::vector<int> used_axes() const;
  // Number of shards = product of used axis extents.
  int64_t shard_count(const DeviceMesh& mesh) const;
  int64_t per_device_bytes(const TensorMeta& meta, const DeviceMesh& mesh) const;
  // Distinct axes within range, each used once, and every sharded dim's
  // extent divisible by its axes' extent product.
  bool valid_for(const TensorMeta& meta, const DeviceMesh& mesh) const;

  bool operator==(const ShardingSpec&) const = default;
};

// One conversion operation: all-gather drops the last axis of a dim,
// shard-slice adds an unused axis to a dim, all-to-all moves one axis
// between dims.
struct TransformStep {
  CollectiveKind kind = CollectiveKind::kAllGather;
  int tensor_dim = -1;   // dim the axis is removed from / added to
  int target_dim = -1;   // all-to-all destination dim, -1 otherwise
  int mesh_axis = -1;
  ShardingSpec result;
};

struct TransformPath {
  ShardingSpec source;
  ShardingSpec target;
  std::vector<TransformStep> steps;
  double comm_cost_s = 0;
};

// Unitless difference weights. The only hard constraint is
// all_gather > shard (gathers cross devices, shards are on-chip).
struct DimDiffWeights {
  double all_gather = 2;
  double shard = 1;
  double all_to_all = 2;
  double step_penalty = 2;  // per conversion step beyond the first
};

// All distinct valid specs reachable in exactly one operation. Results
// violating divisibility are excluded.
std::vector<std::pair<ShardingSpec, TransformStep>> one_step_transforms(
    const ShardingSpec& spec, const DeviceMesh& mesh, const TensorMeta& meta);

// Dimension-local difference score: cost of the minimal gather/shard
// sequence converting src into tgt, plus the step penalty.
double dim_diff(const DimSpec& src, const DimSpec& tgt,
                const DimDiffWeights& weights = {});

// Sum of per-dimension differences; zero iff the specs are equal.
double heuristic_diff(const ShardingSpec& src, const ShardingSpec& tgt,
                      const DimDiffWeights& weights = {});

// Greedy best-first search on heuristic_diff over one-step transforms,
// with a closed set so plateaus cannot cycle; falls back to exhausting the
// finite transform graph, which is strongly connected through the fully
// replicated spec.
TransformPath find_transform_path(const ShardingSpec& src, const ShardingSpec& tgt,
                                  const DeviceMesh& mesh, const TensorMeta& meta,
                                  const DimDiffWeights& weights = {});

// Prices a path with the alpha-beta model; each step moves the per-device
// shard bytes it sees before executing. Also refreshes path.comm_cost_s.
double conversion_cost(TransformPath& path, const DeviceMesh& mesh,
                       const TensorMeta& meta);

// Memoizes find_transform_path + conversion_cost. Keyed on source/target
// spec, mesh shape, tensor extents and dtype bytes. Safe for concurrent use.
class PathCache {
 public:
  TransformPath get(const ShardingSpec& src, const ShardingSpec& tgt,
                    const DeviceMesh& mesh, const TensorMeta& meta);
  void clear();
  size_t searches() const;  // number of cache misses so far
  size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, TransformPath> cache_;
  size_t searches_ = 0;
};

}  // namespace autoplan

#endif  // AUTOPLAN_LAYOUT_HPP_
