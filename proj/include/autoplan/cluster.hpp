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
#ifndef AUTOPLAN_CLUSTER_HPP_
#define AUTOPLAN_CLUSTER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autoplan/errors.hpp"

namespace autoplan {

struct Link {
  std::string a;
  std::string b;
  double latency_s = 0;
  double bandwidth_Bps = 0;
};

// Declared cluster description. Links are symmetric; a missing direction is
// looked up under the reversed pair.
struct Topology {
  std::vector<std::string> devices;
  double device_flops_per_s = 0;
  std::vector<Link> links;
};

Topology parse_topology(const nlohmann::json& doc);
Topology parse_topology_text(const std::string& text);

enum class CollectiveKind {
  kAllGather,
  kAllReduce,
  kReduceScatter,
  kAllToAll,
  kShardSlice,  // intra-device, no network time
};

const char* to_string(CollectiveKind kind);

// N-dimensional logical mesh. assignment is row-major coordinate -> device;
// every line along an axis shares that axis's latency/bandwidth (verified at
// construction within a 10% tolerance; violations land in `warnings`).
struct DeviceMesh {
  std::vector<int64_t> shape;
  std::vector<std::string> assignment;
  std::vector<double> axis_alpha;     // latency seconds per axis
  std::vector<double> axis_beta_inv;  // seconds per byte per axis
  double device_flops_per_s = 0;
  std::vector<std::string> warnings;

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t num_devices() const;
  int64_t axis_extent(int axis) const;  // throws AxisError
  std::string shape_string() const;     // "4x2"

  static DeviceMesh uniform(const std::vector<int64_t>& shape,
                            double alpha = 1e-5, double beta_inv = 1e-9,
                            double device_flops_per_s = 1e12);
};

std::vector<int64_t> parse_mesh_shape(const std::string& text);  // "2x4"

// Greedy bandwidth-first grouping: the innermost axis packs the
// best-connected devices, then grouping recurses outward over the groups.
// Axis alpha/beta come from the worst link used on that axis.
DeviceMesh build_mesh(const Topology& topology,
                      const std::vector<int64_t>& target_shape);

// Ring-model collective pricing over the product of the given axes' extents;
// alpha/beta taken from the slowest involved axis. `bytes` is the caller's
// per-participant payload.
double collective_cost(const DeviceMesh& mesh, const std::vector<int>& axes,
                       CollectiveKind kind, double bytes);

std::string mesh_report(const DeviceMesh& mesh);

// Mesh round-trip helpers; solution documents embed the mesh so downstream
// stages rebuild identical tables without re-deriving it from the topology.
nlohmann::json mesh_to_json(const DeviceMesh& mesh);
DeviceMesh mesh_from_json(const nlohmann::json& doc);

}  // namespace autoplan

#endif  // AUTOPLAN_CLUSTER_HPP_
