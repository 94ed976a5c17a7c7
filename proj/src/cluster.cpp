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
#include "autoplan/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace autoplan {

namespace {

using nlohmann::json;

constexpr double kAxisUniformityTolerance = 0.10;

struct LinkStats {
  double latency_s = 0;
  double bandwidth_Bps = 0;
};

// Symmetric link table keyed by member index pairs.
class LinkTable {
 public:
  LinkTable(const Topology& topo,
            const std::unordered_map<std::string, int>& device_index) {
    for (const Link& link : topo.links) {
      auto a = device_index.find(link.a);
      auto b = device_index.find(link.b);
      if (a == device_index.end() || b == device_index.end()) {
        throw SchemaError("link references unknown device '" +
                          (a == device_index.end() ? link.a : link.b) + "'");
      }
      if (link.bandwidth_Bps <= 0) {
        throw SchemaError("link " + link.a + "-" + link.b +
                          " must have positive bandwidth");
      }
      if (link.latency_s < 0) {
        throw SchemaError("link " + link.a + "-" + link.b +
                          " must have non-negative latency");
      }
      table_[key(a->second, b->second)] = {link.latency_s, link.bandwidth_Bps};
    }
  }

  const LinkStats* find(int a, int b) const {
    auto it = table_.find(key(a, b));
    return it == table_.end() ? nullptr : &it->second;
  }

 private:
  static int64_t key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<int64_t>(a) << 32) | static_cast<uint32_t>(b);
  }
  std::unordered_map<int64_t, LinkStats> table_;
};

struct UnionFind {
  std::vector<int> parent, size;
  explicit UnionFind(int n) : parent(n), size(n, 1) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool merge(int a, int b, int max_size) {
    a = find(a);
    b = find(b);
    if (a == b || size[a] + size[b] > max_size) return false;
    if (size[a] < size[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
    return true;
  }
};

// A group of physical devices treated as one unit while grouping recurses
// outward. `members` is ordered by the already-fixed inner coordinates.
struct SuperDevice {
  std::vector<int> members;
};

LinkStats aggregate_link(const LinkTable& links, const SuperDevice& a,
                         const SuperDevice& b, bool* connected) {
  // Routing between groups uses the best available member pair.
  LinkStats best{0, 0};
  *connected = false;
  for (int x : a.members) {
    for (int y : b.members) {
      const LinkStats* s = links.find(x, y);
      if (s == nullptr) continue;
      if (!*connected || s->bandwidth_Bps > best.bandwidth_Bps) best = *s;
      *connected = true;
    }
  }
  return best;
}

}  // namespace

const char* to_string(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::kAllGather: return "all-gather";
    case CollectiveKind::kAllReduce: return "all-reduce";
    case CollectiveKind::kReduceScatter: return "reduce-scatter";
    case CollectiveKind::kAllToAll: return "all-to-all";
    case CollectiveKind::kShardSlice: return "shard-slice";
  }
  return "?";
}

Topology parse_topology(const json& doc) {
  if (!doc.is_object()) throw SchemaError("topology document must be an object");
  Topology topo;
  for (const auto& [key, value] : doc.items()) {
    if (key == "version") {
      if (value != 1) throw SchemaError("topology document must be version 1");
    } else if (key == "devices") {
      for (const auto& d : value) topo.devices.push_back(d.get<std::string>());
    } else if (key == "device_flops_per_s") {
      topo.device_flops_per_s = value.get<double>();
    } else if (key == "links") {
      for (const auto& lj : value) {
        Link link;
        for (const auto& [lk, lv] : lj.items()) {
          if (lk == "a") link.a = lv.get<std::string>();
          else if (lk == "b") link.b = lv.get<std::string>();
          else if (lk == "latency_s") link.latency_s = lv.get<double>();
          else if (lk == "bandwidth_Bps") link.bandwidth_Bps = lv.get<double>();
          else throw SchemaError("unknown link field '" + lk + "'");
        }
        topo.links.push_back(link);
      }
    } else {
      throw SchemaError("unknown topology field '" + key + "'");
    }
  }
  if (topo.devices.empty()) throw SchemaError("topology declares no devices");
  if (topo.device_flops_per_s <= 0) {
    throw SchemaError("topology must declare a positive device_flops_per_s");
  }
  return topo;
}

Topology parse_topology_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("topology document is not valid JSON: ") + e.what());
  }
  return parse_topology(doc);
}

int64_t DeviceMesh::num_devices() const {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

int64_t DeviceMesh::axis_extent(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw AxisError("mesh axis " + std::to_string(axis) + " out of range for rank " +
                    std::to_string(rank()));
  }
  return shape[axis];
}

std::string DeviceMesh::shape_string() const {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

DeviceMesh DeviceMesh::uniform(const std::vector<int64_t>& shape, double alpha,
                               double beta_inv, double device_flops_per_s) {
  DeviceMesh mesh;
  mesh.shape = shape;
  mesh.axis_alpha.assign(shape.size(), alpha);
  mesh.axis_beta_inv.assign(shape.size(), beta_inv);
  mesh.device_flops_per_s = device_flops_per_s;
  const int64_t n = mesh.num_devices();
  for (int64_t i = 0; i < n; ++i) mesh.assignment.push_back("d" + std::to_string(i));
  return mesh;
}

std::vector<int64_t> parse_mesh_shape(const std::string& text) {
  // A trailing delimiter would silently drop the final extent below, so
  // reject it up front.
  if (!text.empty() && text.back() == 'x') {
    throw SchemaError("bad mesh shape '" + text + "' (expected e.g. 2x4)");
  }
  std::vector<int64_t> shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      const int64_t e = std::stoll(part);
      if (e < 1) throw std::invalid_argument("extent");
      shape.push_back(e);
    } catch (const std::exception&) {
      throw SchemaError("bad mesh shape '" + text + "' (expected e.g. 2x4)");
    }
  }
  if (shape.empty()) throw SchemaError("empty mesh shape");
  return shape;
}

DeviceMesh build_mesh(const Topology& topology,
                      const std::vector<int64_t>& target_shape) {
  const int64_t device_count = static_cast<int64_t>(topology.devices.size());
  int64_t product = 1;
  for (int64_t e : target_shape) {
    if (e < 1) throw ShapeError("mesh extents must be >= 1");
    product *= e;
  }
  if (product != device_count) {
    throw ShapeError("mesh shape product " + std::to_string(product) +
                     " does not match device count " + std::to_string(device_count));
  }

  std::unordered_map<std::string, int> device_index;
  for (int i = 0; i < device_count; ++i) {
    if (!device_index.emplace(topology.devices[i], i).second) {
      throw SchemaError("duplicate device id '" + topology.devices[i] + "'");
    }
  }

  DeviceMesh mesh;
  mesh.shape = target_shape;
  mesh.axis_alpha.assign(target_shape.size(), 0.0);
  mesh.axis_beta_inv.assign(target_shape.size(), 0.0);
  mesh.device_flops_per_s = topology.device_flops_per_s;

  if (device_count == 1) {
    mesh.assignment.push_back(topology.devices[0]);
    return mesh;
  }

  LinkTable links(topology, device_index);

  // Start with one super-device per physical device and fold one axis at a
  // time from innermost to outermost. Each fold packs current units into
  // groups of the axis extent, preferring the highest-bandwidth links.
  std::vector<SuperDevice> units(device_count);
  for (int i = 0; i < device_count; ++i) units[i].members = {i};

  for (int axis = static_cast<int>(target_shape.size()) - 1; axis >= 0; --axis) {
    const int extent = static_cast<int>(target_shape[axis]);
    const int unit_count = static_cast<int>(units.size());
    if (extent == 1) {
      mesh.axis_alpha[axis] = 0;
      mesh.axis_beta_inv[axis] = 0;
      continue;
    }

    struct Candidate {
      double bandwidth;
      double latency;
      int a, b;
    };
    std::vector<Candidate> candidates;
    for (int a = 0; a < unit_count; ++a) {
      for (int b = a + 1; b < unit_count; ++b) {
        bool connected = false;
        LinkStats s = aggregate_link(links, units[a], units[b], &connected);
        if (connected) candidates.push_back({s.bandwidth_Bps, s.latency_s, a, b});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& x, const Candidate& y) {
                       if (x.bandwidth != y.bandwidth) return x.bandwidth > y.bandwidth;
                       if (x.latency != y.latency) return x.latency < y.latency;
                       return std::tie(x.a, x.b) < std::tie(y.a, y.b);
                     });

    UnionFind uf(unit_count);
    for (const Candidate& c : candidates) uf.merge(c.a, c.b, extent);
    // Pad undersized components deterministically; heterogeneous topologies
    // may leave leftovers that no fast link can absorb.
    for (int i = 0; i < unit_count; ++i) {
      const int root = uf.find(i);
      if (uf.size[root] == extent) continue;
      for (int j = 0; j < unit_count && uf.size[uf.find(i)] < extent; ++j) {
        if (uf.find(j) != uf.find(i)) uf.merge(uf.find(i), uf.find(j), extent);
      }
    }

    std::map<int, std::vector<int>> groups;  // root -> unit indices, ordered
    for (int i = 0; i < unit_count; ++i) groups[uf.find(i)].push_back(i);
    if (static_cast<int>(groups.size()) * extent != unit_count) {
      throw ShapeError("unable to group " + std::to_string(unit_count) +
                       " units into groups of " + std::to_string(extent));
    }

    // Axis characteristics: worst link over every intra-group unit pair.
    double worst_alpha = 0;
    double worst_bw = 0;
    double best_bw = 0;
    bool have_link = false;
    for (const auto& [root, members] : groups) {
      (void)root;
      for (size_t x = 0; x < members.size(); ++x) {
        for (size_t y = x + 1; y < members.size(); ++y) {
          bool connected = false;
          LinkStats s =
              aggregate_link(links, units[members[x]], units[members[y]], &connected);
          if (!connected) {
            mesh.warnings.push_back("axis " + std::to_string(axis) +
                                    ": grouped devices share no declared link");
            continue;
          }
          worst_alpha = std::max(worst_alpha, s.latency_s);
          worst_bw = have_link ? std::min(worst_bw, s.bandwidth_Bps) : s.bandwidth_Bps;
          best_bw = std::max(best_bw, s.bandwidth_Bps);
          have_link = true;
        }
      }
    }
    if (have_link) {
      mesh.axis_alpha[axis] = worst_alpha;
      mesh.axis_beta_inv[axis] = 1.0 / worst_bw;
      if (best_bw > 0 && (best_bw - worst_bw) / best_bw > kAxisUniformityTolerance) {
        mesh.warnings.push_back(
            "axis " + std::to_string(axis) + " is heterogeneous: bandwidth spread " +
            std::to_string(worst_bw) + " .. " + std::to_string(best_bw) +
            " exceeds 10% tolerance");
      }
    }

    std::vector<SuperDevice> folded;
    folded.reserve(groups.size());
    for (const auto& [root, members] : groups) {
      (void)root;
      SuperDevice merged;
      for (int m : members) {
        merged.members.insert(merged.members.end(), units[m].members.begin(),
                              units[m].members.end());
      }
      folded.push_back(std::move(merged));
    }
    units = std::move(folded);
  }

  // After folding every axis exactly one unit remains, holding the row-major
  // device order.
  mesh.assignment.reserve(device_count);
  for (int idx : units.front().members) {
    mesh.assignment.push_back(topology.devices[idx]);
  }
  return mesh;
}

double collective_cost(const DeviceMesh& mesh, const std::vector<int>& axes,
                       CollectiveKind kind, double bytes) {
  if (bytes < 0) throw PlanError("collective bytes must be >= 0");
  double participants = 1;
  double alpha = 0;
  double beta_inv = 0;
  for (int axis : axes) {
    participants *= static_cast<double>(mesh.axis_extent(axis));
    alpha = std::max(alpha, mesh.axis_alpha[axis]);
    beta_inv = std::max(beta_inv, mesh.axis_beta_inv[axis]);
  }
  if (participants <= 1 || kind == CollectiveKind::kShardSlice) return 0.0;
  const double p = participants;
  const double steps = p - 1.0;
  const double volume = (p - 1.0) / p * bytes * beta_inv;
  switch (kind) {
    case CollectiveKind::kAllGather:
    case CollectiveKind::kReduceScatter:
    case CollectiveKind::kAllToAll:
      return steps * alpha + volume;
    case CollectiveKind::kAllReduce:
      return 2.0 * steps * alpha + 2.0 * volume;
    case CollectiveKind::kShardSlice:
      return 0.0;
  }
  return 0.0;
}

std::string mesh_report(const DeviceMesh& mesh) {
  std::ostringstream os;
  os << "mesh shape: " << mesh.shape_string() << "\n";
  for (int axis = 0; axis < mesh.rank(); ++axis) {
    os << "axis " << axis << ": extent " << mesh.shape[axis] << ", alpha "
       << mesh.axis_alpha[axis] << " s, beta_inv " << mesh.axis_beta_inv[axis]
       << " s/B\n";
  }
  os << "assignment (row-major):";
  for (const std::string& d : mesh.assignment) os << " " << d;
  os << "\n";
  for (const std::string& w : mesh.warnings) os << "warning: " << w << "\n";
  return os.str();
}

nlohmann::json mesh_to_json(const DeviceMesh& mesh) {
  nlohmann::json doc;
  doc["shape"] = mesh.shape;
  doc["assignment"] = mesh.assignment;
  doc["axis_alpha"] = mesh.axis_alpha;
  doc["axis_beta_inv"] = mesh.axis_beta_inv;
  doc["device_flops_per_s"] = mesh.device_flops_per_s;
  return doc;
}

DeviceMesh mesh_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("mesh document must be an object");
  DeviceMesh mesh;
  try {
    mesh.shape = doc.at("shape").get<std::vector<int64_t>>();
    mesh.assignment = doc.at("assignment").get<std::vector<std::string>>();
    mesh.axis_alpha = doc.at("axis_alpha").get<std::vector<double>>();
    mesh.axis_beta_inv = doc.at("axis_beta_inv").get<std::vector<double>>();
    mesh.device_flops_per_s = doc.at("device_flops_per_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed mesh document: ") + e.what());
  }
  int64_t expected = 1;
  for (int64_t extent : mesh.shape) {
    if (extent < 1) throw SchemaError("mesh extents must be positive");
    expected *= extent;
  }
  if (static_cast<int64_t>(mesh.assignment.size()) != expected ||
      mesh.axis_alpha.size() != mesh.shape.size() ||
      mesh.axis_beta_inv.size() != mesh.shape.size()) {
    throw SchemaError("mesh document fields have inconsistent sizes");
  }
  return mesh;
}

}  // namespace autoplan
