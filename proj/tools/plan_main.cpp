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
// Command-line front end:
//   plan profile  --graph g.json
//   plan mesh     --topology t.json --shape 2x4
//   plan convert  --from S0R --to RS0 --mesh 2x4 --shape 1024x1024
//   plan intraop  --graph g.json --topology t.json --mesh 2x4 --budget-bytes N
//   plan ckpt     --graph g.json --intraop-solution s.json --budget-bytes N
//   plan run      --graph g.json --topology t.json --mesh 2x4
//                 --device-budget-bytes N -o plan.json
// Exit codes: 0 success, 2 no feasible plan, 3 input error.

#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "autoplan/ckpt.hpp"
#include "autoplan/cluster.hpp"
#include "autoplan/errors.hpp"
#include "autoplan/graph_ir.hpp"
#include "autoplan/intraop.hpp"
#include "autoplan/layout.hpp"
#include "autoplan/planner.hpp"

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw autoplan::IoError("cannot open '" + path + "'");
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception& e) {
    throw autoplan::SchemaError("invalid JSON in '" + path + "': " + e.what());
  }
}

autoplan::ComputationGraph load_graph(const std::string& path) {
  autoplan::ComputationGraph graph = autoplan::parse_graph(load_json(path));
  autoplan::infer_meta(graph);
  return graph;
}

autoplan::DeviceMesh load_mesh(const std::string& topology_path,
                               const std::string& mesh_shape) {
  autoplan::Topology topology = autoplan::parse_topology(load_json(topology_path));
  return autoplan::build_mesh(topology, autoplan::parse_mesh_shape(mesh_shape));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw autoplan::IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw autoplan::IoError("failed writing '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed execution planner"};
  app.require_subcommand(1);

  // --- profile ------------------------------------------------------------
  std::string profile_graph_path;
  double profile_rate = 0;
  CLI::App* profile = app.add_subcommand("profile", "Per-node analytic profile");
  profile->add_option("--graph", profile_graph_path, "graph document")->required();
  profile->add_option("--rate", profile_rate, "device flops/s for time columns");

  // --- mesh ---------------------------------------------------------------
  std::string mesh_topology_path, mesh_shape_arg;
  CLI::App* mesh_cmd = app.add_subcommand("mesh", "Build and show a device mesh");
  mesh_cmd->add_option("--topology", mesh_topology_path, "topology document")
      ->required();
  mesh_cmd->add_option("--shape", mesh_shape_arg, "mesh shape, e.g. 2x4")
      ->required();

  // --- convert ------------------------------------------------------------
  std::string cv_from, cv_to, cv_mesh, cv_shape, cv_topology;
  int cv_dtype_bytes = 4;
  CLI::App* convert = app.add_subcommand("convert", "Layout conversion path");
  convert->add_option("--from", cv_from, "source spec, e.g. S0R")->required();
  convert->add_option("--to", cv_to, "target spec, e.g. RS0")->required();
  convert->add_option("--mesh", cv_mesh, "mesh shape, e.g. 2x4")->required();
  convert->add_option("--shape", cv_shape, "tensor extents, e.g. 1024x1024")
      ->required();
  convert->add_option("--dtype-bytes", cv_dtype_bytes, "element size (default 4)");
  convert->add_option("--topology", cv_topology,
                      "price with this topology instead of a uniform mesh");

  // --- intraop ------------------------------------------------------------
  std::string io_graph, io_topology, io_mesh, io_out;
  int64_t io_budget = 0;
  CLI::App* intraop = app.add_subcommand("intraop", "Solve operator sharding");
  intraop->add_option("--graph", io_graph, "graph document")->required();
  intraop->add_option("--topology", io_topology, "topology document")->required();
  intraop->add_option("--mesh", io_mesh, "mesh shape, e.g. 2x4")->required();
  intraop->add_option("--budget-bytes", io_budget, "per-device memory budget")
      ->required();
  intraop->add_option("-o,--output", io_out, "write the solution document here");

  // --- ckpt ---------------------------------------------------------------
  std::string ck_graph, ck_solution;
  int64_t ck_budget = 0, ck_slot = 0;
  bool ck_prefix_comm = false;
  std::vector<std::string> ck_seeds;
  CLI::App* ckpt = app.add_subcommand("ckpt", "Solve the checkpoint schedule");
  ckpt->add_option("--graph", ck_graph, "graph document")->required();
  ckpt->add_option("--intraop-solution", ck_solution, "solution document")
      ->required();
  ckpt->add_option("--budget-bytes", ck_budget, "schedule memory budget")
      ->required();
  ckpt->add_option("--slot-bytes", ck_slot, "memory quantum (default budget/500)");
  ckpt->add_flag("--prefix-comm", ck_prefix_comm,
                 "charge recomputed prefixes their collective time too");
  ckpt->add_option("--seed", ck_seeds, "extra common-node seed (repeatable)");

  // --- run ----------------------------------------------------------------
  std::string run_graph, run_topology, run_mesh, run_out;
  int64_t run_budget = 0, run_base = 0, run_slot = 0;
  double run_alpha = 0.3;
  int run_n_max = 9;
  bool run_verbose = false, run_share = false, run_prefix_comm = false;
  std::vector<std::string> run_seeds;
  CLI::App* run = app.add_subcommand("run", "Full planning pipeline");
  run->add_option("--graph", run_graph, "graph document")->required();
  run->add_option("--topology", run_topology, "topology document")->required();
  run->add_option("--mesh", run_mesh, "mesh shape, e.g. 2x4")->required();
  run->add_option("--device-budget-bytes", run_budget, "per-device memory")
      ->required();
  run->add_option("--alpha", run_alpha, "sweep expansion coefficient");
  run->add_option("--n-max", run_n_max, "largest sweep exponent");
  run->add_option("--base-budget-bytes", run_base,
                  "sweep base budget (default: minimal feasible)");
  run->add_option("--slot-bytes", run_slot, "schedule memory quantum");
  run->add_flag("--verbose", run_verbose, "retain every sweep candidate");
  run->add_flag("--share-budget", run_share,
                "give the schedule solver B_n instead of the device budget");
  run->add_flag("--prefix-comm", run_prefix_comm,
                "charge recomputed prefixes their collective time too");
  run->add_option("--seed", run_seeds, "extra common-node seed (repeatable)");
  run->add_option("-o,--output", run_out, "write the plan document here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 3;  // bad flags are input errors
  }

  try {
    if (*profile) {
      autoplan::ComputationGraph graph = load_graph(profile_graph_path);
      autoplan::GraphProfile prof = autoplan::profile_graph(graph, profile_rate);
      std::cout << autoplan::profile_report(graph, prof);
    } else if (*mesh_cmd) {
      autoplan::DeviceMesh mesh = load_mesh(mesh_topology_path, mesh_shape_arg);
      std::cout << autoplan::mesh_report(mesh);
    } else if (*convert) {
      autoplan::DeviceMesh mesh =
          cv_topology.empty()
              ? autoplan::DeviceMesh::uniform(autoplan::parse_mesh_shape(cv_mesh))
              : load_mesh(cv_topology, cv_mesh);
      autoplan::TensorMeta meta;
      meta.shape = autoplan::parse_mesh_shape(cv_shape);
      meta.dtype_bytes = cv_dtype_bytes;
      autoplan::ShardingSpec src = autoplan::ShardingSpec::parse(cv_from, mesh.rank());
      autoplan::ShardingSpec tgt = autoplan::ShardingSpec::parse(cv_to, mesh.rank());
      autoplan::TransformPath path =
          autoplan::find_transform_path(src, tgt, mesh, meta);
      double cost = autoplan::conversion_cost(path, mesh, meta);
      std::cout << src.to_string() << " -> " << tgt.to_string() << ": "
                << path.steps.size() << " step(s), " << cost << " s\n";
      autoplan::ShardingSpec cur = src;
      for (const autoplan::TransformStep& step : path.steps) {
        std::cout << "  " << autoplan::to_string(step.kind) << " dim "
                  << step.tensor_dim;
        if (step.target_dim >= 0) std::cout << " -> dim " << step.target_dim;
        std::cout << " axis " << step.mesh_axis << ": " << cur.to_string()
                  << " -> " << step.result.to_string() << '\n';
        cur = step.result;
      }
    } else if (*intraop) {
      autoplan::ComputationGraph graph = load_graph(io_graph);
      autoplan::DeviceMesh mesh = load_mesh(io_topology, io_mesh);
      autoplan::MergedGraph merged = autoplan::simplify_graph(graph);
      autoplan::PathCache cache;
      autoplan::StrategyTable table =
          autoplan::build_strategy_table(merged, mesh, cache);
      autoplan::IntraOpSolution solution = autoplan::solve(table, io_budget);
      std::cout << autoplan::intraop_report(merged, table, solution);
      if (!io_out.empty()) {
        write_text(io_out,
                   autoplan::intraop_solution_to_json(merged, table, solution, mesh)
                           .dump(2) +
                       "\n");
      }
    } else if (*ckpt) {
      autoplan::ComputationGraph graph = load_graph(ck_graph);
      autoplan::ParsedIntraOpSolution parsed =
          autoplan::parse_intraop_solution(load_json(ck_solution));
      autoplan::MergedGraph merged = autoplan::simplify_graph(graph);
      autoplan::PathCache cache;
      autoplan::StrategyTable table =
          autoplan::build_strategy_table(merged, parsed.mesh, cache);
      autoplan::IntraOpSolution solution = autoplan::rebind_solution(parsed, table);
      std::set<std::string> seeds(ck_seeds.begin(), ck_seeds.end());
      std::set<std::string> common = autoplan::propagate_common_nodes(graph, seeds);
      std::vector<autoplan::NodeGroup> groups = autoplan::linearize(graph, common);
      std::vector<autoplan::StageCost> costs = autoplan::stage_costs(
          groups, common, merged, table, solution, parsed.mesh, cache);
      autoplan::RotorOptions options;
      options.slot_bytes = ck_slot;
      options.include_prefix_comm = ck_prefix_comm;
      autoplan::CheckpointSchedule schedule =
          autoplan::rotor_solve(costs, ck_budget, options);
      std::cout << autoplan::schedule_report(groups, costs, schedule);
    } else if (*run) {
      autoplan::ComputationGraph graph = load_graph(run_graph);
      autoplan::DeviceMesh mesh = load_mesh(run_topology, run_mesh);
      autoplan::SweepConfig config;
      config.alpha = run_alpha;
      config.n_max = run_n_max;
      config.base_budget_bytes = run_base;
      config.share_budget_with_ckpt = run_share;
      config.verbose = run_verbose;
      config.rotor.slot_bytes = run_slot;
      config.rotor.include_prefix_comm = run_prefix_comm;
      config.common_seeds.insert(run_seeds.begin(), run_seeds.end());
      autoplan::ExecutionPlan plan =
          autoplan::sweep(graph, mesh, run_budget, config);
      std::cout << autoplan::plan_report(plan);
      if (!run_out.empty()) autoplan::write_plan(plan, run_out);
    }
    return 0;
  } catch (const autoplan::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 2;
  } catch (const autoplan::PlanError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
