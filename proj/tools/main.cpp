// Command-line front end: placement repair, rebalance planning, and the
// cluster simulator, with machine-readable reports.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "olapsim/cluster.hpp"
#include "olapsim/placement.hpp"
#include "olapsim/rebalance.hpp"
#include "olapsim/report.hpp"
#include "olapsim/scenario.hpp"
#include "olapsim/sim.hpp"

namespace {

using namespace olapsim;
namespace fs = std::filesystem;

int fail_parse(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "parse error: " << e << '\n';
  return kParseError;
}

ReportFormat parse_format(const std::string& name) {
  return name == "jsonl" ? ReportFormat::kJsonl : ReportFormat::kCsv;
}

std::string table_extension(ReportFormat format) {
  return format == ReportFormat::kCsv ? ".csv" : ".jsonl";
}

int run_place(const std::string& topology_path, const std::string& out_dir,
              ReportFormat /*format*/) {
  auto parsed = parse_topology_file(topology_path);
  if (!parsed.ok()) return fail_parse(parsed.errors);
  const TopologySpec& topo = *parsed.value;

  AssignmentMatrix before;
  RepairResult result;
  if (topo.assignment) {
    std::map<std::string, Instance> by_id;
    for (const auto& inst : topo.instances) by_id[inst.id] = inst;
    std::set<std::string> mzs;
    for (const auto& inst : topo.instances) mzs.insert(inst.mz);
    std::vector<Instance> cells;
    int cols = -1;
    for (const auto& row : *topo.assignment) {
      if (cols < 0) cols = static_cast<int>(row.size());
      if (static_cast<int>(row.size()) != cols) {
        std::cerr << "parse error: $.assignment: ragged rows\n";
        return kParseError;
      }
      for (const auto& id : row) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
          std::cerr << "parse error: $.assignment references unknown instance "
                    << id << '\n';
          return kParseError;
        }
        cells.push_back(it->second);
      }
    }
    try {
      before = AssignmentMatrix(cols, static_cast<int>(topo.assignment->size()),
                                static_cast<int>(mzs.size()), std::move(cells));
    } catch (const std::exception& e) {
      std::cerr << "parse error: " << e.what() << '\n';
      return kParseError;
    }
    result = repair(before);
  } else {
    try {
      before = build_matrix(topo.replica_groups, topo.instances_per_rg,
                            topo.instances);
    } catch (const std::exception& e) {
      std::cerr << "parse error: " << e.what() << '\n';
      return kParseError;
    }
    result = repair(before);
  }

  fs::create_directories(out_dir);
  nlohmann::json report = repair_report(result, before);
  write_text_file((fs::path(out_dir) / "placement.json").string(),
                  report.dump(2) + "\n");
  std::cout << "rows=" << result.matrix.mirrored_sets()
            << " swaps=" << result.swaps.size()
            << " best_effort=" << (result.best_effort ? "true" : "false") << '\n';
  return kOk;
}

int run_rebalance(const std::string& plan_path, const std::string& out_dir,
                  ReportFormat /*format*/) {
  auto parsed = parse_rebalance_plan_file(plan_path);
  if (!parsed.ok()) return fail_parse(parsed.errors);
  const RebalancePlanFile& plan = *parsed.value;

  int min_serving = plan.min_serving;
  if (min_serving < 0) {
    // Default to R - 1 with R taken from the target replica count.
    int replicas = 0;
    std::map<std::string, int> per_segment;
    for (const auto& [_, segs] : plan.desired) {
      for (const auto& s : segs) replicas = std::max(replicas, ++per_segment[s]);
    }
    min_serving = std::max(0, replicas - 1);
  }
  int batch = plan.progress_batch;
  if (batch <= 0) {
    std::set<std::string> segments;
    for (const auto& [_, segs] : plan.desired) {
      segments.insert(segs.begin(), segs.end());
    }
    batch = std::max<int>(1, static_cast<int>(segments.size() / 20));
  }

  PlannerOptions options;
  options.segment_bytes = plan.segment_bytes;
  RebalanceTrace trace;
  try {
    trace = run_rebalance(plan.initial, plan.desired, min_serving, batch, options);
  } catch (const std::exception& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kParseError;
  }

  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "trace.jsonl").string(),
                  trace_to_jsonl(trace));
  nlohmann::json summary;
  summary["steps"] = trace.steps.size();
  summary["min_serving_over_trace"] = trace.min_serving_over_trace();
  summary["min_serving_threshold"] = min_serving;
  summary["stalled"] = trace.stalled;
  if (!trace.diagnostic.empty()) summary["diagnostic"] = trace.diagnostic;
  nlohmann::json audit = nlohmann::json::array();
  for (const auto& step : trace.steps) {
    int min_count = step.serving.empty() ? -1 : INT32_MAX;
    for (const auto& [_, n] : step.serving) min_count = std::min(min_count, n);
    audit.push_back({{"step", step.step},
                     {"action", step.action == TraceStep::Action::kRebalancing
                                    ? "rebalancing"
                                    : "progress"},
                     {"min_serving", min_count}});
  }
  summary["audit"] = std::move(audit);
  write_text_file((fs::path(out_dir) / "rebalance_summary.json").string(),
                  summary.dump(2) + "\n");
  std::cout << "steps=" << trace.steps.size()
            << " min_serving=" << trace.min_serving_over_trace()
            << " stalled=" << (trace.stalled ? "true" : "false") << '\n';
  if (trace.stalled) return kInvariantViolation;
  if (!trace.steps.empty() && trace.min_serving_over_trace() < min_serving) {
    return kInvariantViolation;
  }
  return kOk;
}

int run_simulate(const std::string& scenario_path, const std::string& workloads_path,
                 const std::string& out_dir, ReportFormat format,
                 std::optional<uint64_t> seed, bool require_budgets) {
  auto parsed = parse_scenario_file(scenario_path);
  if (!parsed.ok()) return fail_parse(parsed.errors);
  Scenario scenario = *parsed.value;
  if (seed) scenario.seed = *seed;
  if (!workloads_path.empty()) {
    auto workloads = parse_workloads_file(workloads_path);
    if (!workloads.ok()) return fail_parse(workloads.errors);
    for (const auto& config : *workloads.value) {
      auto it = std::find_if(scenario.budget_configs.begin(),
                             scenario.budget_configs.end(),
                             [&](const WorkloadConfig& c) {
                               return c.workload_name == config.workload_name;
                             });
      if (it != scenario.budget_configs.end()) {
        *it = config;
      } else {
        scenario.budget_configs.push_back(config);
      }
    }
  }
  if (require_budgets && scenario.budget_configs.empty()) {
    std::cerr << "parse error: $.budgets.workloads: qwi-report needs at least "
                 "one workload budget\n";
    return kParseError;
  }

  MetricsSeries series;
  try {
    series = run(scenario);
  } catch (const std::exception& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kParseError;
  }

  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / ("series" + table_extension(format))).string(),
                  series_to_table(series, format));
  nlohmann::json summary = summarize(series);
  summary["scenario"] = scenario_to_json(scenario);
  write_text_file((fs::path(out_dir) / "summary.json").string(),
                  summary.dump(2) + "\n");
  if (series.rebalance_trace) {
    write_text_file((fs::path(out_dir) / "rebalance_trace.jsonl").string(),
                    trace_to_jsonl(*series.rebalance_trace));
  }

  if (require_budgets) {
    std::ostringstream enforcement;
    enforcement << "window_start_ms,workload,injected,rejected,cancelled,killed,"
                   "completed,charged_cpu_ns,true_cpu_ns,charged_mem_bytes,"
                   "true_mem_bytes\n";
    for (int w = 0; w < series.windows(); ++w) {
      for (const auto& [label, windows] : series.workload_windows) {
        const WorkloadWindow& ww = windows[w];
        enforcement << w * series.window_ms << ',' << label << ',' << ww.injected
                    << ',' << ww.rejected << ',' << ww.cancelled << ',' << ww.killed
                    << ',' << ww.completed << ',' << ww.charged_cpu_ns << ','
                    << ww.true_cpu_ns << ',' << ww.charged_mem_bytes << ','
                    << ww.true_mem_bytes << '\n';
      }
    }
    write_text_file((fs::path(out_dir) / "enforcement.csv").string(),
                    enforcement.str());
  }

  std::cout << "queries=" << series.queries.size()
            << " windows=" << series.windows() << '\n';
  bool violated = series.conservation_violations > 0 ||
                  series.routed_to_drained_host ||
                  (series.rebalance_trace && series.rebalance_trace->stalled);
  return violated ? kInvariantViolation : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster resilience toolkit: MZ-aware placement, impact-free "
               "rebalancing, adaptive server selection, and workload budgets"};
  app.require_subcommand(1);

  std::string topology_path, scenario_path, workloads_path, plan_path;
  std::string out_dir = "out";
  std::string format_name = "csv";
  std::optional<uint64_t> seed;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_option("--format", format_name, "Report format: csv or jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}));
  };

  CLI::App* place = app.add_subcommand(
      "place", "Build or repair an MZ-aware assignment matrix");
  place->add_option("--topology", topology_path, "Topology file")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(place);

  CLI::App* rebalance = app.add_subcommand(
      "rebalance", "Plan an impact-free rebalance between two assignments");
  rebalance->add_option("--plan", plan_path, "Rebalance plan file")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(rebalance);

  CLI::App* simulate =
      app.add_subcommand("simulate", "Run a cluster simulation scenario");
  simulate->add_option("--scenario", scenario_path, "Scenario file")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--workloads", workloads_path, "Workload budget file")
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "Master seed override");
  add_common(simulate);

  CLI::App* qwi = app.add_subcommand(
      "qwi-report", "Run a simulation and emit the budget enforcement report");
  qwi->add_option("--scenario", scenario_path, "Scenario file")
      ->required()
      ->check(CLI::ExistingFile);
  qwi->add_option("--workloads", workloads_path, "Workload budget file")
      ->check(CLI::ExistingFile);
  qwi->add_option("--seed", seed, "Master seed override");
  add_common(qwi);

  CLI11_PARSE(app, argc, argv);

  try {
    ReportFormat format = parse_format(format_name);
    if (place->parsed()) return run_place(topology_path, out_dir, format);
    if (rebalance->parsed()) return run_rebalance(plan_path, out_dir, format);
    if (simulate->parsed()) {
      return run_simulate(scenario_path, workloads_path, out_dir, format, seed,
                          false);
    }
    if (qwi->parsed()) {
      return run_simulate(scenario_path, workloads_path, out_dir, format, seed,
                          true);
    }
  } catch (const std::runtime_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvariantViolation;
  }
  return kOk;
}
