#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "olapsim/cluster.hpp"
#include "olapsim/rebalance.hpp"
#include "olapsim/sim.hpp"

namespace olapsim {

// Parsing is strict: unknown keys are rejected and every diagnostic names
// the offending field path, so a typo cannot silently fall back to a
// default and corrupt an experiment.
template <typename T>
struct Parsed {
  std::optional<T> value;
  std::vector<std::string> errors;

  bool ok() const { return value.has_value() && errors.empty(); }
};

Parsed<Scenario> parse_scenario_text(const std::string& text);
Parsed<Scenario> parse_scenario_file(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& scenario);

// Cluster topology file: the instance pool with MZ labels, matrix shape,
// optional segments (sizes feed the rebalance planner), and an optional
// existing assignment to repair in place.
struct TopologySpec {
  int replica_groups = 1;
  int instances_per_rg = 1;
  std::vector<Instance> instances;
  SegmentMap segments;
  std::map<std::string, int64_t> segment_bytes;
  std::optional<std::vector<std::vector<std::string>>> assignment;  // rows of ids
};

Parsed<TopologySpec> parse_topology_text(const std::string& text);
Parsed<TopologySpec> parse_topology_file(const std::string& path);

// Standalone rebalance plan: initial and desired host assignments.
struct RebalancePlanFile {
  HostAssignment initial;
  HostAssignment desired;
  int min_serving = -1;  // -1: derived from the replica count
  int progress_batch = 0;
  std::map<std::string, int64_t> segment_bytes;
};

Parsed<RebalancePlanFile> parse_rebalance_plan_text(const std::string& text);
Parsed<RebalancePlanFile> parse_rebalance_plan_file(const std::string& path);

// Workload budget configuration, field-for-field the external schema:
// workloadName, nodeConfigs[].nodeType, enforcementProfile.cpuCostNs,
// enforcementProfile.memoryCostBytes, propagationScheme.type/tables.
Parsed<std::vector<WorkloadConfig>> parse_workloads_text(const std::string& text);
Parsed<std::vector<WorkloadConfig>> parse_workloads_file(const std::string& path);
nlohmann::json workload_config_to_json(const WorkloadConfig& config);

}  // namespace olapsim
