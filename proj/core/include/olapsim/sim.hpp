#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "olapsim/budget.hpp"
#include "olapsim/rebalance.hpp"
#include "olapsim/selector.hpp"

namespace olapsim {

enum class RoutingMode {
  kMssSelect,           // pick one server per mirrored set via the selector
  kReplicaGroupRandom,  // pick a replica group uniformly, fan out to it
};

struct WorkloadProfile {
  std::string label;
  double qps = 0;
  double base_latency_ms = 0;  // healthy idle service time; sets work_units
  int work_units = 0;          // explicit override; 0 = derive from latency
  int segments_per_query = 1;  // parallel tasks per server sub-query
  int initial_burst = 0;       // queries injected at tick 0
  std::string workload_name;   // budget tag; empty = untagged
  int64_t cpu_ns_per_unit = 1000;
  int64_t mem_bytes_per_unit = 1000;
};

struct DegradationEvent {
  int server = 0;
  double start_ms = 0;
  double end_ms = 0;
  double progress_probability = 1.0;  // p: per-tick thread progress chance
};

struct AccountingConfig {
  double sampling_interval_ms = 1.0;
  double enforcement_interval_ms = 1.0;
  double window_ms = 5000;  // enforcement window W
  int64_t heap_capacity_bytes = 8LL << 30;
  double usage_threshold = 0.85;  // heap fraction tripping aggregation
  int64_t provisional_cpu_ns = 0;
  int64_t provisional_mem_bytes = 0;
  bool strict_workloads = false;
};

struct RebalancePlanSpec {
  HostAssignment initial;
  HostAssignment desired;
  int min_serving = -1;    // -1: replicas - 1
  int progress_batch = 0;  // 0: 5% of segments, at least 1
  double start_ms = 0;
  double drain_timeout_ms = 50;
  double transfer_ms_per_mb = 1.0;
};

struct Scenario {
  double tick_ms = 0.1;
  double duration_ms = 1000;
  int brokers = 1;
  int mss_count = 1;
  int servers_per_mss = 1;     // replica groups (columns)
  int threads_per_server = 1;  // K
  int message_delay_ticks = 1;
  double metrics_window_ms = 100;
  bool poisson_arrivals = false;
  int server_queue_cap = 0;  // 0 = unbounded
  std::string table_name = "table";    // budget propagation target
  std::string tenant = "default";
  RoutingMode routing = RoutingMode::kMssSelect;
  SelectionPolicy policy;
  std::vector<WorkloadProfile> workloads;
  std::vector<DegradationEvent> degradations;
  std::vector<WorkloadConfig> budget_configs;
  AccountingConfig accounting;
  std::optional<RebalancePlanSpec> rebalance;
  uint64_t seed = 0;
  bool check_conservation = false;

  int num_servers() const { return mss_count * servers_per_mss; }
};

enum class QueryOutcome { kCompleted, kRejected, kCancelled, kKilled, kNoServer };

struct QueryRecord {
  int64_t id = 0;
  int workload = 0;
  double arrival_ms = 0;
  double latency_ms = 0;  // meaningful for completed queries only
  QueryOutcome outcome = QueryOutcome::kCompleted;
};

struct AccountingSample {
  int64_t query = 0;
  Metric truth;
  Metric accounted;
};

struct WindowLatency {
  double p50 = 0, p90 = 0, p95 = 0, p99 = 0;
  int64_t count = 0;
};

struct WorkloadWindow {
  int64_t injected = 0;
  int64_t rejected = 0;
  int64_t cancelled = 0;
  int64_t killed = 0;
  int64_t completed = 0;
  int64_t charged_cpu_ns = 0;
  int64_t charged_mem_bytes = 0;
  int64_t true_cpu_ns = 0;    // consumption of admitted work, by execution tick
  int64_t true_mem_bytes = 0;
};

struct RebalanceAnnotation {
  double time_ms = 0;
  std::string action;
  std::vector<std::string> hosts;
  int min_serving = 0;
};

struct MetricsSeries {
  double tick_ms = 0.1;
  double window_ms = 100;
  double duration_ms = 0;
  int num_servers = 0;
  std::vector<std::string> server_names;
  std::vector<std::string> workload_labels;

  // [window][server]
  std::vector<std::vector<int64_t>> dispatched;
  std::vector<std::vector<int64_t>> completed;
  std::vector<WindowLatency> latency;          // per window, across servers
  std::vector<QueryRecord> queries;
  // [label][window]
  std::map<std::string, std::vector<WorkloadWindow>> workload_windows;
  std::vector<AccountingSample> accounting_samples;

  std::vector<DegradationEvent> degradations;
  std::vector<RebalanceAnnotation> rebalance_steps;
  std::optional<RebalanceTrace> rebalance_trace;
  bool routed_to_drained_host = false;
  int64_t conservation_violations = 0;
  std::vector<std::string> warnings;

  int windows() const { return static_cast<int>(dispatched.size()); }
  double mean_abs_accounting_error() const;  // over sampled finished queries
};

struct DiversionReport {
  std::optional<double> diversion_ms;  // nullopt: threshold never crossed
  std::optional<double> recovery_ms;
  double oscillation_index = 0;
};

class Simulation {
 public:
  explicit Simulation(Scenario scenario);
  ~Simulation();
  Simulation(Simulation&&) noexcept;
  Simulation& operator=(Simulation&&) noexcept;

  void tick();
  bool done() const;
  int64_t clock() const;
  MetricsSeries finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs the scenario to completion. Deterministic for a fixed seed; the
// arrival sequence is independent of the selection policy.
MetricsSeries run(const Scenario& scenario);

// Table metrics for a single-degradation run. Diversion: first window after
// degradation start with the degraded server's dispatch share below 20% of
// fair share. Recovery: first window after restoration at or above 80%.
// Oscillation: mean per-window stddev of healthy servers' dispatch shares
// over the degradation period.
DiversionReport measure_diversion(const MetricsSeries& series,
                                  int degraded_server, double fair_share);

// Fraction of queries arriving during the degradation window whose latency
// stayed below `threshold_multiple` x the healthy-phase median. Failed
// queries count as degraded.
double measure_degradation_prevention(const MetricsSeries& series,
                                      double threshold_multiple);

}  // namespace olapsim
