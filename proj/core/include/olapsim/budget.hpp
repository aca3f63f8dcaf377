#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace olapsim {

enum class NodeType { kBroker, kServer };
enum class Resource { kCpu, kMem };
enum class PropagationType { kTable, kTenant };

struct Metric {
  int64_t cpu_ns = 0;
  int64_t mem_bytes = 0;

  Metric& operator+=(const Metric& o) {
    cpu_ns += o.cpu_ns;
    mem_bytes += o.mem_bytes;
    return *this;
  }
  bool operator==(const Metric&) const = default;
};

struct EnforcementProfile {
  int64_t cpu_cost_ns = 0;        // CPU budget per enforcement window
  int64_t memory_cost_bytes = 0;  // allocation budget per window
};

struct PropagationScheme {
  PropagationType type = PropagationType::kTable;
  std::vector<std::string> tables;  // TABLE scheme
  std::string tenant;               // TENANT scheme
};

struct NodeBudgetConfig {
  NodeType node_type = NodeType::kServer;
  EnforcementProfile enforcement_profile;
  PropagationScheme propagation_scheme;
};

struct WorkloadConfig {
  std::string workload_name;
  std::vector<NodeBudgetConfig> node_configs;
};

enum class ChargeResult { kAccepted, kRejected, kUnknownWorkload };

// Per-host map of (workload, resource) -> remaining budget in the current
// enforcement window. try_charge is lock-free and never over-commits: the
// compare and the decrement are one atomic step. Structural changes
// (add_or_update) are serialized by the owner.
class BudgetLedger {
 public:
  explicit BudgetLedger(int64_t window_ns = 5'000'000'000, bool strict = false)
      : window_ns_(window_ns), strict_(strict) {}
  BudgetLedger(const BudgetLedger&) = delete;
  BudgetLedger& operator=(const BudgetLedger&) = delete;
  BudgetLedger(BudgetLedger&&) = default;
  BudgetLedger& operator=(BudgetLedger&&) = default;

  int64_t window_ns() const { return window_ns_; }
  bool strict() const { return strict_; }

  // Idempotent. Raising a budget mid-window adds the delta to remaining;
  // lowering clamps remaining to the new budget.
  void add_or_update_workload(const std::string& workload,
                              const EnforcementProfile& profile);

  bool has_workload(const std::string& workload) const;

  ChargeResult try_charge(const std::string& workload, Resource resource,
                          int64_t amount, int64_t now_ns);

  // Refund for the two-phase admission protocol. Clamped at the window
  // budget.
  void refund(const std::string& workload, Resource resource, int64_t amount);

  void window_reset(int64_t now_ns);

  int64_t remaining(const std::string& workload, Resource resource) const;
  int64_t window_budget(const std::string& workload, Resource resource) const;
  std::vector<std::string> workloads() const;

 private:
  struct Entry {
    int64_t budget = 0;
    std::atomic<int64_t> remaining{0};
    int64_t window_start_ns = 0;
  };
  struct WorkloadEntry {
    Entry cpu;
    Entry mem;
  };
  Entry& entry(WorkloadEntry& w, Resource r) {
    return r == Resource::kCpu ? w.cpu : w.mem;
  }
  const Entry& entry(const WorkloadEntry& w, Resource r) const {
    return r == Resource::kCpu ? w.cpu : w.mem;
  }
  void maybe_reset(Entry& e, int64_t now_ns);

  int64_t window_ns_;
  bool strict_;
  std::map<std::string, std::unique_ptr<WorkloadEntry>> entries_;
};

enum class AdmitResult { kAdmitted, kRejectedCpu, kRejectedMem, kRejectedUnknown };

// Two-phase provisional charge: CPU then MEM; on MEM failure the CPU
// charge is refunded so a rejection leaves the ledger unchanged.
AdmitResult admit_query(BudgetLedger& ledger, const std::string& workload,
                        int64_t provisional_cpu_ns, int64_t provisional_mem_bytes,
                        int64_t now_ns);

enum class EnforceResult { kContinue, kCancel };

// Charges measured deltas, CPU first, then memory. The first failed charge
// cancels the query; consumed resources are not refunded.
EnforceResult enforce_thread_deltas(BudgetLedger& ledger,
                                    const std::string& workload,
                                    int64_t cpu_delta_ns, int64_t mem_delta_bytes,
                                    int64_t now_ns);

struct UsageSnapshot {
  std::map<int64_t, Metric> active_query_usage;
  double heap_fraction = 0;  // simulated total-memory utilization in [0, 1]
};

// At 99% heap every active query is killed; at 85% only the most
// memory-hungry one (ties by lowest query id).
std::vector<int64_t> kill_policy(const UsageSnapshot& snapshot);

// The per-thread region a worker publishes: its current task and the
// task-cumulative metrics, zeroed when a new task is installed. query < 0
// means idle.
struct ThreadSlot {
  int thread_id = 0;
  int64_t query = -1;
  int64_t task = -1;
  Metric metric;
};

// The periodic sampler of worker slots. Tracks task transitions, banks
// metrics of finished tasks per query, and evicts queries once they leave
// the thread set. The sampler is the only writer of the banked metrics.
class SamplingAccountant {
 public:
  struct Eviction {
    int64_t query = 0;
    Metric usage;  // final accounted usage at eviction
  };

  // One sampler pass. When `usage_threshold_tripped` is set the per-query
  // aggregation is materialized into `snapshot_out` (heap_fraction is the
  // caller's). Returns queries evicted this pass with their accounted
  // usage.
  std::vector<Eviction> sample_and_aggregate(
      const std::vector<ThreadSlot>& threads, bool usage_threshold_tripped,
      UsageSnapshot* snapshot_out);

  const std::map<int64_t, Metric>& inactive_metrics() const {
    return inactive_metric_;
  }

 private:
  struct TaskKey {
    int64_t query = -1;
    int64_t task = -1;
    bool operator==(const TaskKey&) const = default;
  };
  std::map<int, TaskKey> previous_task_;
  std::map<int, Metric> active_metric_;
  std::map<int64_t, Metric> inactive_metric_;
};

struct HostInfo {
  NodeType node_type = NodeType::kServer;
  std::set<std::string> tables;
  std::string tenant;
};

struct PropagationPlan {
  // host -> (workload name, per-node budget) entries to apply locally.
  std::map<std::string, std::vector<std::pair<std::string, EnforcementProfile>>>
      per_host;
  std::vector<std::string> warnings;
};

// TABLE scheme lands on hosts serving any listed table; TENANT on hosts of
// the tenant. Node types must match. Every selected host receives the full
// per-node budget; enforcement stays host-local.
PropagationPlan propagate_budgets(const std::vector<WorkloadConfig>& configs,
                                  const std::map<std::string, HostInfo>& topology);

}  // namespace olapsim
