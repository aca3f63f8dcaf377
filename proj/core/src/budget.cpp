#include "olapsim/budget.hpp"

#include <algorithm>
#include <stdexcept>

namespace olapsim {

void BudgetLedger::add_or_update_workload(const std::string& workload,
                                          const EnforcementProfile& profile) {
  if (profile.cpu_cost_ns <= 0 || profile.memory_cost_bytes <= 0) {
    throw std::invalid_argument("workload budgets must be positive: " + workload);
  }
  auto it = entries_.find(workload);
  if (it == entries_.end()) {
    auto w = std::make_unique<WorkloadEntry>();
    w->cpu.budget = profile.cpu_cost_ns;
    w->cpu.remaining.store(profile.cpu_cost_ns, std::memory_order_relaxed);
    w->mem.budget = profile.memory_cost_bytes;
    w->mem.remaining.store(profile.memory_cost_bytes, std::memory_order_relaxed);
    entries_.emplace(workload, std::move(w));
    return;
  }
  auto update = [](Entry& e, int64_t new_budget) {
    int64_t delta = new_budget - e.budget;
    e.budget = new_budget;
    if (delta > 0) {
      e.remaining.fetch_add(delta, std::memory_order_relaxed);
    } else if (delta < 0) {
      int64_t cur = e.remaining.load(std::memory_order_relaxed);
      while (cur > new_budget &&
             !e.remaining.compare_exchange_weak(cur, new_budget,
                                                std::memory_order_relaxed)) {
      }
    }
  };
  update(it->second->cpu, profile.cpu_cost_ns);
  update(it->second->mem, profile.memory_cost_bytes);
}

bool BudgetLedger::has_workload(const std::string& workload) const {
  return entries_.count(workload) > 0;
}

void BudgetLedger::maybe_reset(Entry& e, int64_t now_ns) {
  if (now_ns - e.window_start_ns < window_ns_) return;
  int64_t elapsed_windows = (now_ns - e.window_start_ns) / window_ns_;
  e.window_start_ns += elapsed_windows * window_ns_;
  // One full refill; skipped windows are not banked.
  e.remaining.store(e.budget, std::memory_order_relaxed);
}

ChargeResult BudgetLedger::try_charge(const std::string& workload,
                                      Resource resource, int64_t amount,
                                      int64_t now_ns) {
  if (amount < 0) throw std::invalid_argument("charge amount must be >= 0");
  auto it = entries_.find(workload);
  if (it == entries_.end()) {
    return strict_ ? ChargeResult::kUnknownWorkload : ChargeResult::kAccepted;
  }
  Entry& e = entry(*it->second, resource);
  maybe_reset(e, now_ns);
  int64_t cur = e.remaining.load(std::memory_order_relaxed);
  while (true) {
    if (cur < amount) return ChargeResult::kRejected;
    if (e.remaining.compare_exchange_weak(cur, cur - amount,
                                          std::memory_order_relaxed)) {
      return ChargeResult::kAccepted;
    }
  }
}

void BudgetLedger::refund(const std::string& workload, Resource resource,
                          int64_t amount) {
  auto it = entries_.find(workload);
  if (it == entries_.end()) return;
  Entry& e = entry(*it->second, resource);
  int64_t cur = e.remaining.load(std::memory_order_relaxed);
  while (true) {
    int64_t next = std::min(cur + amount, e.budget);
    if (e.remaining.compare_exchange_weak(cur, next, std::memory_order_relaxed)) {
      return;
    }
  }
}

void BudgetLedger::window_reset(int64_t now_ns) {
  for (auto& [_, w] : entries_) {
    maybe_reset(w->cpu, now_ns);
    maybe_reset(w->mem, now_ns);
  }
}

int64_t BudgetLedger::remaining(const std::string& workload,
                                Resource resource) const {
  auto it = entries_.find(workload);
  if (it == entries_.end()) {
    throw std::invalid_argument("unknown workload: " + workload);
  }
  return entry(*it->second, resource).remaining.load(std::memory_order_relaxed);
}

int64_t BudgetLedger::window_budget(const std::string& workload,
                                    Resource resource) const {
  auto it = entries_.find(workload);
  if (it == entries_.end()) {
    throw std::invalid_argument("unknown workload: " + workload);
  }
  return entry(*it->second, resource).budget;
}

std::vector<std::string> BudgetLedger::workloads() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

AdmitResult admit_query(BudgetLedger& ledger, const std::string& workload,
                        int64_t provisional_cpu_ns, int64_t provisional_mem_bytes,
                        int64_t now_ns) {
  ChargeResult cpu =
      ledger.try_charge(workload, Resource::kCpu, provisional_cpu_ns, now_ns);
  if (cpu == ChargeResult::kUnknownWorkload) return AdmitResult::kRejectedUnknown;
  if (cpu == ChargeResult::kRejected) return AdmitResult::kRejectedCpu;
  ChargeResult mem =
      ledger.try_charge(workload, Resource::kMem, provisional_mem_bytes, now_ns);
  if (mem != ChargeResult::kAccepted) {
    ledger.refund(workload, Resource::kCpu, provisional_cpu_ns);
    return mem == ChargeResult::kUnknownWorkload ? AdmitResult::kRejectedUnknown
                                                 : AdmitResult::kRejectedMem;
  }
  return AdmitResult::kAdmitted;
}

EnforceResult enforce_thread_deltas(BudgetLedger& ledger,
                                    const std::string& workload,
                                    int64_t cpu_delta_ns, int64_t mem_delta_bytes,
                                    int64_t now_ns) {
  if (ledger.try_charge(workload, Resource::kCpu, cpu_delta_ns, now_ns) !=
      ChargeResult::kAccepted) {
    return EnforceResult::kCancel;  // memory left uncharged
  }
  if (ledger.try_charge(workload, Resource::kMem, mem_delta_bytes, now_ns) !=
      ChargeResult::kAccepted) {
    return EnforceResult::kCancel;
  }
  return EnforceResult::kContinue;
}

std::vector<int64_t> kill_policy(const UsageSnapshot& snapshot) {
  std::vector<int64_t> victims;
  if (snapshot.heap_fraction >= 0.99) {
    for (const auto& [q, _] : snapshot.active_query_usage) victims.push_back(q);
    return victims;
  }
  if (snapshot.heap_fraction >= 0.85 && !snapshot.active_query_usage.empty()) {
    int64_t worst = -1;
    int64_t worst_mem = -1;
    for (const auto& [q, m] : snapshot.active_query_usage) {
      if (m.mem_bytes > worst_mem) {  // map order breaks ties by lowest id
        worst = q;
        worst_mem = m.mem_bytes;
      }
    }
    victims.push_back(worst);
  }
  return victims;
}

std::vector<SamplingAccountant::Eviction> SamplingAccountant::sample_and_aggregate(
    const std::vector<ThreadSlot>& threads, bool usage_threshold_tripped,
    UsageSnapshot* snapshot_out) {
  std::set<int64_t> active_queries;
  for (const ThreadSlot& t : threads) {
    if (t.query >= 0) active_queries.insert(t.query);
    TaskKey cur{t.query, t.task};
    auto prev_it = previous_task_.find(t.thread_id);
    TaskKey prev = prev_it == previous_task_.end() ? TaskKey{} : prev_it->second;
    if (prev == cur) {
      // Task unchanged since the last pass: refresh the sample.
      active_metric_[t.thread_id] = t.metric;
    } else {
      // Task switched: the previous task is finished on this thread, bank
      // its last observed usage against its query.
      if (prev.query >= 0) {
        inactive_metric_[prev.query] += active_metric_[t.thread_id];
      }
      previous_task_[t.thread_id] = cur;
      active_metric_[t.thread_id] = t.query >= 0 ? t.metric : Metric{};
    }
  }

  if (usage_threshold_tripped && snapshot_out != nullptr) {
    snapshot_out->active_query_usage.clear();
    for (int64_t q : active_queries) {
      auto it = inactive_metric_.find(q);
      snapshot_out->active_query_usage[q] =
          it == inactive_metric_.end() ? Metric{} : it->second;
    }
    for (const ThreadSlot& t : threads) {
      if (t.query < 0) continue;
      snapshot_out->active_query_usage[t.query] += active_metric_[t.thread_id];
    }
  }

  std::vector<Eviction> evicted;
  for (auto it = inactive_metric_.begin(); it != inactive_metric_.end();) {
    if (!active_queries.count(it->first)) {
      evicted.push_back({it->first, it->second});
      it = inactive_metric_.erase(it);
    } else {
      ++it;
    }
  }
  return evicted;
}

PropagationPlan propagate_budgets(const std::vector<WorkloadConfig>& configs,
                                  const std::map<std::string, HostInfo>& topology) {
  PropagationPlan plan;
  for (const WorkloadConfig& config : configs) {
    for (const NodeBudgetConfig& node : config.node_configs) {
      bool matched = false;
      for (const auto& [host, info] : topology) {
        if (info.node_type != node.node_type) continue;
        bool selected = false;
        if (node.propagation_scheme.type == PropagationType::kTable) {
          for (const auto& table : node.propagation_scheme.tables) {
            if (info.tables.count(table)) {
              selected = true;
              break;
            }
          }
        } else {
          selected = info.tenant == node.propagation_scheme.tenant;
        }
        if (selected) {
          plan.per_host[host].emplace_back(config.workload_name,
                                           node.enforcement_profile);
          matched = true;
        }
      }
      if (!matched) {
        plan.warnings.push_back(
            "workload " + config.workload_name + " (" +
            (node.node_type == NodeType::kBroker ? "BROKER" : "SERVER") +
            ") matched no host");
      }
    }
  }
  return plan;
}

}  // namespace olapsim
