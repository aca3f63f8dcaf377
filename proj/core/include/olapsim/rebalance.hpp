#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "olapsim/cluster.hpp"

namespace olapsim {

struct HostDiff {
  std::set<std::string> added;    // Desired \ Initial: must be downloaded
  std::set<std::string> removed;  // Initial \ Desired: must be dropped
};

// Set differences per host. Hosts present on only one side count as empty
// on the other.
std::map<std::string, HostDiff> compute_diff(const HostAssignment& initial,
                                             const HostAssignment& desired);

// Mutable planner state. Hosts and segments are interned to dense indices;
// the string-keyed API mirrors the sets of the state model: Initial,
// Desired, Added/Removed so-far, Down, Current.
class RebalanceState {
 public:
  RebalanceState(const HostAssignment& initial, const HostAssignment& desired,
                 int min_serving, int progress_batch);

  int min_serving() const { return min_serving_; }      // T
  int progress_batch() const { return progress_batch_; }
  int step_index() const { return step_index_; }
  void advance_step() { ++step_index_; }

  const std::vector<std::string>& hosts() const { return host_names_; }
  const std::vector<std::string>& segments() const { return segment_names_; }

  std::set<std::string> current(const std::string& host) const;
  bool converged(const std::string& host) const;
  bool all_converged() const;
  bool down(const std::string& host) const;
  void set_down(const std::string& host, bool down);
  void enable_converged_hosts();

  // Serving replicas of each segment right now: hosts with the segment in
  // Current and Down = 0.
  std::vector<int> serving_counts() const;
  int serving_count(const std::string& segment) const;

  // |Desired(h) symmetric-difference Current(h)| -- the host-priority key.
  int pending_change_count(const std::string& host) const;

  std::set<std::string> pending_additions(const std::string& host) const;
  std::set<std::string> pending_removals(const std::string& host) const;

  // Applies the full remaining diff of the host.
  void apply_full_diff(const std::string& host);
  void add_segment(const std::string& host, const std::string& segment);

  // Re-baselines Initial to the current physical assignment and diffs
  // against the new goal (mid-run goal update).
  void update_desired(const HostAssignment& new_desired);

  HostAssignment assignment() const;

 private:
  friend bool safe_to_drain(const RebalanceState&, const std::set<std::string>&,
                            const std::string&);
  int host_index(const std::string& host) const;
  int intern_segment(const std::string& segment);

  int min_serving_ = 0;
  int progress_batch_ = 1;
  int step_index_ = 0;
  std::vector<std::string> host_names_;
  std::map<std::string, int> host_ids_;
  std::vector<std::string> segment_names_;
  std::map<std::string, int> segment_ids_;
  // Per host, bitsets over dense segment index.
  std::vector<std::vector<uint64_t>> current_;
  std::vector<std::vector<uint64_t>> desired_;
  std::vector<bool> down_;
  std::vector<int> serving_;  // per segment, maintained incrementally
  size_t words_ = 0;
};

// Safety condition: draining `host` (with `candidates` already slated to go
// down this step) leaves every segment it serves with at least T other
// live serving replicas.
bool safe_to_drain(const RebalanceState& state,
                   const std::set<std::string>& candidates,
                   const std::string& host);

// Greedy candidate pick: non-converged hosts by descending pending-change
// count (ties by host id), admitted only if jointly safe to drain.
std::vector<std::string> select_hosts(const RebalanceState& state);

struct TraceStep {
  enum class Action { kRebalancing, kProgress };
  int step = 0;
  Action action = Action::kRebalancing;
  std::vector<std::string> drained_hosts;
  std::map<std::string, std::vector<std::string>> added;
  std::map<std::string, std::vector<std::string>> removed;
  // Serving replicas per segment at the step's weakest moment (drained
  // hosts down, before re-enable).
  std::map<std::string, int> serving;
  double drain_wait_ms = 0;
  double transfer_ms = 0;
};

struct RebalanceTrace {
  std::vector<TraceStep> steps;
  HostAssignment final_assignment;
  bool stalled = false;
  std::string diagnostic;

  int min_serving_over_trace() const;
};

struct PlannerOptions {
  double drain_wait_ms = 50.0;
  double transfer_ms_per_mb = 10.0;
  std::map<std::string, int64_t> segment_bytes;  // missing segments count 1 MB
  // Mid-run goal updates: applied when the step index reaches `first`.
  std::vector<std::pair<int, HostAssignment>> goal_updates;
};

void rebalancing_step(RebalanceState& state, const std::vector<std::string>& hosts,
                      const PlannerOptions& options, RebalanceTrace& trace);

// Adds up to progress_batch segments per non-converged host, fewest
// serving replicas first (ties by segment id). Never removes.
void progress_step(RebalanceState& state, const PlannerOptions& options,
                   RebalanceTrace& trace);

RebalanceTrace run_rebalance(const HostAssignment& initial,
                             const HostAssignment& desired, int min_serving,
                             int progress_batch,
                             const PlannerOptions& options = {});

// Replays the first `steps` trace records on top of `initial` -- the
// recover-from-interruption entry point.
HostAssignment replay_prefix(const HostAssignment& initial,
                             const RebalanceTrace& trace, size_t steps);

// Line-delimited records, one JSON object per step.
std::string trace_to_jsonl(const RebalanceTrace& trace);

}  // namespace olapsim
