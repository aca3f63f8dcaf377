#include "olapsim/rebalance.hpp"

#include <algorithm>
#include <bit>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace olapsim {

namespace {

inline bool get_bit(const std::vector<uint64_t>& bits, int i) {
  return (bits[i >> 6] >> (i & 63)) & 1;
}
inline void set_bit(std::vector<uint64_t>& bits, int i, bool v) {
  if (v) {
    bits[i >> 6] |= uint64_t{1} << (i & 63);
  } else {
    bits[i >> 6] &= ~(uint64_t{1} << (i & 63));
  }
}

}  // namespace

std::map<std::string, HostDiff> compute_diff(const HostAssignment& initial,
                                             const HostAssignment& desired) {
  std::map<std::string, HostDiff> out;
  static const std::set<std::string> kEmpty;
  auto segs = [](const HostAssignment& a, const std::string& h)
      -> const std::set<std::string>& {
    auto it = a.find(h);
    return it == a.end() ? kEmpty : it->second;
  };
  std::set<std::string> hosts;
  for (const auto& [h, _] : initial) hosts.insert(h);
  for (const auto& [h, _] : desired) hosts.insert(h);
  for (const auto& h : hosts) {
    const auto& ini = segs(initial, h);
    const auto& des = segs(desired, h);
    HostDiff d;
    std::set_difference(des.begin(), des.end(), ini.begin(), ini.end(),
                        std::inserter(d.added, d.added.begin()));
    std::set_difference(ini.begin(), ini.end(), des.begin(), des.end(),
                        std::inserter(d.removed, d.removed.begin()));
    out[h] = std::move(d);
  }
  return out;
}

RebalanceState::RebalanceState(const HostAssignment& initial,
                               const HostAssignment& desired, int min_serving,
                               int progress_batch)
    : min_serving_(min_serving), progress_batch_(progress_batch) {
  if (progress_batch_ < 1) {
    throw std::invalid_argument("progress_batch must be >= 1");
  }
  std::set<std::string> hosts;
  for (const auto& [h, _] : initial) hosts.insert(h);
  for (const auto& [h, _] : desired) hosts.insert(h);
  for (const auto& h : hosts) {
    host_ids_[h] = static_cast<int>(host_names_.size());
    host_names_.push_back(h);
  }
  for (const auto& assignment : {std::cref(initial), std::cref(desired)}) {
    for (const auto& [_, segs] : assignment.get()) {
      for (const auto& s : segs) intern_segment(s);
    }
  }
  words_ = (segment_names_.size() + 63) / 64;
  if (words_ == 0) words_ = 1;
  current_.assign(host_names_.size(), std::vector<uint64_t>(words_, 0));
  desired_.assign(host_names_.size(), std::vector<uint64_t>(words_, 0));
  down_.assign(host_names_.size(), false);
  serving_.assign(segment_names_.size(), 0);
  for (const auto& [h, segs] : initial) {
    int hi = host_ids_.at(h);
    for (const auto& s : segs) {
      int si = segment_ids_.at(s);
      set_bit(current_[hi], si, true);
      ++serving_[si];
    }
  }
  for (const auto& [h, segs] : desired) {
    int hi = host_ids_.at(h);
    for (const auto& s : segs) set_bit(desired_[hi], segment_ids_.at(s), true);
  }
}

int RebalanceState::host_index(const std::string& host) const {
  auto it = host_ids_.find(host);
  if (it == host_ids_.end()) throw std::invalid_argument("unknown host: " + host);
  return it->second;
}

int RebalanceState::intern_segment(const std::string& segment) {
  auto [it, inserted] =
      segment_ids_.emplace(segment, static_cast<int>(segment_names_.size()));
  if (inserted) segment_names_.push_back(segment);
  return it->second;
}

std::set<std::string> RebalanceState::current(const std::string& host) const {
  int hi = host_index(host);
  std::set<std::string> out;
  for (size_t si = 0; si < segment_names_.size(); ++si) {
    if (get_bit(current_[hi], static_cast<int>(si))) out.insert(segment_names_[si]);
  }
  return out;
}

bool RebalanceState::converged(const std::string& host) const {
  int hi = host_index(host);
  return current_[hi] == desired_[hi];
}

bool RebalanceState::all_converged() const {
  for (size_t hi = 0; hi < host_names_.size(); ++hi) {
    if (current_[hi] != desired_[hi]) return false;
  }
  return true;
}

bool RebalanceState::down(const std::string& host) const {
  return down_[host_index(host)];
}

void RebalanceState::set_down(const std::string& host, bool down) {
  int hi = host_index(host);
  if (down_[hi] == down) return;
  down_[hi] = down;
  for (size_t si = 0; si < segment_names_.size(); ++si) {
    if (get_bit(current_[hi], static_cast<int>(si))) {
      serving_[si] += down ? -1 : 1;
    }
  }
}

void RebalanceState::enable_converged_hosts() {
  for (size_t hi = 0; hi < host_names_.size(); ++hi) {
    if (down_[hi] && current_[hi] == desired_[hi]) {
      set_down(host_names_[hi], false);
    }
  }
}

std::vector<int> RebalanceState::serving_counts() const { return serving_; }

int RebalanceState::serving_count(const std::string& segment) const {
  auto it = segment_ids_.find(segment);
  if (it == segment_ids_.end()) {
    throw std::invalid_argument("unknown segment: " + segment);
  }
  return serving_[it->second];
}

int RebalanceState::pending_change_count(const std::string& host) const {
  int hi = host_index(host);
  int n = 0;
  for (size_t w = 0; w < words_; ++w) {
    n += std::popcount(current_[hi][w] ^ desired_[hi][w]);
  }
  return n;
}

std::set<std::string> RebalanceState::pending_additions(
    const std::string& host) const {
  int hi = host_index(host);
  std::set<std::string> out;
  for (size_t si = 0; si < segment_names_.size(); ++si) {
    int i = static_cast<int>(si);
    if (get_bit(desired_[hi], i) && !get_bit(current_[hi], i)) {
      out.insert(segment_names_[si]);
    }
  }
  return out;
}

std::set<std::string> RebalanceState::pending_removals(
    const std::string& host) const {
  int hi = host_index(host);
  std::set<std::string> out;
  for (size_t si = 0; si < segment_names_.size(); ++si) {
    int i = static_cast<int>(si);
    if (!get_bit(desired_[hi], i) && get_bit(current_[hi], i)) {
      out.insert(segment_names_[si]);
    }
  }
  return out;
}

void RebalanceState::apply_full_diff(const std::string& host) {
  int hi = host_index(host);
  for (size_t si = 0; si < segment_names_.size(); ++si) {
    int i = static_cast<int>(si);
    bool cur = get_bit(current_[hi], i);
    bool des = get_bit(desired_[hi], i);
    if (cur == des) continue;
    set_bit(current_[hi], i, des);
    if (!down_[hi]) serving_[si] += des ? 1 : -1;
  }
}

void RebalanceState::add_segment(const std::string& host,
                                 const std::string& segment) {
  int hi = host_index(host);
  int si = segment_ids_.at(segment);
  if (get_bit(current_[hi], si)) return;
  set_bit(current_[hi], si, true);
  if (!down_[hi]) ++serving_[si];
}

void RebalanceState::update_desired(const HostAssignment& new_desired) {
  for (const auto& [h, segs] : new_desired) {
    if (!host_ids_.count(h)) {
      throw std::invalid_argument("goal update adds unknown host: " + h);
    }
    for (const auto& s : segs) {
      if (!segment_ids_.count(s)) {
        throw std::invalid_argument("goal update adds unknown segment: " + s);
      }
    }
  }
  for (auto& bits : desired_) std::fill(bits.begin(), bits.end(), 0);
  for (const auto& [h, segs] : new_desired) {
    int hi = host_ids_.at(h);
    for (const auto& s : segs) set_bit(desired_[hi], segment_ids_.at(s), true);
  }
}

HostAssignment RebalanceState::assignment() const {
  HostAssignment out;
  for (const auto& h : host_names_) out[h] = current(h);
  return out;
}

bool safe_to_drain(const RebalanceState& state,
                   const std::set<std::string>& candidates,
                   const std::string& host) {
  int hi = state.host_index(host);
  std::vector<int> cand_ids;
  cand_ids.reserve(candidates.size());
  for (const auto& c : candidates) cand_ids.push_back(state.host_index(c));
  for (size_t si = 0; si < state.segment_names_.size(); ++si) {
    int i = static_cast<int>(si);
    if (!get_bit(state.current_[hi], i)) continue;
    int live = state.serving_[i];
    if (!state.down_[hi]) --live;  // the host itself
    for (int ci : cand_ids) {
      if (ci != hi && !state.down_[ci] && get_bit(state.current_[ci], i)) {
        --live;  // candidates already chosen this step count as down
      }
    }
    if (live < state.min_serving()) return false;
  }
  return true;
}

std::vector<std::string> select_hosts(const RebalanceState& state) {
  struct Entry {
    int pending;
    std::string host;
  };
  std::vector<Entry> entries;
  for (const auto& h : state.hosts()) {
    if (state.converged(h)) continue;
    entries.push_back({state.pending_change_count(h), h});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.pending != b.pending) return a.pending > b.pending;
    return a.host < b.host;
  });
  std::vector<std::string> admitted;
  std::set<std::string> admitted_set;
  for (const auto& e : entries) {
    if (safe_to_drain(state, admitted_set, e.host)) {
      admitted.push_back(e.host);
      admitted_set.insert(e.host);
    }
  }
  return admitted;
}

namespace {

double transfer_cost_ms(const PlannerOptions& options,
                        const std::map<std::string, std::vector<std::string>>& added) {
  int64_t bytes = 0;
  for (const auto& [_, segs] : added) {
    for (const auto& s : segs) {
      auto it = options.segment_bytes.find(s);
      bytes += it == options.segment_bytes.end() ? (1 << 20) : it->second;
    }
  }
  return static_cast<double>(bytes) / (1 << 20) * options.transfer_ms_per_mb;
}

std::map<std::string, int> serving_snapshot(const RebalanceState& state) {
  std::map<std::string, int> snap;
  const auto counts = state.serving_counts();
  for (size_t si = 0; si < state.segments().size(); ++si) {
    snap[state.segments()[si]] = counts[si];
  }
  return snap;
}

}  // namespace

void rebalancing_step(RebalanceState& state, const std::vector<std::string>& hosts,
                      const PlannerOptions& options, RebalanceTrace& trace) {
  TraceStep step;
  step.step = state.step_index();
  step.action = TraceStep::Action::kRebalancing;
  step.drained_hosts = hosts;

  // Disable queries on the whole batch, then apply each host's full diff.
  for (const auto& h : hosts) state.set_down(h, true);
  step.serving = serving_snapshot(state);  // the weakest moment
  for (const auto& h : hosts) {
    auto add = state.pending_additions(h);
    auto rem = state.pending_removals(h);
    if (!add.empty()) step.added[h].assign(add.begin(), add.end());
    if (!rem.empty()) step.removed[h].assign(rem.begin(), rem.end());
    state.apply_full_diff(h);
  }
  // Downloads done; re-enable queries.
  for (const auto& h : hosts) state.set_down(h, false);
  step.drain_wait_ms = options.drain_wait_ms * (hosts.empty() ? 0 : 1);
  step.transfer_ms = transfer_cost_ms(options, step.added);
  trace.steps.push_back(std::move(step));
  state.advance_step();
}

void progress_step(RebalanceState& state, const PlannerOptions& options,
                   RebalanceTrace& trace) {
  TraceStep step;
  step.step = state.step_index();
  step.action = TraceStep::Action::kProgress;
  step.serving = serving_snapshot(state);

  // Serving counts are snapshotted at step start so every host ranks the
  // same under-replicated segments first.
  struct Pending {
    int serving;
    std::string segment;
  };
  for (const auto& h : state.hosts()) {
    if (state.converged(h)) continue;
    std::vector<Pending> pend;
    for (const auto& s : state.pending_additions(h)) {
      int idx = 0;
      auto it = step.serving.find(s);
      idx = it == step.serving.end() ? 0 : it->second;
      pend.push_back({idx, s});
    }
    std::sort(pend.begin(), pend.end(), [](const Pending& a, const Pending& b) {
      if (a.serving != b.serving) return a.serving < b.serving;
      return a.segment < b.segment;
    });
    int quota = state.progress_batch();
    for (const auto& p : pend) {
      if (quota-- <= 0) break;
      state.add_segment(h, p.segment);
      step.added[h].push_back(p.segment);
    }
  }
  step.transfer_ms = transfer_cost_ms(options, step.added);
  trace.steps.push_back(std::move(step));
  state.advance_step();
}

RebalanceTrace run_rebalance(const HostAssignment& initial,
                             const HostAssignment& desired, int min_serving,
                             int progress_batch, const PlannerOptions& options) {
  // T must be reachable in the target layout.
  std::map<std::string, int> target_replicas;
  for (const auto& [_, segs] : desired) {
    for (const auto& s : segs) ++target_replicas[s];
  }
  for (const auto& [s, n] : target_replicas) {
    if (n < min_serving + 1) {
      throw std::invalid_argument(
          "unreachable serving threshold: segment " + s + " has " +
          std::to_string(n) + " target replicas, T=" + std::to_string(min_serving));
    }
  }

  RebalanceState state(initial, desired, min_serving, progress_batch);
  RebalanceTrace trace;
  size_t next_update = 0;
  auto updates = options.goal_updates;
  std::sort(updates.begin(), updates.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  while (!state.all_converged()) {
    while (next_update < updates.size() &&
           updates[next_update].first <= state.step_index()) {
      state.update_desired(updates[next_update].second);
      ++next_update;
    }
    state.enable_converged_hosts();
    if (state.all_converged()) break;
    auto hosts = select_hosts(state);
    if (!hosts.empty()) {
      rebalancing_step(state, hosts, options, trace);
    } else {
      size_t before = trace.steps.size();
      progress_step(state, options, trace);
      if (trace.steps[before].added.empty()) {
        trace.stalled = true;
        std::ostringstream diag;
        diag << "stalled: no host can be drained and no segment can be added;"
             << " hosts with pending removals only:";
        for (const auto& h : state.hosts()) {
          if (!state.converged(h) && state.pending_additions(h).empty()) {
            diag << ' ' << h;
          }
        }
        trace.diagnostic = diag.str();
        break;
      }
    }
  }
  trace.final_assignment = state.assignment();
  return trace;
}

HostAssignment replay_prefix(const HostAssignment& initial,
                             const RebalanceTrace& trace, size_t steps) {
  HostAssignment out = initial;
  steps = std::min(steps, trace.steps.size());
  for (size_t i = 0; i < steps; ++i) {
    const TraceStep& step = trace.steps[i];
    for (const auto& [h, segs] : step.added) {
      for (const auto& s : segs) out[h].insert(s);
    }
    for (const auto& [h, segs] : step.removed) {
      for (const auto& s : segs) out[h].erase(s);
    }
  }
  return out;
}

int RebalanceTrace::min_serving_over_trace() const {
  int min_count = INT32_MAX;
  for (const auto& step : steps) {
    for (const auto& [_, n] : step.serving) min_count = std::min(min_count, n);
  }
  return steps.empty() ? -1 : min_count;
}

std::string trace_to_jsonl(const RebalanceTrace& trace) {
  std::ostringstream out;
  for (const auto& step : trace.steps) {
    nlohmann::json j;
    j["step"] = step.step;
    j["action"] = step.action == TraceStep::Action::kRebalancing ? "rebalancing"
                                                                 : "progress";
    j["drained_hosts"] = step.drained_hosts;
    j["added"] = step.added;
    j["removed"] = step.removed;
    j["serving"] = step.serving;
    j["drain_wait_ms"] = step.drain_wait_ms;
    j["transfer_ms"] = step.transfer_ms;
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace olapsim
