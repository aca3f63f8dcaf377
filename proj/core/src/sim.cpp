#include "olapsim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "olapsim/rng.hpp"

namespace olapsim {

namespace {

int64_t ms_to_ticks(double ms, double tick_ms) {
  return std::llround(ms / tick_ms);
}

double percentile_nearest_rank(std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0;
  size_t idx = static_cast<size_t>(std::ceil(p / 100.0 * sorted.size()));
  if (idx == 0) idx = 1;
  return sorted[std::min(idx - 1, sorted.size() - 1)];
}

}  // namespace

struct Simulation::Impl {
  // -- static configuration ------------------------------------------------
  Scenario sc;
  int64_t total_ticks = 0;
  int64_t window_ticks = 0;
  int num_windows = 0;
  int64_t sampling_ticks = 0;
  int64_t enforcement_ticks = 0;
  std::vector<std::string> server_names;

  // -- randomness ----------------------------------------------------------
  std::mt19937_64 arrivals_rng;
  std::mt19937_64 degradation_rng;
  std::mt19937_64 selection_rng;

  // -- query bookkeeping ---------------------------------------------------
  struct QueryState {
    int workload = 0;
    int broker = 0;
    int64_t arrival_tick = 0;
    int pending_subqueries = 0;
    QueryOutcome worst = QueryOutcome::kCompleted;
    bool terminal = false;
    Metric truth;
    int64_t completion_tick = 0;
  };
  std::vector<QueryState> queries;  // index = query id
  int64_t injected = 0;
  int64_t terminal_count = 0;

  // -- messages ------------------------------------------------------------
  struct Task {
    int64_t query = 0;
    int64_t task_id = 0;
    int workload = 0;
    int remaining = 0;
    int64_t cpu_per_unit = 0;
    int64_t mem_per_unit = 0;
  };
  struct SubQuery {
    int64_t query = 0;
    int workload = 0;
    int64_t dispatch_tick = 0;
    std::vector<Task> tasks;
  };
  struct ServerMsg {
    int64_t due = 0;
    int server = 0;
    SubQuery sub;
  };
  struct Response {
    int64_t due = 0;
    int broker = 0;
    int server = 0;
    int64_t query = 0;
    int64_t dispatch_tick = 0;
    QueryOutcome kind = QueryOutcome::kCompleted;
  };
  std::deque<ServerMsg> server_msgs;  // FIFO by due tick (constant delay)
  std::deque<Response> responses;

  // -- brokers ---------------------------------------------------------------
  struct Broker {
    SelectorState selector;
    BudgetLedger ledger;
    explicit Broker(const SelectionPolicy& policy, int64_t window_ns, bool strict)
        : selector(policy), ledger(window_ns, strict) {}
  };
  std::vector<Broker> brokers;

  // -- servers ---------------------------------------------------------------
  struct Slot {
    bool busy = false;
    bool done = false;         // finished, final state visible to the sampler
    bool sampled_done = false; // a sampler pass has seen the final state
    Task task;
    Metric metric;             // per-task cumulative, zeroed at install
    Metric charged;            // enforcement marks within the current task
  };
  struct SubQueryProgress {
    int tasks_left = 0;
    int64_t dispatch_tick = 0;
    QueryOutcome worst = QueryOutcome::kCompleted;
  };
  struct Server {
    std::deque<Task> queue;
    std::vector<Slot> slots;
    BudgetLedger ledger;
    SamplingAccountant accountant;
    std::unordered_map<int64_t, SubQueryProgress> subqueries;
    std::unordered_map<int64_t, int64_t> active_mem;  // query -> bytes held
    int64_t mem_in_use = 0;
    Server(int threads, int64_t window_ns, bool strict)
        : slots(threads), ledger(window_ns, strict) {}
  };
  std::vector<Server> servers;
  std::vector<bool> drained;  // rebalance-driver routing exclusion

  // -- workloads -------------------------------------------------------------
  struct ArrivalState {
    double accumulator = 0;
    int next_broker = 0;
  };
  std::vector<ArrivalState> arrivals;
  std::vector<int> work_units;  // per profile

  // -- metrics ---------------------------------------------------------------
  int64_t clock = 0;
  MetricsSeries series;
  std::vector<std::vector<double>> window_latencies;
  std::unordered_map<int64_t, Metric> accounted;  // query -> evicted usage
  int64_t next_task_id = 0;

  // -- rebalance driver --------------------------------------------------------
  struct Rebalance {
    enum class Phase { kWaiting, kIdle, kDraining, kTransferring, kDone };
    Phase phase = Phase::kWaiting;
    RebalanceState state;
    PlannerOptions opts;
    RebalanceTrace trace;
    std::vector<std::string> batch;
    std::vector<int> batch_idx;
    int64_t start_tick = 0;
    int64_t deadline = 0;
    int64_t drain_timeout_ticks = 0;
    Rebalance(const HostAssignment& initial, const HostAssignment& desired,
              int min_serving, int batch_size)
        : state(initial, desired, min_serving, batch_size) {}
  };
  std::unique_ptr<Rebalance> rebalance;

  explicit Impl(Scenario scenario) : sc(std::move(scenario)) {
    if (sc.tick_ms <= 0) throw std::invalid_argument("tick_ms must be > 0");
    total_ticks = ms_to_ticks(sc.duration_ms, sc.tick_ms);
    window_ticks = std::max<int64_t>(1, ms_to_ticks(sc.metrics_window_ms, sc.tick_ms));
    num_windows = static_cast<int>((total_ticks + window_ticks - 1) / window_ticks);
    sampling_ticks = std::max<int64_t>(
        1, ms_to_ticks(sc.accounting.sampling_interval_ms, sc.tick_ms));
    enforcement_ticks = std::max<int64_t>(
        1, ms_to_ticks(sc.accounting.enforcement_interval_ms, sc.tick_ms));

    arrivals_rng = make_stream(sc.seed, "arrivals");
    degradation_rng = make_stream(sc.seed, "degradation");
    selection_rng = make_stream(sc.seed, "selection");

    const int64_t window_ns =
        static_cast<int64_t>(sc.accounting.window_ms * 1e6);
    servers.reserve(sc.num_servers());
    for (int s = 0; s < sc.num_servers(); ++s) {
      server_names.push_back("server-" + std::to_string(s));
      servers.emplace_back(sc.threads_per_server, window_ns,
                           sc.accounting.strict_workloads);
    }
    drained.assign(sc.num_servers(), false);
    brokers.reserve(sc.brokers);
    for (int b = 0; b < sc.brokers; ++b) {
      brokers.emplace_back(sc.policy, window_ns, sc.accounting.strict_workloads);
      for (const auto& name : server_names) {
        brokers.back().selector.register_server(name);
      }
    }

    arrivals.resize(sc.workloads.size());
    for (const auto& wl : sc.workloads) {
      int units = wl.work_units > 0
                      ? wl.work_units
                      : static_cast<int>(
                            std::max<int64_t>(1, ms_to_ticks(wl.base_latency_ms,
                                                             sc.tick_ms)));
      work_units.push_back(units);
      series.workload_labels.push_back(wl.label);
      series.workload_windows[wl.label].resize(num_windows);
    }

    // Budget propagation: every sim host serves the scenario's one table.
    if (!sc.budget_configs.empty()) {
      std::map<std::string, HostInfo> topo;
      for (const auto& name : server_names) {
        topo[name] = HostInfo{NodeType::kServer, {sc.table_name}, sc.tenant};
      }
      for (int b = 0; b < sc.brokers; ++b) {
        topo["broker-" + std::to_string(b)] =
            HostInfo{NodeType::kBroker, {sc.table_name}, sc.tenant};
      }
      PropagationPlan plan = propagate_budgets(sc.budget_configs, topo);
      for (const auto& w : plan.warnings) series.warnings.push_back(w);
      for (const auto& [host, entries] : plan.per_host) {
        BudgetLedger* ledger = nullptr;
        if (host.rfind("server-", 0) == 0) {
          ledger = &servers[std::stoi(host.substr(7))].ledger;
        } else {
          ledger = &brokers[std::stoi(host.substr(7))].ledger;
        }
        for (const auto& [workload, profile] : entries) {
          ledger->add_or_update_workload(workload, profile);
        }
      }
    }

    series.tick_ms = sc.tick_ms;
    series.window_ms = sc.metrics_window_ms;
    series.duration_ms = sc.duration_ms;
    series.num_servers = sc.num_servers();
    series.server_names = server_names;
    series.degradations = sc.degradations;
    series.dispatched.assign(num_windows, std::vector<int64_t>(sc.num_servers(), 0));
    series.completed.assign(num_windows, std::vector<int64_t>(sc.num_servers(), 0));
    series.latency.resize(num_windows);
    window_latencies.resize(num_windows);

    if (sc.rebalance) {
      const RebalancePlanSpec& plan = *sc.rebalance;
      int min_serving = plan.min_serving >= 0 ? plan.min_serving
                                              : sc.servers_per_mss - 1;
      std::set<std::string> all_segments;
      for (const auto& [h, segs] : plan.desired) {
        all_segments.insert(segs.begin(), segs.end());
      }
      int batch = plan.progress_batch > 0
                      ? plan.progress_batch
                      : std::max<int>(1, static_cast<int>(all_segments.size() / 20));
      for (const auto& assignment : {plan.initial, plan.desired}) {
        for (const auto& [h, _] : assignment) {
          if (std::find(server_names.begin(), server_names.end(), h) ==
              server_names.end()) {
            throw std::invalid_argument("rebalance references unknown host: " + h);
          }
        }
      }
      rebalance = std::make_unique<Rebalance>(plan.initial, plan.desired,
                                              min_serving, batch);
      rebalance->opts.drain_wait_ms = plan.drain_timeout_ms;
      rebalance->opts.transfer_ms_per_mb = plan.transfer_ms_per_mb;
      rebalance->start_tick = ms_to_ticks(plan.start_ms, sc.tick_ms);
      rebalance->drain_timeout_ticks =
          std::max<int64_t>(1, ms_to_ticks(plan.drain_timeout_ms, sc.tick_ms));
    }
  }

  int window_of(int64_t tick) const {
    int w = static_cast<int>(tick / window_ticks);
    return std::min(w, num_windows - 1);
  }

  double progress_probability(int server, int64_t tick) const {
    double p = 1.0;
    for (const auto& ev : sc.degradations) {
      if (ev.server != server) continue;
      if (tick >= ms_to_ticks(ev.start_ms, sc.tick_ms) &&
          tick < ms_to_ticks(ev.end_ms, sc.tick_ms)) {
        p = std::min(p, ev.progress_probability);
      }
    }
    return p;
  }

  WorkloadWindow& wl_window(int workload, int64_t tick) {
    return series.workload_windows[sc.workloads[workload].label][window_of(tick)];
  }

  // ---- phase 1: message delivery ----------------------------------------

  void deliver_messages() {
    while (!server_msgs.empty() && server_msgs.front().due <= clock) {
      ServerMsg msg = std::move(server_msgs.front());
      server_msgs.pop_front();
      receive_subquery(msg.server, std::move(msg.sub));
    }
    while (!responses.empty() && responses.front().due <= clock) {
      Response r = responses.front();
      responses.pop_front();
      receive_response(r);
    }
  }

  void receive_subquery(int server_idx, SubQuery sub) {
    Server& server = servers[server_idx];
    const std::string& wl_name = sc.workloads[sub.workload].workload_name;
    // Admission: a provisional charge tests budget availability.
    if (!wl_name.empty() && server.ledger.has_workload(wl_name)) {
      AdmitResult res =
          admit_query(server.ledger, wl_name, sc.accounting.provisional_cpu_ns,
                      sc.accounting.provisional_mem_bytes, clock_ns());
      if (res != AdmitResult::kAdmitted) {
        wl_window(sub.workload, clock).rejected++;
        responses.push_back(Response{clock + sc.message_delay_ticks, broker_of(sub.query),
                                     server_idx, sub.query, sub.dispatch_tick,
                                     QueryOutcome::kRejected});
        return;
      }
      if (sc.accounting.provisional_cpu_ns > 0) {
        wl_window(sub.workload, clock).charged_cpu_ns +=
            sc.accounting.provisional_cpu_ns;
      }
      if (sc.accounting.provisional_mem_bytes > 0) {
        wl_window(sub.workload, clock).charged_mem_bytes +=
            sc.accounting.provisional_mem_bytes;
      }
    }
    if (sc.server_queue_cap > 0 &&
        static_cast<int>(server.queue.size()) + static_cast<int>(sub.tasks.size()) >
            sc.server_queue_cap) {
      wl_window(sub.workload, clock).rejected++;
      responses.push_back(Response{clock + sc.message_delay_ticks, broker_of(sub.query),
                                   server_idx, sub.query, sub.dispatch_tick,
                                   QueryOutcome::kRejected});
      return;
    }
    server.subqueries[sub.query] = SubQueryProgress{
        static_cast<int>(sub.tasks.size()), sub.dispatch_tick,
        QueryOutcome::kCompleted};
    for (Task& t : sub.tasks) server.queue.push_back(std::move(t));
  }

  int broker_of(int64_t query) const { return queries[query].broker; }

  void receive_response(const Response& r) {
    Broker& broker = brokers[r.broker];
    double latency_ms = static_cast<double>(clock - r.dispatch_tick) * sc.tick_ms;
    if (r.kind == QueryOutcome::kCompleted) {
      broker.selector.on_response(server_names[r.server], latency_ms);
      series.completed[window_of(clock)][r.server]++;
    } else {
      // Error responses carry no latency signal; only release the slot.
      broker.selector.on_response(server_names[r.server],
                                  broker.selector.stats(server_names[r.server])
                                      .latency_ema_ms);
    }
    QueryState& q = queries[r.query];
    if (r.kind != QueryOutcome::kCompleted && worse(r.kind, q.worst)) {
      q.worst = r.kind;
    }
    if (--q.pending_subqueries == 0) finish_query(r.query);
  }

  static bool worse(QueryOutcome a, QueryOutcome b) {
    auto rank = [](QueryOutcome o) {
      switch (o) {
        case QueryOutcome::kCompleted: return 0;
        case QueryOutcome::kRejected: return 1;
        case QueryOutcome::kNoServer: return 2;
        case QueryOutcome::kCancelled: return 3;
        case QueryOutcome::kKilled: return 4;
      }
      return 0;
    };
    return rank(a) > rank(b);
  }

  void finish_query(int64_t id) {
    QueryState& q = queries[id];
    q.terminal = true;
    q.completion_tick = clock;
    ++terminal_count;
    double latency_ms = static_cast<double>(clock - q.arrival_tick) * sc.tick_ms;
    QueryRecord rec{id, q.workload,
                    static_cast<double>(q.arrival_tick) * sc.tick_ms, latency_ms,
                    q.worst};
    series.queries.push_back(rec);
    WorkloadWindow& ww = wl_window(q.workload, clock);
    switch (q.worst) {
      case QueryOutcome::kCompleted:
        ww.completed++;
        window_latencies[window_of(clock)].push_back(latency_ms);
        break;
      case QueryOutcome::kRejected:
      case QueryOutcome::kNoServer:
        break;  // rejection already counted at the rejecting site
      case QueryOutcome::kCancelled:
        ww.cancelled++;
        break;
      case QueryOutcome::kKilled:
        ww.killed++;
        break;
    }
  }

  // ---- phase 2: arrivals and dispatch ------------------------------------

  void inject_arrivals() {
    for (size_t w = 0; w < sc.workloads.size(); ++w) {
      const WorkloadProfile& wl = sc.workloads[w];
      int n = 0;
      if (clock == 0 && wl.initial_burst > 0) n += wl.initial_burst;
      if (wl.qps > 0) {
        if (sc.poisson_arrivals) {
          double mean = wl.qps * sc.tick_ms / 1000.0;
          std::poisson_distribution<int> poisson(mean);
          n += poisson(arrivals_rng);
        } else {
          arrivals[w].accumulator += wl.qps * sc.tick_ms / 1000.0;
          int whole = static_cast<int>(arrivals[w].accumulator);
          arrivals[w].accumulator -= whole;
          n += whole;
        }
      }
      for (int i = 0; i < n; ++i) inject_query(static_cast<int>(w));
    }
  }

  void inject_query(int workload) {
    int64_t id = static_cast<int64_t>(queries.size());
    int broker_idx = arrivals[workload].next_broker;
    arrivals[workload].next_broker =
        (arrivals[workload].next_broker + 1) % sc.brokers;
    queries.push_back(QueryState{workload, broker_idx, clock, 0,
                                 QueryOutcome::kCompleted, false, Metric{}, 0});
    ++injected;
    wl_window(workload, clock).injected++;

    Broker& broker = brokers[broker_idx];
    const std::string& wl_name = sc.workloads[workload].workload_name;
    if (!wl_name.empty() && broker.ledger.has_workload(wl_name)) {
      AdmitResult res =
          admit_query(broker.ledger, wl_name, sc.accounting.provisional_cpu_ns,
                      sc.accounting.provisional_mem_bytes, clock_ns());
      if (res != AdmitResult::kAdmitted) {
        wl_window(workload, clock).rejected++;
        queries[id].worst = QueryOutcome::kRejected;
        queries[id].terminal = true;
        ++terminal_count;
        series.queries.push_back(QueryRecord{
            id, workload, static_cast<double>(clock) * sc.tick_ms, 0,
            QueryOutcome::kRejected});
        return;
      }
    }
    dispatch_query(id, workload, broker_idx);
  }

  void dispatch_query(int64_t id, int workload, int broker_idx) {
    Broker& broker = brokers[broker_idx];
    const int rows = sc.mss_count;
    const int cols = sc.servers_per_mss;
    std::vector<int> targets;
    if (sc.routing == RoutingMode::kReplicaGroupRandom) {
      std::uniform_int_distribution<int> pick(0, cols - 1);
      int col = pick(selection_rng);
      for (int row = 0; row < rows; ++row) targets.push_back(row * cols + col);
    } else {
      for (int row = 0; row < rows; ++row) {
        std::vector<std::string> mss;
        std::vector<bool> eligible;
        for (int col = 0; col < cols; ++col) {
          int s = row * cols + col;
          mss.push_back(server_names[s]);
          eligible.push_back(!drained[s]);
        }
        auto chosen = broker.selector.select(mss, eligible, selection_rng);
        if (!chosen) {
          targets.clear();
          break;
        }
        targets.push_back(row * cols +
                          static_cast<int>(std::find(mss.begin(), mss.end(), *chosen) -
                                           mss.begin()));
      }
    }
    if (targets.empty()) {
      // Every mirror of some set is unavailable; fail fast.
      queries[id].worst = QueryOutcome::kNoServer;
      queries[id].terminal = true;
      ++terminal_count;
      wl_window(workload, clock).rejected++;
      series.queries.push_back(QueryRecord{id, workload,
                                           static_cast<double>(clock) * sc.tick_ms,
                                           0, QueryOutcome::kNoServer});
      return;
    }

    queries[id].pending_subqueries = static_cast<int>(targets.size());
    const WorkloadProfile& wl = sc.workloads[workload];
    int units = work_units[workload];
    int tasks = std::min(sc.threads_per_server, std::max(1, wl.segments_per_query));
    for (int target : targets) {
      if (drained[target]) series.routed_to_drained_host = true;
      broker.selector.on_dispatch(server_names[target]);
      series.dispatched[window_of(clock)][target]++;
      SubQuery sub;
      sub.query = id;
      sub.workload = workload;
      sub.dispatch_tick = clock;
      int base = units / tasks;
      int extra = units % tasks;
      for (int t = 0; t < tasks; ++t) {
        Task task;
        task.query = id;
        task.task_id = next_task_id++;
        task.workload = workload;
        task.remaining = base + (t < extra ? 1 : 0);
        task.cpu_per_unit = wl.cpu_ns_per_unit;
        task.mem_per_unit = wl.mem_bytes_per_unit;
        if (task.remaining > 0) sub.tasks.push_back(task);
      }
      server_msgs.push_back(
          ServerMsg{clock + sc.message_delay_ticks, target, std::move(sub)});
    }
  }

  // ---- phase 3: servers ----------------------------------------------------

  int64_t clock_ns() const {
    return static_cast<int64_t>(clock * sc.tick_ms * 1e6);
  }

  void task_terminal(int server_idx, const Task& task, QueryOutcome kind) {
    Server& server = servers[server_idx];
    auto it = server.subqueries.find(task.query);
    if (it == server.subqueries.end()) return;
    SubQueryProgress& prog = it->second;
    if (kind != QueryOutcome::kCompleted && worse(kind, prog.worst)) {
      prog.worst = kind;
    }
    if (--prog.tasks_left == 0) {
      responses.push_back(Response{clock + sc.message_delay_ticks,
                                   broker_of(task.query), server_idx, task.query,
                                   prog.dispatch_tick, prog.worst});
      // The query no longer holds simulated heap on this server.
      auto mem = server.active_mem.find(task.query);
      if (mem != server.active_mem.end()) {
        server.mem_in_use -= mem->second;
        server.active_mem.erase(mem);
      }
      server.subqueries.erase(it);
    }
  }

  // Charges the slot's uncharged usage. Returns true when the budget ran
  // out and the query must stop on this host.
  bool charge_execution(int server_idx, Slot& slot) {
    Server& server = servers[server_idx];
    const std::string& wl_name = sc.workloads[slot.task.workload].workload_name;
    int64_t cpu_delta = slot.metric.cpu_ns - slot.charged.cpu_ns;
    int64_t mem_delta = slot.metric.mem_bytes - slot.charged.mem_bytes;
    if (cpu_delta == 0 && mem_delta == 0) return false;
    slot.charged = slot.metric;
    if (wl_name.empty() || !server.ledger.has_workload(wl_name)) return false;
    EnforceResult res = enforce_thread_deltas(server.ledger, wl_name, cpu_delta,
                                              mem_delta, clock_ns());
    if (res == EnforceResult::kContinue) {
      WorkloadWindow& ww = wl_window(slot.task.workload, clock);
      ww.charged_cpu_ns += cpu_delta;
      ww.charged_mem_bytes += mem_delta;
      return false;
    }
    return true;
  }

  void cancel_query_on_server(int server_idx, int64_t query, QueryOutcome kind) {
    Server& server = servers[server_idx];
    // Drop queued tasks first.
    for (auto it = server.queue.begin(); it != server.queue.end();) {
      if (it->query == query) {
        task_terminal(server_idx, *it, kind);
        it = server.queue.erase(it);
      } else {
        ++it;
      }
    }
    for (Slot& slot : server.slots) {
      if (slot.busy && slot.task.query == query) {
        slot.busy = false;
        slot.done = true;  // sampler banks the partial usage
        task_terminal(server_idx, slot.task, kind);
      }
    }
  }

  void advance_servers() {
    const bool enforcement_due =
        clock % enforcement_ticks == 1 % enforcement_ticks;
    const bool sampling_due = clock % sampling_ticks == 1 % sampling_ticks;

    for (int s = 0; s < static_cast<int>(servers.size()); ++s) {
      Server& server = servers[s];
      double p = progress_probability(s, clock);

      // Advance busy threads one work unit (probabilistically when degraded).
      for (Slot& slot : server.slots) {
        if (!slot.busy) continue;
        bool advance = true;
        if (p < 1.0) {
          std::bernoulli_distribution step(p);
          advance = step(degradation_rng);
        }
        if (!advance) continue;
        slot.task.remaining--;
        slot.metric.cpu_ns += slot.task.cpu_per_unit;
        slot.metric.mem_bytes += slot.task.mem_per_unit;
        QueryState& q = queries[slot.task.query];
        q.truth.cpu_ns += slot.task.cpu_per_unit;
        q.truth.mem_bytes += slot.task.mem_per_unit;
        WorkloadWindow& ww = wl_window(slot.task.workload, clock);
        ww.true_cpu_ns += slot.task.cpu_per_unit;
        ww.true_mem_bytes += slot.task.mem_per_unit;
        server.active_mem[slot.task.query] += slot.task.mem_per_unit;
        server.mem_in_use += slot.task.mem_per_unit;
        if (slot.task.remaining == 0) {
          slot.busy = false;
          slot.done = true;
          // Charge the tail of the task before the worker moves on. A
          // failed tail charge means the budget ran out as the task
          // finished: the work is done but the query counts as cancelled.
          bool exhausted = charge_execution(s, slot);
          task_terminal(s, slot.task,
                        exhausted ? QueryOutcome::kCancelled
                                  : QueryOutcome::kCompleted);
        }
      }

      if (enforcement_due) {
        for (Slot& slot : server.slots) {
          if (slot.busy && charge_execution(s, slot)) {
            cancel_query_on_server(s, slot.task.query, QueryOutcome::kCancelled);
          }
        }
      }

      if (sampling_due) sampler_pass(s);

      // Free sampled done slots, then install queued tasks. Unsampled done
      // slots are reused only when nothing else is free; their tail usage
      // is lost to the accountant, exactly like a real slot overwrite.
      for (Slot& slot : server.slots) {
        if (slot.done && slot.sampled_done) {
          slot = Slot{};
        }
      }
      for (Slot& slot : server.slots) {
        if (server.queue.empty()) break;
        if (slot.busy || slot.done) continue;
        install_task(slot, server.queue.front());
        server.queue.pop_front();
      }
      for (Slot& slot : server.slots) {
        if (server.queue.empty()) break;
        if (slot.busy) continue;
        if (slot.done) {
          install_task(slot, server.queue.front());
          server.queue.pop_front();
        }
      }
    }
  }

  void install_task(Slot& slot, const Task& task) {
    slot = Slot{};
    slot.busy = true;
    slot.task = task;
    slot.metric = Metric{};
    slot.charged = Metric{};
  }

  void sampler_pass(int server_idx) {
    Server& server = servers[server_idx];
    std::vector<ThreadSlot> view;
    view.reserve(server.slots.size());
    for (size_t i = 0; i < server.slots.size(); ++i) {
      Slot& slot = server.slots[i];
      ThreadSlot t;
      t.thread_id = static_cast<int>(i);
      if (slot.busy || slot.done) {
        t.query = slot.task.query;
        t.task = slot.task.task_id;
        t.metric = slot.metric;
        if (slot.done) slot.sampled_done = true;
      }
      view.push_back(t);
    }
    double heap_fraction =
        sc.accounting.heap_capacity_bytes > 0
            ? static_cast<double>(server.mem_in_use) /
                  static_cast<double>(sc.accounting.heap_capacity_bytes)
            : 0.0;
    bool tripped = heap_fraction >= sc.accounting.usage_threshold;
    UsageSnapshot snapshot;
    snapshot.heap_fraction = heap_fraction;
    auto evicted =
        server.accountant.sample_and_aggregate(view, tripped, &snapshot);
    for (const auto& ev : evicted) accounted[ev.query] += ev.usage;
    if (tripped) {
      for (int64_t victim : kill_policy(snapshot)) {
        cancel_query_on_server(server_idx, victim, QueryOutcome::kKilled);
      }
    }
  }

  // ---- phase 4: rebalance driver -------------------------------------------

  int server_index_of(const std::string& name) const {
    return std::stoi(name.substr(7));
  }

  bool batch_quiesced(const Rebalance& rb) const {
    for (int idx : rb.batch_idx) {
      const Server& server = servers[idx];
      if (!server.queue.empty() || !server.subqueries.empty()) return false;
      for (const Slot& slot : server.slots) {
        if (slot.busy) return false;
      }
    }
    for (const auto& msg : server_msgs) {
      if (std::find(rb.batch_idx.begin(), rb.batch_idx.end(), msg.server) !=
          rb.batch_idx.end()) {
        return false;
      }
    }
    return true;
  }

  void annotate_rebalance_step() {
    const TraceStep& step = rebalance->trace.steps.back();
    int min_serving = INT32_MAX;
    for (const auto& [_, n] : step.serving) min_serving = std::min(min_serving, n);
    RebalanceAnnotation ann;
    ann.time_ms = static_cast<double>(clock) * sc.tick_ms;
    ann.action = step.action == TraceStep::Action::kRebalancing ? "rebalancing"
                                                                : "progress";
    ann.hosts = step.drained_hosts;
    ann.min_serving = step.serving.empty() ? -1 : min_serving;
    series.rebalance_steps.push_back(std::move(ann));
  }

  void advance_rebalance() {
    if (!rebalance) return;
    Rebalance& rb = *rebalance;
    switch (rb.phase) {
      case Rebalance::Phase::kWaiting:
        if (clock >= rb.start_tick) rb.phase = Rebalance::Phase::kIdle;
        break;
      case Rebalance::Phase::kIdle: {
        rb.state.enable_converged_hosts();
        if (rb.state.all_converged()) {
          rb.phase = Rebalance::Phase::kDone;
          rb.trace.final_assignment = rb.state.assignment();
          break;
        }
        auto hosts = select_hosts(rb.state);
        if (!hosts.empty()) {
          rb.batch = hosts;
          rb.batch_idx.clear();
          for (const auto& h : hosts) {
            int idx = server_index_of(h);
            rb.batch_idx.push_back(idx);
            drained[idx] = true;
          }
          rb.deadline = clock + rb.drain_timeout_ticks;
          rb.phase = Rebalance::Phase::kDraining;
        } else {
          size_t before = rb.trace.steps.size();
          progress_step(rb.state, rb.opts, rb.trace);
          annotate_rebalance_step();
          if (rb.trace.steps[before].added.empty()) {
            rb.trace.stalled = true;
            series.warnings.push_back("rebalance stalled: no drainable host "
                                      "and no addable segment");
            rb.phase = Rebalance::Phase::kDone;
            break;
          }
          rb.deadline =
              clock + std::max<int64_t>(1, ms_to_ticks(rb.trace.steps.back().transfer_ms,
                                                       sc.tick_ms));
          rb.batch.clear();
          rb.batch_idx.clear();
          rb.phase = Rebalance::Phase::kTransferring;
        }
        break;
      }
      case Rebalance::Phase::kDraining:
        if (batch_quiesced(rb) || clock >= rb.deadline) {
          rebalancing_step(rb.state, rb.batch, rb.opts, rb.trace);
          annotate_rebalance_step();
          rb.deadline =
              clock + std::max<int64_t>(1, ms_to_ticks(rb.trace.steps.back().transfer_ms,
                                                       sc.tick_ms));
          rb.phase = Rebalance::Phase::kTransferring;
        }
        break;
      case Rebalance::Phase::kTransferring:
        if (clock >= rb.deadline) {
          for (int idx : rb.batch_idx) drained[idx] = false;
          rb.batch.clear();
          rb.batch_idx.clear();
          rb.phase = Rebalance::Phase::kIdle;
        }
        break;
      case Rebalance::Phase::kDone:
        break;
    }
  }

  // ---- phase 5: conservation -----------------------------------------------

  // Every live query must be physically somewhere: in transit, queued,
  // executing, or awaiting sub-query responses; every terminal query must
  // be nowhere.
  void check_conservation_now() {
    int64_t live = 0;
    for (const auto& q : queries) {
      if (!q.terminal) ++live;
    }
    if (live + terminal_count != injected) {
      series.conservation_violations++;
      return;
    }
    std::set<int64_t> present;
    for (const auto& msg : server_msgs) present.insert(msg.sub.query);
    for (const auto& r : responses) present.insert(r.query);
    for (const auto& server : servers) {
      for (const auto& [q, _] : server.subqueries) present.insert(q);
    }
    for (size_t id = 0; id < queries.size(); ++id) {
      const QueryState& q = queries[id];
      bool here = present.count(static_cast<int64_t>(id)) > 0;
      if (!q.terminal && !here) series.conservation_violations++;
      if (q.terminal && here) series.conservation_violations++;
    }
  }

  // ---- the tick -------------------------------------------------------------

  void tick() {
    deliver_messages();
    if (clock < total_ticks) inject_arrivals();
    advance_servers();
    advance_rebalance();
    if (sc.check_conservation && clock % window_ticks == 0) {
      check_conservation_now();
    }
    ++clock;
  }

  bool drained_work() const {
    if (!server_msgs.empty() || !responses.empty()) return false;
    for (const auto& server : servers) {
      if (!server.queue.empty() || !server.subqueries.empty()) return false;
      for (const auto& slot : server.slots) {
        if (slot.busy) return false;
      }
    }
    return true;
  }

  bool done() const {
    if (clock < total_ticks) return false;
    // Let in-flight work finish, with a hard cap to guarantee termination.
    if (clock >= total_ticks + ms_to_ticks(10000, sc.tick_ms)) return true;
    return drained_work() &&
           (!rebalance || rebalance->phase == Rebalance::Phase::kDone ||
            rebalance->phase == Rebalance::Phase::kWaiting);
  }

  MetricsSeries finish() {
    // Flush the accountant: two idle passes bank and evict everything.
    for (int s = 0; s < static_cast<int>(servers.size()); ++s) {
      Server& server = servers[s];
      std::vector<ThreadSlot> idle(server.slots.size());
      for (size_t i = 0; i < idle.size(); ++i) {
        idle[i].thread_id = static_cast<int>(i);
      }
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& ev :
             server.accountant.sample_and_aggregate(idle, false, nullptr)) {
          accounted[ev.query] += ev.usage;
        }
      }
    }
    for (const QueryRecord& rec : series.queries) {
      if (rec.outcome != QueryOutcome::kCompleted) continue;
      const QueryState& q = queries[rec.id];
      if (q.truth.cpu_ns == 0) continue;
      auto it = accounted.find(rec.id);
      AccountingSample sample;
      sample.query = rec.id;
      sample.truth = q.truth;
      sample.accounted = it == accounted.end() ? Metric{} : it->second;
      series.accounting_samples.push_back(sample);
    }
    for (int w = 0; w < num_windows; ++w) {
      auto& lat = window_latencies[w];
      std::sort(lat.begin(), lat.end());
      series.latency[w].count = static_cast<int64_t>(lat.size());
      series.latency[w].p50 = percentile_nearest_rank(lat, 50);
      series.latency[w].p90 = percentile_nearest_rank(lat, 90);
      series.latency[w].p95 = percentile_nearest_rank(lat, 95);
      series.latency[w].p99 = percentile_nearest_rank(lat, 99);
    }
    if (rebalance) {
      rebalance->trace.final_assignment = rebalance->state.assignment();
      series.rebalance_trace = rebalance->trace;
    }
    for (const auto& broker : brokers) {
      for (const auto& w : broker.selector.warnings()) {
        series.warnings.push_back(w);
      }
    }
    return std::move(series);
  }
};

Simulation::Simulation(Scenario scenario)
    : impl_(std::make_unique<Impl>(std::move(scenario))) {}
Simulation::~Simulation() = default;
Simulation::Simulation(Simulation&&) noexcept = default;
Simulation& Simulation::operator=(Simulation&&) noexcept = default;

void Simulation::tick() { impl_->tick(); }
bool Simulation::done() const { return impl_->done(); }
int64_t Simulation::clock() const { return impl_->clock; }
MetricsSeries Simulation::finish() { return impl_->finish(); }

MetricsSeries run(const Scenario& scenario) {
  Simulation sim(scenario);
  while (!sim.done()) sim.tick();
  return sim.finish();
}

double MetricsSeries::mean_abs_accounting_error() const {
  double total = 0;
  int64_t n = 0;
  for (const auto& s : accounting_samples) {
    if (s.truth.cpu_ns <= 0) continue;
    total += std::abs(static_cast<double>(s.accounted.cpu_ns - s.truth.cpu_ns)) /
             static_cast<double>(s.truth.cpu_ns);
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

DiversionReport measure_diversion(const MetricsSeries& series,
                                  int degraded_server, double fair_share) {
  DiversionReport report;
  if (series.degradations.empty()) return report;
  const DegradationEvent& ev = series.degradations.front();
  const double window = series.window_ms;
  auto share_in = [&](int w, int server) -> std::optional<double> {
    int64_t total = 0;
    for (int s = 0; s < series.num_servers; ++s) total += series.dispatched[w][s];
    if (total == 0) return std::nullopt;
    return static_cast<double>(series.dispatched[w][server]) /
           static_cast<double>(total);
  };
  for (int w = 0; w < series.windows(); ++w) {
    double start = w * window;
    if (start < ev.start_ms) continue;
    auto share = share_in(w, degraded_server);
    if (!share) continue;
    if (*share < 0.2 * fair_share) {
      report.diversion_ms = (start + window) - ev.start_ms;
      break;
    }
  }
  for (int w = 0; w < series.windows(); ++w) {
    double start = w * window;
    if (start < ev.end_ms) continue;
    auto share = share_in(w, degraded_server);
    if (!share) continue;
    if (*share >= 0.8 * fair_share) {
      report.recovery_ms = (start + window) - ev.end_ms;
      break;
    }
  }
  double sum = 0;
  int n = 0;
  for (int w = 0; w < series.windows(); ++w) {
    double start = w * window;
    if (start < ev.start_ms || start + window > ev.end_ms) continue;
    int64_t total = 0;
    for (int s = 0; s < series.num_servers; ++s) total += series.dispatched[w][s];
    if (total == 0) continue;
    double mean = 0;
    std::vector<double> shares;
    for (int s = 0; s < series.num_servers; ++s) {
      if (s == degraded_server) continue;
      double share = static_cast<double>(series.dispatched[w][s]) /
                     static_cast<double>(total);
      shares.push_back(share);
      mean += share;
    }
    if (shares.empty()) continue;
    mean /= static_cast<double>(shares.size());
    double var = 0;
    for (double s : shares) var += (s - mean) * (s - mean);
    sum += std::sqrt(var / static_cast<double>(shares.size()));
    ++n;
  }
  report.oscillation_index = n == 0 ? 0 : sum / n;
  return report;
}

double measure_degradation_prevention(const MetricsSeries& series,
                                      double threshold_multiple) {
  if (series.degradations.empty()) return 1.0;
  const DegradationEvent& ev = series.degradations.front();
  std::vector<double> healthy;
  for (const QueryRecord& q : series.queries) {
    if (q.outcome == QueryOutcome::kCompleted && q.arrival_ms < ev.start_ms) {
      healthy.push_back(q.latency_ms);
    }
  }
  std::sort(healthy.begin(), healthy.end());
  if (healthy.empty()) return 1.0;
  double baseline = healthy[healthy.size() / 2];
  double threshold = threshold_multiple * baseline;
  int64_t in_window = 0;
  int64_t prevented = 0;
  for (const QueryRecord& q : series.queries) {
    if (q.arrival_ms < ev.start_ms || q.arrival_ms >= ev.end_ms) continue;
    ++in_window;
    if (q.outcome == QueryOutcome::kCompleted && q.latency_ms < threshold) {
      ++prevented;
    }
  }
  if (in_window == 0) return 1.0;
  return static_cast<double>(prevented) / static_cast<double>(in_window);
}

}  // namespace olapsim
