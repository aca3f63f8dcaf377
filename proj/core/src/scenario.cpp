#include "olapsim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace olapsim {

namespace {

using nlohmann::json;

// Walks one JSON object, tracking consumed keys so leftovers can be
// reported as unknown, and collecting typed-access errors by field path.
class Fields {
 public:
  Fields(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) {
      errors_.push_back(path_ + ": expected an object");
      broken_ = true;
    }
  }

  ~Fields() {
    if (broken_) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!consumed_.count(it.key())) {
        errors_.push_back(path_ + "." + it.key() + ": unknown field");
      }
    }
  }

  bool has(const std::string& key) {
    return !broken_ && j_.contains(key);
  }

  const json* take(const std::string& key) {
    if (broken_ || !j_.contains(key)) return nullptr;
    consumed_.insert(key);
    return &j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    const json* v = take(key);
    if (v == nullptr) return fallback;
    if (!v->is_number()) {
      errors_.push_back(path_ + "." + key + ": expected a number");
      return fallback;
    }
    return v->get<double>();
  }

  int64_t integer(const std::string& key, int64_t fallback) {
    const json* v = take(key);
    if (v == nullptr) return fallback;
    if (v->is_number_integer()) return v->get<int64_t>();
    if (v->is_number_float()) {
      double d = v->get<double>();
      if (d == std::floor(d)) return static_cast<int64_t>(d);
    }
    errors_.push_back(path_ + "." + key + ": expected an integer");
    return fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = take(key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) {
      errors_.push_back(path_ + "." + key + ": expected a boolean");
      return fallback;
    }
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = take(key);
    if (v == nullptr) return fallback;
    if (!v->is_string()) {
      errors_.push_back(path_ + "." + key + ": expected a string");
      return fallback;
    }
    return v->get<std::string>();
  }

  const json* array(const std::string& key) {
    const json* v = take(key);
    if (v == nullptr) return nullptr;
    if (!v->is_array()) {
      errors_.push_back(path_ + "." + key + ": expected an array");
      return nullptr;
    }
    return v;
  }

  const json* object(const std::string& key) {
    const json* v = take(key);
    if (v == nullptr) return nullptr;
    if (!v->is_object()) {
      errors_.push_back(path_ + "." + key + ": expected an object");
      return nullptr;
    }
    return v;
  }

  void error(const std::string& key, const std::string& message) {
    errors_.push_back(path_ + "." + key + ": " + message);
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> consumed_;
  bool broken_ = false;
};

std::optional<json> parse_json(const std::string& text,
                               std::vector<std::string>& errors) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    errors.push_back("$: invalid JSON");
    return std::nullopt;
  }
  return j;
}

std::optional<std::string> slurp(const std::string& path,
                                 std::vector<std::string>& errors) {
  std::ifstream in(path);
  if (!in) {
    errors.push_back("$: cannot open " + path);
    return std::nullopt;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

HostAssignment parse_host_assignment(const json& j, const std::string& path,
                                     std::vector<std::string>& errors) {
  HostAssignment out;
  if (!j.is_object()) {
    errors.push_back(path + ": expected an object of host -> [segments]");
    return out;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_array()) {
      errors.push_back(path + "." + it.key() + ": expected an array");
      continue;
    }
    auto& segs = out[it.key()];
    for (const auto& s : it.value()) {
      if (!s.is_string()) {
        errors.push_back(path + "." + it.key() + ": segment ids must be strings");
        continue;
      }
      segs.insert(s.get<std::string>());
    }
  }
  return out;
}

WorkloadConfig parse_workload_config(const json& j, const std::string& path,
                                     std::vector<std::string>& errors) {
  WorkloadConfig config;
  Fields f(j, path, errors);
  config.workload_name = f.text("workloadName", "");
  if (config.workload_name.empty()) {
    f.error("workloadName", "must be a non-empty string");
  }
  if (const json* nodes = f.array("nodeConfigs")) {
    for (size_t i = 0; i < nodes->size(); ++i) {
      std::string node_path = path + ".nodeConfigs[" + std::to_string(i) + "]";
      Fields nf((*nodes)[i], node_path, errors);
      NodeBudgetConfig node;
      std::string type = nf.text("nodeType", "");
      if (type == "BROKER") {
        node.node_type = NodeType::kBroker;
      } else if (type == "SERVER") {
        node.node_type = NodeType::kServer;
      } else {
        nf.error("nodeType", "must be BROKER or SERVER");
      }
      if (const json* profile = nf.object("enforcementProfile")) {
        Fields pf(*profile, node_path + ".enforcementProfile", errors);
        node.enforcement_profile.cpu_cost_ns = pf.integer("cpuCostNs", 0);
        node.enforcement_profile.memory_cost_bytes = pf.integer("memoryCostBytes", 0);
        if (node.enforcement_profile.cpu_cost_ns <= 0) {
          pf.error("cpuCostNs", "must be > 0");
        }
        if (node.enforcement_profile.memory_cost_bytes <= 0) {
          pf.error("memoryCostBytes", "must be > 0");
        }
      } else {
        nf.error("enforcementProfile", "required");
      }
      if (const json* scheme = nf.object("propagationScheme")) {
        Fields sf(*scheme, node_path + ".propagationScheme", errors);
        std::string scheme_type = sf.text("type", "");
        if (scheme_type == "TABLE") {
          node.propagation_scheme.type = PropagationType::kTable;
          if (const json* tables = sf.array("tables")) {
            for (const auto& t : *tables) {
              if (t.is_string()) {
                node.propagation_scheme.tables.push_back(t.get<std::string>());
              } else {
                sf.error("tables", "entries must be strings");
              }
            }
          } else {
            sf.error("tables", "required for the TABLE scheme");
          }
        } else if (scheme_type == "TENANT") {
          node.propagation_scheme.type = PropagationType::kTenant;
          node.propagation_scheme.tenant = sf.text("tenant", "");
          if (node.propagation_scheme.tenant.empty()) {
            sf.error("tenant", "required for the TENANT scheme");
          }
        } else {
          sf.error("type", "must be TABLE or TENANT");
        }
      } else {
        nf.error("propagationScheme", "required");
      }
      config.node_configs.push_back(std::move(node));
    }
  } else if (errors.empty()) {
    f.error("nodeConfigs", "required");
  }
  return config;
}

}  // namespace

Parsed<Scenario> parse_scenario_text(const std::string& text) {
  Parsed<Scenario> out;
  auto j = parse_json(text, out.errors);
  if (!j) return out;

  Scenario sc;
  {
    Fields f(*j, "$", out.errors);
    sc.tick_ms = f.number("tick_ms", 0.1);
    sc.duration_ms = f.number("duration_ms", 1000);
    sc.seed = static_cast<uint64_t>(f.integer("seed", 0));
    sc.metrics_window_ms = f.number("metrics_window_ms", 100);
    sc.poisson_arrivals = f.boolean("poisson_arrivals", false);
    sc.check_conservation = f.boolean("check_conservation", false);
    if (sc.tick_ms <= 0) f.error("tick_ms", "must be > 0");
    if (sc.duration_ms < 0) f.error("duration_ms", "must be >= 0");
    if (sc.metrics_window_ms <= 0) f.error("metrics_window_ms", "must be > 0");

    if (const json* topo = f.object("topology")) {
      Fields tf(*topo, "$.topology", out.errors);
      sc.brokers = static_cast<int>(tf.integer("brokers", 1));
      sc.mss_count = static_cast<int>(tf.integer("mss_count", 1));
      sc.servers_per_mss = static_cast<int>(tf.integer("servers_per_mss", 1));
      sc.threads_per_server = static_cast<int>(tf.integer("threads_per_server", 1));
      sc.message_delay_ticks = static_cast<int>(tf.integer("message_delay_ticks", 1));
      sc.server_queue_cap = static_cast<int>(tf.integer("queue_cap", 0));
      sc.table_name = tf.text("table", "table");
      sc.tenant = tf.text("tenant", "default");
      if (sc.brokers < 1) tf.error("brokers", "must be >= 1");
      if (sc.mss_count < 1) tf.error("mss_count", "must be >= 1");
      if (sc.servers_per_mss < 1) tf.error("servers_per_mss", "must be >= 1");
      if (sc.threads_per_server < 1) tf.error("threads_per_server", "must be >= 1");
      if (sc.message_delay_ticks < 0) tf.error("message_delay_ticks", "must be >= 0");
    }

    if (const json* workloads = f.array("workloads")) {
      for (size_t i = 0; i < workloads->size(); ++i) {
        std::string path = "$.workloads[" + std::to_string(i) + "]";
        Fields wf((*workloads)[i], path, out.errors);
        WorkloadProfile wl;
        wl.label = wf.text("label", "workload-" + std::to_string(i));
        wl.qps = wf.number("qps", 0);
        wl.base_latency_ms = wf.number("base_latency_ms", 1.0);
        wl.work_units = static_cast<int>(wf.integer("work_units", 0));
        wl.segments_per_query = static_cast<int>(wf.integer("segments_per_query", 1));
        wl.initial_burst = static_cast<int>(wf.integer("initial_burst", 0));
        wl.workload_name = wf.text("workload_name", "");
        wl.cpu_ns_per_unit = wf.integer("cpu_ns_per_unit", 1000);
        wl.mem_bytes_per_unit = wf.integer("mem_bytes_per_unit", 1000);
        if (wl.qps < 0) wf.error("qps", "must be >= 0");
        if (wl.base_latency_ms <= 0 && wl.work_units <= 0) {
          wf.error("base_latency_ms", "need a positive base latency or work_units");
        }
        if (wl.segments_per_query < 1) wf.error("segments_per_query", "must be >= 1");
        if (wl.initial_burst < 0) wf.error("initial_burst", "must be >= 0");
        sc.workloads.push_back(std::move(wl));
      }
    }

    if (const json* events = f.array("events")) {
      for (size_t i = 0; i < events->size(); ++i) {
        std::string path = "$.events[" + std::to_string(i) + "]";
        Fields ef((*events)[i], path, out.errors);
        DegradationEvent ev;
        ev.server = static_cast<int>(ef.integer("server", 0));
        ev.start_ms = ef.number("start_ms", 0);
        ev.end_ms = ef.number("end_ms", 0);
        ev.progress_probability = ef.number("progress_probability", 1.0);
        if (ev.progress_probability <= 0 || ev.progress_probability > 1) {
          ef.error("progress_probability", "must be in (0, 1]");
        }
        if (ev.end_ms < ev.start_ms) ef.error("end_ms", "must be >= start_ms");
        if (ev.server < 0 || ev.server >= sc.num_servers()) {
          ef.error("server", "out of range");
        }
        sc.degradations.push_back(ev);
      }
    }

    if (const json* policy = f.object("policy")) {
      Fields pf(*policy, "$.policy", out.errors);
      std::string scorer = pf.text("scorer", "hybrid");
      if (scorer == "round_robin") {
        sc.policy.scorer = Scorer::kRoundRobin;
      } else if (scorer == "inflight") {
        sc.policy.scorer = Scorer::kInflight;
      } else if (scorer == "latency_ema") {
        sc.policy.scorer = Scorer::kLatencyEma;
      } else if (scorer == "hybrid") {
        sc.policy.scorer = Scorer::kHybrid;
      } else {
        pf.error("scorer", "must be round_robin, inflight, latency_ema or hybrid");
      }
      std::string mode = pf.text("mode", "argmin");
      if (mode == "argmin") {
        sc.policy.mode = SelectionMode::kArgmin;
      } else if (mode == "softmax") {
        sc.policy.mode = SelectionMode::kSoftmax;
      } else {
        pf.error("mode", "must be argmin or softmax");
      }
      sc.policy.alpha = pf.number("alpha", 2.0 / 3.0);
      sc.policy.exponent = static_cast<int>(pf.integer("exponent", 3));
      sc.policy.latency_prior_ms = pf.number("latency_prior_ms", 1.0);
      sc.policy.softmax_sharpness = pf.number("softmax_sharpness", 1.0);
      if (sc.policy.alpha <= 0 || sc.policy.alpha > 1) {
        pf.error("alpha", "must be in (0, 1]");
      }
      if (sc.policy.exponent < 1) pf.error("exponent", "must be >= 1");
      if (sc.policy.softmax_sharpness <= 0) {
        pf.error("softmax_sharpness", "must be > 0");
      }
      std::string routing = pf.text("routing", "mss");
      if (routing == "mss") {
        sc.routing = RoutingMode::kMssSelect;
      } else if (routing == "replica_group_random") {
        sc.routing = RoutingMode::kReplicaGroupRandom;
      } else {
        pf.error("routing", "must be mss or replica_group_random");
      }
    }

    if (const json* budgets = f.object("budgets")) {
      Fields bf(*budgets, "$.budgets", out.errors);
      sc.accounting.window_ms = bf.number("window_ms", 5000);
      sc.accounting.sampling_interval_ms = bf.number("sampling_interval_ms", 1.0);
      sc.accounting.enforcement_interval_ms =
          bf.number("enforcement_interval_ms", 1.0);
      sc.accounting.heap_capacity_bytes =
          bf.integer("heap_capacity_bytes", 8LL << 30);
      sc.accounting.usage_threshold = bf.number("usage_threshold", 0.85);
      sc.accounting.provisional_cpu_ns = bf.integer("provisional_cpu_ns", 0);
      sc.accounting.provisional_mem_bytes = bf.integer("provisional_mem_bytes", 0);
      sc.accounting.strict_workloads = bf.boolean("strict_workloads", false);
      if (sc.accounting.window_ms <= 0) bf.error("window_ms", "must be > 0");
      if (sc.accounting.sampling_interval_ms <= 0) {
        bf.error("sampling_interval_ms", "must be > 0");
      }
      if (const json* wls = bf.array("workloads")) {
        for (size_t i = 0; i < wls->size(); ++i) {
          sc.budget_configs.push_back(parse_workload_config(
              (*wls)[i], "$.budgets.workloads[" + std::to_string(i) + "]",
              out.errors));
        }
      }
    }

    if (f.has("rebalance")) {
      const json* reb = f.object("rebalance");
      if (reb != nullptr) {
        Fields rf(*reb, "$.rebalance", out.errors);
        RebalancePlanSpec plan;
        plan.start_ms = rf.number("start_ms", 0);
        plan.min_serving = static_cast<int>(rf.integer("min_serving", -1));
        plan.progress_batch = static_cast<int>(rf.integer("progress_batch", 0));
        plan.drain_timeout_ms = rf.number("drain_timeout_ms", 50);
        plan.transfer_ms_per_mb = rf.number("transfer_ms_per_mb", 1.0);
        if (const json* initial = rf.take("initial")) {
          plan.initial =
              parse_host_assignment(*initial, "$.rebalance.initial", out.errors);
        } else {
          rf.error("initial", "required");
        }
        if (const json* desired = rf.take("desired")) {
          plan.desired =
              parse_host_assignment(*desired, "$.rebalance.desired", out.errors);
        } else {
          rf.error("desired", "required");
        }
        sc.rebalance = std::move(plan);
      }
    }
  }

  if (out.errors.empty()) out.value = std::move(sc);
  return out;
}

Parsed<Scenario> parse_scenario_file(const std::string& path) {
  Parsed<Scenario> out;
  auto text = slurp(path, out.errors);
  if (!text) return out;
  return parse_scenario_text(*text);
}

nlohmann::json scenario_to_json(const Scenario& sc) {
  json j;
  j["tick_ms"] = sc.tick_ms;
  j["duration_ms"] = sc.duration_ms;
  j["seed"] = sc.seed;
  j["metrics_window_ms"] = sc.metrics_window_ms;
  j["poisson_arrivals"] = sc.poisson_arrivals;
  j["check_conservation"] = sc.check_conservation;
  j["topology"] = {
      {"brokers", sc.brokers},
      {"mss_count", sc.mss_count},
      {"servers_per_mss", sc.servers_per_mss},
      {"threads_per_server", sc.threads_per_server},
      {"message_delay_ticks", sc.message_delay_ticks},
      {"queue_cap", sc.server_queue_cap},
      {"table", sc.table_name},
      {"tenant", sc.tenant},
  };
  j["workloads"] = json::array();
  for (const auto& wl : sc.workloads) {
    j["workloads"].push_back({{"label", wl.label},
                              {"qps", wl.qps},
                              {"base_latency_ms", wl.base_latency_ms},
                              {"work_units", wl.work_units},
                              {"segments_per_query", wl.segments_per_query},
                              {"initial_burst", wl.initial_burst},
                              {"workload_name", wl.workload_name},
                              {"cpu_ns_per_unit", wl.cpu_ns_per_unit},
                              {"mem_bytes_per_unit", wl.mem_bytes_per_unit}});
  }
  j["events"] = json::array();
  for (const auto& ev : sc.degradations) {
    j["events"].push_back({{"server", ev.server},
                           {"start_ms", ev.start_ms},
                           {"end_ms", ev.end_ms},
                           {"progress_probability", ev.progress_probability}});
  }
  const char* scorer = nullptr;
  switch (sc.policy.scorer) {
    case Scorer::kRoundRobin: scorer = "round_robin"; break;
    case Scorer::kInflight: scorer = "inflight"; break;
    case Scorer::kLatencyEma: scorer = "latency_ema"; break;
    case Scorer::kHybrid: scorer = "hybrid"; break;
  }
  j["policy"] = {
      {"scorer", scorer},
      {"mode", sc.policy.mode == SelectionMode::kArgmin ? "argmin" : "softmax"},
      {"alpha", sc.policy.alpha},
      {"exponent", sc.policy.exponent},
      {"latency_prior_ms", sc.policy.latency_prior_ms},
      {"softmax_sharpness", sc.policy.softmax_sharpness},
      {"routing", sc.routing == RoutingMode::kMssSelect ? "mss"
                                                        : "replica_group_random"},
  };
  json budgets;
  budgets["window_ms"] = sc.accounting.window_ms;
  budgets["sampling_interval_ms"] = sc.accounting.sampling_interval_ms;
  budgets["enforcement_interval_ms"] = sc.accounting.enforcement_interval_ms;
  budgets["heap_capacity_bytes"] = sc.accounting.heap_capacity_bytes;
  budgets["usage_threshold"] = sc.accounting.usage_threshold;
  budgets["provisional_cpu_ns"] = sc.accounting.provisional_cpu_ns;
  budgets["provisional_mem_bytes"] = sc.accounting.provisional_mem_bytes;
  budgets["strict_workloads"] = sc.accounting.strict_workloads;
  budgets["workloads"] = json::array();
  for (const auto& config : sc.budget_configs) {
    budgets["workloads"].push_back(workload_config_to_json(config));
  }
  j["budgets"] = std::move(budgets);
  if (sc.rebalance) {
    json reb;
    reb["start_ms"] = sc.rebalance->start_ms;
    reb["min_serving"] = sc.rebalance->min_serving;
    reb["progress_batch"] = sc.rebalance->progress_batch;
    reb["drain_timeout_ms"] = sc.rebalance->drain_timeout_ms;
    reb["transfer_ms_per_mb"] = sc.rebalance->transfer_ms_per_mb;
    json initial = json::object();
    for (const auto& [h, segs] : sc.rebalance->initial) {
      initial[h] = std::vector<std::string>(segs.begin(), segs.end());
    }
    json desired = json::object();
    for (const auto& [h, segs] : sc.rebalance->desired) {
      desired[h] = std::vector<std::string>(segs.begin(), segs.end());
    }
    reb["initial"] = std::move(initial);
    reb["desired"] = std::move(desired);
    j["rebalance"] = std::move(reb);
  }
  return j;
}

Parsed<TopologySpec> parse_topology_text(const std::string& text) {
  Parsed<TopologySpec> out;
  auto j = parse_json(text, out.errors);
  if (!j) return out;
  TopologySpec spec;
  {
    Fields f(*j, "$", out.errors);
    spec.replica_groups = static_cast<int>(f.integer("replica_groups", 1));
    spec.instances_per_rg = static_cast<int>(f.integer("instances_per_rg", 1));
    if (spec.replica_groups < 1) f.error("replica_groups", "must be >= 1");
    if (spec.instances_per_rg < 1) f.error("instances_per_rg", "must be >= 1");
    if (const json* instances = f.array("instances")) {
      for (size_t i = 0; i < instances->size(); ++i) {
        std::string path = "$.instances[" + std::to_string(i) + "]";
        Fields inf((*instances)[i], path, out.errors);
        Instance inst;
        inst.id = inf.text("id", "");
        inst.mz = inf.text("mz", "");
        if (inst.id.empty()) inf.error("id", "must be non-empty");
        if (inst.mz.empty()) inf.error("mz", "must be non-empty");
        spec.instances.push_back(std::move(inst));
      }
    } else if (out.errors.empty()) {
      f.error("instances", "required");
    }
    if (const json* segments = f.array("segments")) {
      for (size_t i = 0; i < segments->size(); ++i) {
        std::string path = "$.segments[" + std::to_string(i) + "]";
        Fields sf((*segments)[i], path, out.errors);
        std::string id = sf.text("id", "");
        int row = static_cast<int>(sf.integer("row", 0));
        int64_t size = sf.integer("size_bytes", 1 << 20);
        if (id.empty()) {
          sf.error("id", "must be non-empty");
          continue;
        }
        spec.segments.rows[id] = row;
        spec.segment_bytes[id] = size;
      }
    }
    if (const json* assignment = f.array("assignment")) {
      std::vector<std::vector<std::string>> rows;
      for (size_t r = 0; r < assignment->size(); ++r) {
        const json& row = (*assignment)[r];
        if (!row.is_array()) {
          out.errors.push_back("$.assignment[" + std::to_string(r) +
                               "]: expected an array of instance ids");
          continue;
        }
        std::vector<std::string> ids;
        for (const auto& cell : row) {
          if (cell.is_string()) {
            ids.push_back(cell.get<std::string>());
          } else {
            out.errors.push_back("$.assignment[" + std::to_string(r) +
                                 "]: cells must be strings");
          }
        }
        rows.push_back(std::move(ids));
      }
      spec.assignment = std::move(rows);
    }
  }
  if (out.errors.empty()) out.value = std::move(spec);
  return out;
}

Parsed<TopologySpec> parse_topology_file(const std::string& path) {
  Parsed<TopologySpec> out;
  auto text = slurp(path, out.errors);
  if (!text) return out;
  return parse_topology_text(*text);
}

Parsed<RebalancePlanFile> parse_rebalance_plan_text(const std::string& text) {
  Parsed<RebalancePlanFile> out;
  auto j = parse_json(text, out.errors);
  if (!j) return out;
  RebalancePlanFile plan;
  {
    Fields f(*j, "$", out.errors);
    plan.min_serving = static_cast<int>(f.integer("min_serving", -1));
    plan.progress_batch = static_cast<int>(f.integer("progress_batch", 0));
    if (const json* initial = f.take("initial")) {
      plan.initial = parse_host_assignment(*initial, "$.initial", out.errors);
    } else {
      f.error("initial", "required");
    }
    if (const json* desired = f.take("desired")) {
      plan.desired = parse_host_assignment(*desired, "$.desired", out.errors);
    } else {
      f.error("desired", "required");
    }
    if (const json* bytes = f.object("segment_bytes")) {
      for (auto it = bytes->begin(); it != bytes->end(); ++it) {
        if (it.value().is_number()) {
          plan.segment_bytes[it.key()] = it.value().get<int64_t>();
        } else {
          out.errors.push_back("$.segment_bytes." + it.key() +
                               ": expected a number");
        }
      }
    }
  }
  if (out.errors.empty()) out.value = std::move(plan);
  return out;
}

Parsed<RebalancePlanFile> parse_rebalance_plan_file(const std::string& path) {
  Parsed<RebalancePlanFile> out;
  auto text = slurp(path, out.errors);
  if (!text) return out;
  return parse_rebalance_plan_text(*text);
}

Parsed<std::vector<WorkloadConfig>> parse_workloads_text(const std::string& text) {
  Parsed<std::vector<WorkloadConfig>> out;
  auto j = parse_json(text, out.errors);
  if (!j) return out;
  std::vector<WorkloadConfig> configs;
  if (j->is_array()) {
    for (size_t i = 0; i < j->size(); ++i) {
      configs.push_back(parse_workload_config(
          (*j)[i], "$[" + std::to_string(i) + "]", out.errors));
    }
  } else {
    configs.push_back(parse_workload_config(*j, "$", out.errors));
  }
  if (out.errors.empty()) out.value = std::move(configs);
  return out;
}

Parsed<std::vector<WorkloadConfig>> parse_workloads_file(const std::string& path) {
  Parsed<std::vector<WorkloadConfig>> out;
  auto text = slurp(path, out.errors);
  if (!text) return out;
  return parse_workloads_text(*text);
}

nlohmann::json workload_config_to_json(const WorkloadConfig& config) {
  json nodes = json::array();
  for (const auto& node : config.node_configs) {
    json scheme;
    if (node.propagation_scheme.type == PropagationType::kTable) {
      scheme = {{"type", "TABLE"}, {"tables", node.propagation_scheme.tables}};
    } else {
      scheme = {{"type", "TENANT"}, {"tenant", node.propagation_scheme.tenant}};
    }
    nodes.push_back(
        {{"nodeType", node.node_type == NodeType::kBroker ? "BROKER" : "SERVER"},
         {"enforcementProfile",
          {{"cpuCostNs", node.enforcement_profile.cpu_cost_ns},
           {"memoryCostBytes", node.enforcement_profile.memory_cost_bytes}}},
         {"propagationScheme", std::move(scheme)}});
  }
  return json{{"workloadName", config.workload_name},
              {"nodeConfigs", std::move(nodes)}};
}

}  // namespace olapsim
