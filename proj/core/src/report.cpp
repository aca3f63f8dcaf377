#include "olapsim/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace olapsim {

namespace {

void emit_row(std::ostringstream& out, ReportFormat format, double window_start,
              const std::string& key, const std::string& metric, double value) {
  if (format == ReportFormat::kCsv) {
    out << window_start << ',' << key << ',' << metric << ',' << value << '\n';
  } else {
    nlohmann::json j{{"window_start_ms", window_start},
                     {"key", key},
                     {"metric", metric},
                     {"value", value}};
    out << j.dump() << '\n';
  }
}

}  // namespace

std::string series_to_table(const MetricsSeries& series, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kCsv) {
    out << "window_start_ms,key,metric,value\n";
  }
  for (int w = 0; w < series.windows(); ++w) {
    double start = w * series.window_ms;
    for (int s = 0; s < series.num_servers; ++s) {
      emit_row(out, format, start, series.server_names[s], "dispatched",
               static_cast<double>(series.dispatched[w][s]));
      emit_row(out, format, start, series.server_names[s], "completed",
               static_cast<double>(series.completed[w][s]));
    }
    const WindowLatency& lat = series.latency[w];
    emit_row(out, format, start, "all", "completed", static_cast<double>(lat.count));
    emit_row(out, format, start, "all", "latency_p50_ms", lat.p50);
    emit_row(out, format, start, "all", "latency_p90_ms", lat.p90);
    emit_row(out, format, start, "all", "latency_p95_ms", lat.p95);
    emit_row(out, format, start, "all", "latency_p99_ms", lat.p99);
    for (const auto& [label, windows] : series.workload_windows) {
      const WorkloadWindow& ww = windows[w];
      emit_row(out, format, start, label, "injected", static_cast<double>(ww.injected));
      emit_row(out, format, start, label, "completed", static_cast<double>(ww.completed));
      emit_row(out, format, start, label, "rejected", static_cast<double>(ww.rejected));
      emit_row(out, format, start, label, "cancelled", static_cast<double>(ww.cancelled));
      emit_row(out, format, start, label, "killed", static_cast<double>(ww.killed));
      emit_row(out, format, start, label, "charged_cpu_ns",
               static_cast<double>(ww.charged_cpu_ns));
      emit_row(out, format, start, label, "charged_mem_bytes",
               static_cast<double>(ww.charged_mem_bytes));
      emit_row(out, format, start, label, "true_cpu_ns",
               static_cast<double>(ww.true_cpu_ns));
      emit_row(out, format, start, label, "true_mem_bytes",
               static_cast<double>(ww.true_mem_bytes));
    }
  }
  return out.str();
}

nlohmann::json summarize(const MetricsSeries& series,
                         double prevention_threshold_multiple) {
  nlohmann::json j;
  j["duration_ms"] = series.duration_ms;
  j["windows"] = series.windows();

  std::vector<double> latencies;
  for (const auto& q : series.queries) {
    if (q.outcome == QueryOutcome::kCompleted) latencies.push_back(q.latency_ms);
  }
  std::sort(latencies.begin(), latencies.end());
  auto pct = [&](double p) -> double {
    if (latencies.empty()) return 0;
    size_t idx = static_cast<size_t>(std::ceil(p / 100.0 * latencies.size()));
    if (idx == 0) idx = 1;
    return latencies[std::min(idx - 1, latencies.size() - 1)];
  };
  j["latency_ms"] = {{"p50", pct(50)}, {"p90", pct(90)}, {"p95", pct(95)},
                     {"p99", pct(99)}, {"count", latencies.size()}};

  nlohmann::json workloads = nlohmann::json::object();
  for (const auto& [label, windows] : series.workload_windows) {
    WorkloadWindow total;
    for (const auto& ww : windows) {
      total.injected += ww.injected;
      total.completed += ww.completed;
      total.rejected += ww.rejected;
      total.cancelled += ww.cancelled;
      total.killed += ww.killed;
      total.charged_cpu_ns += ww.charged_cpu_ns;
      total.charged_mem_bytes += ww.charged_mem_bytes;
      total.true_cpu_ns += ww.true_cpu_ns;
      total.true_mem_bytes += ww.true_mem_bytes;
    }
    workloads[label] = {
        {"injected", total.injected},
        {"completed", total.completed},
        {"rejected", total.rejected},
        {"cancelled", total.cancelled},
        {"killed", total.killed},
        {"charged_cpu_ns", total.charged_cpu_ns},
        {"charged_mem_bytes", total.charged_mem_bytes},
        {"true_cpu_ns", total.true_cpu_ns},
        {"true_mem_bytes", total.true_mem_bytes},
    };
  }
  j["workloads"] = std::move(workloads);

  if (!series.accounting_samples.empty()) {
    j["accounting"] = {
        {"sampled_queries", series.accounting_samples.size()},
        {"mean_abs_error", series.mean_abs_accounting_error()},
    };
  }

  if (!series.degradations.empty()) {
    const DegradationEvent& ev = series.degradations.front();
    DiversionReport rep = measure_diversion(series, ev.server,
                                            1.0 / series.num_servers);
    nlohmann::json d;
    d["degraded_server"] = series.server_names[ev.server];
    d["diversion_ms"] =
        rep.diversion_ms ? nlohmann::json(*rep.diversion_ms) : "none";
    d["recovery_ms"] = rep.recovery_ms ? nlohmann::json(*rep.recovery_ms) : "none";
    d["oscillation_index"] = rep.oscillation_index;
    d["prevention_rate"] =
        measure_degradation_prevention(series, prevention_threshold_multiple);
    j["degradation"] = std::move(d);
  }

  if (!series.rebalance_steps.empty()) {
    nlohmann::json audit = nlohmann::json::array();
    for (const auto& step : series.rebalance_steps) {
      audit.push_back({{"time_ms", step.time_ms},
                       {"action", step.action},
                       {"hosts", step.hosts},
                       {"min_serving", step.min_serving}});
    }
    j["rebalance_audit"] = std::move(audit);
    j["routed_to_drained_host"] = series.routed_to_drained_host;
  }

  j["conservation_violations"] = series.conservation_violations;
  if (!series.warnings.empty()) j["warnings"] = series.warnings;
  return j;
}

nlohmann::json repair_report(const RepairResult& result,
                             const AssignmentMatrix& before) {
  nlohmann::json j;
  j["replica_groups"] = result.matrix.replica_groups();
  j["mirrored_sets"] = result.matrix.mirrored_sets();
  j["mz_count"] = result.matrix.mz_count();
  j["best_effort"] = result.best_effort;
  j["residual_bad_rows"] = result.residual_bad_rows;
  nlohmann::json swaps = nlohmann::json::array();
  for (const auto& s : result.swaps) {
    swaps.push_back({{"row_a", s.row_a},
                     {"col_a", s.col_a},
                     {"row_b", s.row_b},
                     {"col_b", s.col_b},
                     {"instance_a", s.instance_a},
                     {"instance_b", s.instance_b},
                     {"before_overpop", {s.before_overpop_a, s.before_overpop_b}},
                     {"after_overpop", {s.after_overpop_a, s.after_overpop_b}},
                     {"before_excess_total", s.before_excess_total},
                     {"after_excess_total", s.after_excess_total}});
  }
  j["swaps"] = std::move(swaps);
  int rows_modified = 0;
  for (int r = 0; r < result.matrix.mirrored_sets(); ++r) {
    std::multiset<std::string> was, now;
    if (r < before.mirrored_sets()) {
      for (int c = 0; c < before.replica_groups(); ++c) {
        was.insert(before.cell(r, c).id);
      }
    }
    for (int c = 0; c < result.matrix.replica_groups(); ++c) {
      now.insert(result.matrix.cell(r, c).id);
    }
    if (was != now) ++rows_modified;
  }
  j["rows_modified"] = rows_modified;
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < result.matrix.mirrored_sets(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < result.matrix.replica_groups(); ++c) {
      const Instance& inst = result.matrix.cell(r, c);
      row.push_back({{"id", inst.id}, {"mz", inst.mz}});
    }
    rows.push_back(std::move(row));
  }
  j["matrix"] = std::move(rows);
  return j;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << contents;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace olapsim
