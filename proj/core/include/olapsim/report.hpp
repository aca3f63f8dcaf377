#pragma once

#include <string>

#include "json.hpp"
#include "olapsim/placement.hpp"
#include "olapsim/rebalance.hpp"
#include "olapsim/sim.hpp"

namespace olapsim {

enum ExitCode : int {
  kOk = 0,
  kParseError = 2,
  kInvariantViolation = 3,
  kIoError = 4,
};

enum class ReportFormat { kCsv, kJsonl };

// Time-series rows: window_start_ms, key, metric, value. Deterministic for
// a fixed seed, so byte-identical across reruns.
std::string series_to_table(const MetricsSeries& series, ReportFormat format);

// The run summary: overall percentiles, per-workload budget accounting,
// diversion/recovery/oscillation for the first degradation event, the
// degradation-prevention rate, and the rebalance safety audit.
nlohmann::json summarize(const MetricsSeries& series,
                         double prevention_threshold_multiple = 2.0);

nlohmann::json repair_report(const RepairResult& result,
                             const AssignmentMatrix& before);

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace olapsim
