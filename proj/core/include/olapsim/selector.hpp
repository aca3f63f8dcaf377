#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace olapsim {

enum class Scorer { kRoundRobin, kInflight, kLatencyEma, kHybrid };
enum class SelectionMode { kArgmin, kSoftmax };

struct SelectionPolicy {
  Scorer scorer = Scorer::kHybrid;
  SelectionMode mode = SelectionMode::kArgmin;  // ignored by round-robin
  double alpha = 2.0 / 3.0;                     // EMA smoothing factor
  int exponent = 3;                             // N in the hybrid score
  double latency_prior_ms = 1.0;
  // tau = max(max score, eps) / sharpness. Sharpness 1 keeps softmax
  // exponents in [-1, 0]; larger values sharpen the distribution.
  double softmax_sharpness = 1.0;
};

struct ServerStats {
  int inflight = 0;          // dispatched, not yet returned
  double latency_ema_ms = 0;
  double queue_ema = 0;      // EMA of pre-dispatch in-flight depth
};

// One broker's per-table view of its servers. Brokers never share stats;
// each owns one of these per table and updates it on its own query path.
class SelectorState {
 public:
  explicit SelectorState(SelectionPolicy policy) : policy_(policy) {}

  const SelectionPolicy& policy() const { return policy_; }

  // Idempotent. A fresh server starts with latency_ema = prior so the
  // hybrid score of an idle unknown server is nonzero (cold-start guard).
  void register_server(const std::string& server);
  void register_server(const std::string& server, double latency_prior_ms);

  void on_dispatch(const std::string& server);
  void on_response(const std::string& server, double latency_ms);

  double score(const std::string& server) const;

  // Picks one serving-eligible server from the mirrored set, or nullopt if
  // every server is excluded. `eligible` aligns with `mss`. Softmax mode
  // consumes exactly one draw from `rng`; the other modes consume none.
  std::optional<std::string> select(const std::vector<std::string>& mss,
                                    const std::vector<bool>& eligible,
                                    std::mt19937_64& rng);

  const ServerStats& stats(const std::string& server) const;

  // Diagnostics.
  int unmatched_responses() const { return unmatched_responses_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int last_select_evals() const { return last_select_evals_; }

 private:
  ServerStats& stats_mut(const std::string& server);

  SelectionPolicy policy_;
  std::map<std::string, ServerStats> stats_;
  std::map<std::string, size_t> rr_cursors_;  // keyed by mss front server
  int unmatched_responses_ = 0;
  int last_select_evals_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace olapsim
