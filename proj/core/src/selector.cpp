#include "olapsim/selector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace olapsim {

namespace {
constexpr double kTauFloor = 1e-9;
}

void SelectorState::register_server(const std::string& server) {
  register_server(server, policy_.latency_prior_ms);
}

void SelectorState::register_server(const std::string& server,
                                    double latency_prior_ms) {
  auto [it, inserted] = stats_.emplace(server, ServerStats{});
  if (!inserted) return;  // re-registration keeps existing stats
  it->second.latency_ema_ms = latency_prior_ms;
  if (latency_prior_ms <= 0) {
    warnings_.push_back("server " + server +
                        " registered with non-positive latency prior; idle "
                        "hybrid score is 0 (cold-start funnel risk)");
  }
}

ServerStats& SelectorState::stats_mut(const std::string& server) {
  auto it = stats_.find(server);
  if (it == stats_.end()) {
    throw std::invalid_argument("server not registered: " + server);
  }
  return it->second;
}

const ServerStats& SelectorState::stats(const std::string& server) const {
  auto it = stats_.find(server);
  if (it == stats_.end()) {
    throw std::invalid_argument("server not registered: " + server);
  }
  return it->second;
}

void SelectorState::on_dispatch(const std::string& server) {
  ServerStats& s = stats_mut(server);
  // Queue depth is sampled at dispatch from the pre-dispatch count.
  s.queue_ema = policy_.alpha * s.inflight + (1 - policy_.alpha) * s.queue_ema;
  ++s.inflight;
}

void SelectorState::on_response(const std::string& server, double latency_ms) {
  ServerStats& s = stats_mut(server);
  if (s.inflight <= 0) {
    ++unmatched_responses_;
    s.inflight = 0;
  } else {
    --s.inflight;
  }
  s.latency_ema_ms =
      policy_.alpha * latency_ms + (1 - policy_.alpha) * s.latency_ema_ms;
}

double SelectorState::score(const std::string& server) const {
  const ServerStats& s = stats(server);
  switch (policy_.scorer) {
    case Scorer::kRoundRobin:
      return 0;
    case Scorer::kInflight:
      return s.inflight;
    case Scorer::kLatencyEma:
      return s.latency_ema_ms;
    case Scorer::kHybrid: {
      double estimated_q = s.inflight + s.queue_ema + 1;
      return std::pow(estimated_q, policy_.exponent) * s.latency_ema_ms;
    }
  }
  return 0;
}

std::optional<std::string> SelectorState::select(
    const std::vector<std::string>& mss, const std::vector<bool>& eligible,
    std::mt19937_64& rng) {
  if (mss.empty() || eligible.size() != mss.size()) {
    throw std::invalid_argument("select needs a non-empty mss with aligned mask");
  }
  last_select_evals_ = 0;

  std::vector<size_t> candidates;
  for (size_t i = 0; i < mss.size(); ++i) {
    if (eligible[i]) candidates.push_back(i);
  }
  if (candidates.empty()) return std::nullopt;

  if (policy_.scorer == Scorer::kRoundRobin) {
    size_t& cursor = rr_cursors_[mss.front()];
    for (size_t k = 0; k < mss.size(); ++k) {
      size_t i = cursor % mss.size();
      cursor = (cursor + 1) % mss.size();
      if (eligible[i]) return mss[i];
    }
    return std::nullopt;
  }

  std::vector<double> scores(candidates.size());
  for (size_t k = 0; k < candidates.size(); ++k) {
    scores[k] = score(mss[candidates[k]]);
    ++last_select_evals_;
  }

  if (policy_.mode == SelectionMode::kArgmin) {
    size_t best = 0;
    for (size_t k = 1; k < candidates.size(); ++k) {
      if (scores[k] < scores[best]) best = k;  // ties keep list order
    }
    return mss[candidates[best]];
  }

  // Softmax: P(i) = exp(-score_i / tau) / sum_j exp(-score_j / tau).
  double max_score = *std::max_element(scores.begin(), scores.end());
  double tau =
      std::max(max_score, kTauFloor) / std::max(policy_.softmax_sharpness, 1e-6);
  double total = 0;
  std::vector<double> weights(candidates.size());
  for (size_t k = 0; k < candidates.size(); ++k) {
    weights[k] = std::exp(-scores[k] / tau);
    total += weights[k];
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double draw = uni(rng) * total;
  double acc = 0;
  for (size_t k = 0; k < candidates.size(); ++k) {
    acc += weights[k];
    if (draw <= acc) return mss[candidates[k]];
  }
  return mss[candidates.back()];  // numeric tail
}

}  // namespace olapsim
