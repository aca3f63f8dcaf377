#include "olapsim/rebalance.hpp"

#include <random>

#include "doctest.h"
#include "olapsim/rng.hpp"

using namespace olapsim;

namespace {

HostAssignment assignment(std::initializer_list<
                          std::pair<std::string, std::set<std::string>>> hosts) {
  HostAssignment out;
  for (const auto& [h, segs] : hosts) out[h] = segs;
  return out;
}

// Replays every step against running per-segment serving counts and
// returns the minimum observed while any step's drained hosts were down.
// Independent of the planner's own bookkeeping.
int replay_min_serving(const HostAssignment& initial, const RebalanceTrace& trace,
                       const std::set<std::string>& audited_segments) {
  HostAssignment current = initial;
  int min_serving = INT32_MAX;
  for (const auto& step : trace.steps) {
    std::set<std::string> down(step.drained_hosts.begin(),
                               step.drained_hosts.end());
    for (const auto& seg : audited_segments) {
      int serving = 0;
      for (const auto& [h, segs] : current) {
        if (!down.count(h) && segs.count(seg)) ++serving;
      }
      min_serving = std::min(min_serving, serving);
    }
    for (const auto& [h, segs] : step.added) {
      for (const auto& s : segs) current[h].insert(s);
    }
    for (const auto& [h, segs] : step.removed) {
      for (const auto& s : segs) current[h].erase(s);
    }
  }
  return min_serving;
}

struct RandomScenario {
  HostAssignment initial;
  HostAssignment desired;
  int replicas = 2;
  std::set<std::string> segments;
};

// Replica-group layouts: hosts form R columns x M rows; each segment lives
// on one row (R replicas) in both layouts, so min-serving >= R-1 is the
// meaningful audit.
RandomScenario make_random_scenario(std::mt19937_64& rng) {
  RandomScenario sc;
  sc.replicas = 2 + static_cast<int>(rng() % 2);
  int rows = 1 + static_cast<int>(rng() % (12 / sc.replicas));
  int segments = 1 + static_cast<int>(rng() % 200);
  std::vector<std::string> hosts;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < sc.replicas; ++c) {
      hosts.push_back("h" + std::to_string(r) + "_" + std::to_string(c));
    }
  }
  for (const auto& h : hosts) {
    sc.initial[h];
    sc.desired[h];
  }
  for (int s = 0; s < segments; ++s) {
    std::string seg = "seg" + std::to_string(s);
    sc.segments.insert(seg);
    int initial_row = static_cast<int>(rng() % rows);
    int desired_row = static_cast<int>(rng() % rows);
    for (int c = 0; c < sc.replicas; ++c) {
      sc.initial["h" + std::to_string(initial_row) + "_" + std::to_string(c)]
          .insert(seg);
      sc.desired["h" + std::to_string(desired_row) + "_" + std::to_string(c)]
          .insert(seg);
    }
  }
  return sc;
}

}  // namespace

TEST_CASE("compute_diff performs the set algebra") {
  auto diff = compute_diff(assignment({{"h", {"s1", "s2"}}}),
                           assignment({{"h", {"s2", "s3"}}}));
  CHECK(diff["h"].added == std::set<std::string>{"s3"});
  CHECK(diff["h"].removed == std::set<std::string>{"s1"});
}

TEST_CASE("compute_diff of identical assignments is empty") {
  auto a = assignment({{"h", {"s1"}}, {"g", {"s2"}}});
  auto diff = compute_diff(a, a);
  for (const auto& [_, d] : diff) {
    CHECK(d.added.empty());
    CHECK(d.removed.empty());
  }
}

TEST_CASE("compute_diff treats a new host as empty on the initial side") {
  auto diff = compute_diff(assignment({}),
                           assignment({{"h", {"s1", "s2", "s3", "s4", "s5",
                                              "s6", "s7", "s8", "s9"}}}));
  CHECK(diff["h"].added.size() == 9);
  CHECK(diff["h"].removed.empty());
}

TEST_CASE("safe_to_drain applies the serving-replica formula") {
  auto initial = assignment(
      {{"h1", {"s"}}, {"h2", {"s"}}, {"h3", {"s"}}, {"h4", {}}});
  auto desired = assignment(
      {{"h1", {}}, {"h2", {"s"}}, {"h3", {"s"}}, {"h4", {"s"}}});
  RebalanceState state(initial, desired, 2, 1);

  // Three serving replicas, T=2: one host may drain.
  CHECK(safe_to_drain(state, {}, "h1"));
  // With one mirror already slated to go down, a second cannot.
  CHECK_FALSE(safe_to_drain(state, {"h2"}, "h1"));

  state.set_down("h2", true);
  CHECK_FALSE(safe_to_drain(state, {}, "h1"));
}

TEST_CASE("select_hosts returns nothing when everything is converged") {
  auto a = assignment({{"h1", {"s"}}, {"h2", {"s"}}});
  RebalanceState state(a, a, 1, 1);
  CHECK(select_hosts(state).empty());
}

TEST_CASE("select_hosts admits one host per mirrored set") {
  // Two mirrored sets of R=3; one host per set has pending changes.
  auto initial = assignment({{"a1", {"x"}}, {"a2", {"x"}}, {"a3", {"x"}},
                             {"b1", {"y"}}, {"b2", {"y"}}, {"b3", {"y"}}});
  auto desired = assignment({{"a1", {"x", "y"}}, {"a2", {"x"}}, {"a3", {"x"}},
                             {"b1", {"y", "x"}}, {"b2", {"y"}}, {"b3", {"y"}}});
  RebalanceState state(initial, desired, 2, 1);
  auto hosts = select_hosts(state);
  CHECK(hosts == std::vector<std::string>{"a1", "b1"});
}

TEST_CASE("select_hosts respects serving floors left by earlier steps") {
  auto initial = assignment({{"h1", {"s"}}, {"h2", {"s"}}, {"h3", {"t"}}});
  auto desired = assignment({{"h1", {"t"}}, {"h2", {"s"}}, {"h3", {"t", "s"}}});
  RebalanceState state(initial, desired, 1, 1);
  // s has two serving replicas (h1, h2): draining h1 is allowed, h2 not on
  // top of it.
  auto hosts = select_hosts(state);
  REQUIRE(!hosts.empty());
  std::set<std::string> chosen(hosts.begin(), hosts.end());
  CHECK(!(chosen.count("h1") && chosen.count("h2")));
}

TEST_CASE("rebalancing_step converges its hosts in one down/up cycle") {
  auto initial = assignment({{"h1", {"s1"}}, {"h2", {"s1", "s3"}}});
  auto desired = assignment({{"h1", {"s3"}}, {"h2", {"s1", "s3"}}});
  RebalanceState state(initial, desired, 1, 1);
  RebalanceTrace trace;
  rebalancing_step(state, {"h1"}, PlannerOptions{}, trace);
  CHECK(state.converged("h1"));
  CHECK_FALSE(state.down("h1"));
  REQUIRE(trace.steps.size() == 1);
  CHECK(trace.steps[0].drained_hosts == std::vector<std::string>{"h1"});
  CHECK(trace.steps[0].added.at("h1") == std::vector<std::string>{"s3"});
  CHECK(trace.steps[0].removed.at("h1") == std::vector<std::string>{"s1"});
}

TEST_CASE("rebalancing_step with no hosts is an identity with a record") {
  auto a = assignment({{"h1", {"s"}}});
  RebalanceState state(a, a, 0, 1);
  RebalanceTrace trace;
  rebalancing_step(state, {}, PlannerOptions{}, trace);
  CHECK(trace.steps.size() == 1);
  CHECK(trace.steps[0].added.empty());
  CHECK(state.assignment() == a);
}

TEST_CASE("progress_step adds the least-replicated segments first") {
  auto initial = assignment({{"h1", {}}, {"h2", {"s2"}}, {"h3", {"s3"}},
                             {"h4", {"s3"}}});
  auto desired = assignment({{"h1", {"s1", "s2", "s3"}}, {"h2", {"s2"}},
                             {"h3", {"s3"}}, {"h4", {"s3"}}});
  RebalanceState state(initial, desired, 0, 2);
  RebalanceTrace trace;
  progress_step(state, PlannerOptions{}, trace);
  // s1 has zero replicas, s2 one, s3 two: batch of two picks s1 and s2.
  REQUIRE(trace.steps.size() == 1);
  CHECK(trace.steps[0].added.at("h1") == std::vector<std::string>{"s1", "s2"});
}

TEST_CASE("progress_step without addable segments only advances the counter") {
  auto initial = assignment({{"h1", {"s1", "s2"}}, {"h2", {"s1", "s2"}}});
  auto desired = assignment({{"h1", {"s1"}}, {"h2", {"s1", "s2"}}});
  RebalanceState state(initial, desired, 1, 5);
  RebalanceTrace trace;
  progress_step(state, PlannerOptions{}, trace);
  CHECK(trace.steps[0].added.empty());
  CHECK(state.step_index() == 1);
}

TEST_CASE("two hosts wanting the same under-replicated segment both get it") {
  auto initial = assignment({{"h1", {}}, {"h2", {}}, {"h3", {"u"}}});
  auto desired = assignment({{"h1", {"u"}}, {"h2", {"u"}}, {"h3", {"u"}}});
  RebalanceState state(initial, desired, 0, 1);
  RebalanceTrace trace;
  progress_step(state, PlannerOptions{}, trace);
  CHECK(trace.steps[0].added.at("h1") == std::vector<std::string>{"u"});
  CHECK(trace.steps[0].added.at("h2") == std::vector<std::string>{"u"});
}

TEST_CASE("run_rebalance on equal assignments emits no steps") {
  auto a = assignment({{"h1", {"s"}}, {"h2", {"s"}}});
  auto trace = run_rebalance(a, a, 1, 1);
  CHECK(trace.steps.empty());
  CHECK(trace.final_assignment == a);
}

TEST_CASE("run_rebalance rejects an unreachable threshold") {
  auto initial = assignment({{"h1", {"s"}}, {"h2", {"s"}}});
  auto desired = assignment({{"h1", {"s"}}, {"h2", {}}});
  // s ends with one replica; T=1 needs at least two to ever drain a holder.
  CHECK_THROWS_AS(run_rebalance(initial, desired, 1, 1), std::invalid_argument);
}

TEST_CASE("replica-group expansion keeps every segment serving") {
  // 2 -> 3 columns, 6 segments on 2 rows, T = 1.
  auto initial = assignment({{"h0_0", {"s1", "s2", "s3"}},
                             {"h0_1", {"s1", "s2", "s3"}},
                             {"h1_0", {"s4", "s5", "s6"}},
                             {"h1_1", {"s4", "s5", "s6"}},
                             {"h0_2", {}},
                             {"h1_2", {}}});
  auto desired = assignment({{"h0_0", {"s1", "s2", "s3"}},
                             {"h0_1", {"s1", "s2", "s3"}},
                             {"h1_0", {"s4", "s5", "s6"}},
                             {"h1_1", {"s4", "s5", "s6"}},
                             {"h0_2", {"s1", "s2", "s3"}},
                             {"h1_2", {"s4", "s5", "s6"}}});
  auto trace = run_rebalance(initial, desired, 1, 1);
  CHECK(trace.final_assignment == desired);
  CHECK_FALSE(trace.stalled);
  std::set<std::string> segs{"s1", "s2", "s3", "s4", "s5", "s6"};
  CHECK(replay_min_serving(initial, trace, segs) >= 1);
}

TEST_CASE("mid-run goal updates re-diff and still converge") {
  auto initial = assignment({{"h1", {"s1", "s2"}}, {"h2", {"s1", "s2"}},
                             {"h3", {}}});
  auto desired1 = assignment({{"h1", {"s1", "s2"}}, {"h2", {"s1"}},
                              {"h3", {"s2"}}});
  auto desired2 = assignment({{"h1", {"s1"}}, {"h2", {"s1", "s2"}},
                              {"h3", {"s2"}}});
  PlannerOptions options;
  options.goal_updates = {{1, desired2}};
  auto trace = run_rebalance(initial, desired1, 1, 1, options);
  CHECK(trace.final_assignment == desired2);
}

TEST_CASE("safety and resume idempotence over random scenarios") {
  std::mt19937_64 rng = make_stream(17, "rebalance-mini");
  for (int round = 0; round < 25; ++round) {
    auto sc = make_random_scenario(rng);
    int t = sc.replicas - 1;
    auto trace = run_rebalance(sc.initial, sc.desired, t, 5);
    CAPTURE(round);
    CHECK_FALSE(trace.stalled);
    CHECK(trace.final_assignment == sc.desired);
    CHECK(replay_min_serving(sc.initial, trace, sc.segments) >= t);
    // Kill-and-resume at a random step reaches the same final assignment.
    if (!trace.steps.empty()) {
      size_t cut = rng() % trace.steps.size();
      HostAssignment mid = replay_prefix(sc.initial, trace, cut);
      auto resumed = run_rebalance(mid, sc.desired, t, 5);
      CHECK(resumed.final_assignment == sc.desired);
      CHECK(replay_min_serving(mid, resumed, sc.segments) >= t);
    }
  }
}

TEST_CASE("termination bound holds") {
  std::mt19937_64 rng = make_stream(31, "rebalance-bound");
  for (int round = 0; round < 10; ++round) {
    auto sc = make_random_scenario(rng);
    auto diff = compute_diff(sc.initial, sc.desired);
    int64_t total_added = 0;
    int hosts = 0;
    for (const auto& [_, d] : diff) {
      total_added += static_cast<int64_t>(d.added.size());
      ++hosts;
    }
    auto trace = run_rebalance(sc.initial, sc.desired, sc.replicas - 1, 5);
    CHECK(static_cast<int64_t>(trace.steps.size()) <=
          hosts + (total_added + 4) / 5);
  }
}

TEST_CASE("trace serializes to one JSON record per step") {
  auto initial = assignment({{"h1", {"s1"}}, {"h2", {"s1"}}, {"h3", {}}});
  auto desired = assignment({{"h1", {"s1"}}, {"h2", {"s1"}}, {"h3", {"s1"}}});
  auto trace = run_rebalance(initial, desired, 1, 1);
  auto jsonl = trace_to_jsonl(trace);
  int lines = 0;
  for (char c : jsonl) {
    if (c == '\n') ++lines;
  }
  CHECK(lines == static_cast<int>(trace.steps.size()));
  CHECK(jsonl.find("\"serving\"") != std::string::npos);
}
