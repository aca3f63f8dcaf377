#include "olapsim/placement.hpp"

#include <random>

#include "doctest.h"
#include "olapsim/rng.hpp"
#include "support/oracles.hpp"

using namespace olapsim;
using namespace olapsim::testing;

namespace {

// Matrix straight from MZ labels; instance ids are synthesized.
AssignmentMatrix matrix_of(const std::vector<std::vector<std::string>>& rows,
                           int mz_count) {
  std::vector<Instance> cells;
  int id = 0;
  for (const auto& row : rows) {
    for (const auto& mz : row) {
      cells.push_back({"m" + std::to_string(id++), mz});
    }
  }
  return AssignmentMatrix(static_cast<int>(rows[0].size()),
                          static_cast<int>(rows.size()), mz_count, cells);
}

std::vector<Instance> row_of(const std::vector<std::string>& mzs) {
  std::vector<Instance> row;
  int id = 0;
  for (const auto& mz : mzs) row.push_back({"r" + std::to_string(id++), mz});
  return row;
}

}  // namespace

TEST_CASE("row_status marks good and bad rows") {
  auto st = row_status(row_of({"A", "B", "C"}), 3, 3);
  CHECK(st.good());
  CHECK(st.excess == 0);

  st = row_status(row_of({"A", "A", "B"}), 3, 3);
  CHECK(st.overpopulated_mzs == std::set<std::string>{"A"});
  CHECK(st.excess == 1);

  // Threshold ceil(4/3) = 2 tolerates pairs.
  st = row_status(row_of({"A", "A", "B", "B"}), 4, 3);
  CHECK(st.good());
}

TEST_CASE("row_status validates the row length") {
  CHECK_THROWS_AS(row_status(row_of({"A"}), 2, 3), std::invalid_argument);
}

TEST_CASE("is_valid_swap accepts the repairing exchange") {
  auto m = matrix_of({{"A", "A", "B"}, {"B", "C", "C"}}, 3);
  // Swap an A (row 0) with a C (row 1): both rows become good.
  CHECK(is_valid_swap(m, {0, 0}, {1, 1}));
}

TEST_CASE("is_valid_swap rejects swaps that worsen the good row") {
  auto m = matrix_of({{"A", "A", "B"}, {"A", "B", "C"}}, 3);
  // Any exchange pushes a duplicate into the good row or keeps row 0 bad.
  for (int cb = 0; cb < 3; ++cb) {
    CHECK_FALSE(is_valid_swap(m, {0, 0}, {1, cb}));
  }
}

TEST_CASE("is_valid_swap rejects exchanges between identical bad rows") {
  auto m = matrix_of({{"A", "A", "B"}, {"A", "A", "B"}}, 3);
  for (int ca = 0; ca < 3; ++ca) {
    for (int cb = 0; cb < 3; ++cb) {
      CHECK_FALSE(is_valid_swap(m, {0, ca}, {1, cb}));
    }
  }
}

TEST_CASE("is_valid_swap refuses same-row cells") {
  auto m = matrix_of({{"A", "A", "B"}, {"B", "C", "C"}}, 3);
  CHECK_THROWS_AS(is_valid_swap(m, {0, 0}, {0, 1}), std::invalid_argument);
}

TEST_CASE("repair is a fixpoint on good matrices") {
  auto m = matrix_of({{"A", "B", "C"}, {"B", "C", "A"}}, 3);
  auto res = repair(m);
  CHECK(res.swaps.empty());
  CHECK(res.matrix == m);
  CHECK_FALSE(res.best_effort);
}

TEST_CASE("repair fixes three single-zone rows with two swaps") {
  auto m = matrix_of({{"A", "A"}, {"B", "B"}, {"C", "C"}}, 3);
  auto res = repair(m);
  REQUIRE(res.swaps.size() == 2);
  CHECK(all_rows_good(res.matrix));
  CHECK_FALSE(res.best_effort);
  // Golden trace: row 0 pairs with bad row 1 first, then row 2 repairs
  // against the now-good row 0.
  CHECK(res.swaps[0].row_a == 0);
  CHECK(res.swaps[0].row_b == 1);
  CHECK(res.swaps[1].row_a == 2);
  CHECK(res.swaps[1].row_b == 0);
  // All three rows pairwise MZ-distinct at the end.
  for (int r = 0; r < 3; ++r) {
    auto hist = mz_histogram(res.matrix.row(r));
    for (const auto& [_, count] : hist) CHECK(count == 1);
  }
}

TEST_CASE("repair leaves diagnostics when the pool cannot be balanced") {
  // Four As and two Bs over three zones: every arrangement keeps a bad row.
  auto m = matrix_of({{"A", "A", "B"}, {"A", "A", "B"}}, 3);
  auto res = repair(m);
  CHECK(res.best_effort);
  CHECK_FALSE(res.residual_bad_rows.empty());
}

TEST_CASE("repair only executes swaps that make measurable progress") {
  std::mt19937_64 rng = make_stream(11, "repair-progress");
  for (int round = 0; round < 100; ++round) {
    int next_id = 0;
    int r = 2 + static_cast<int>(rng() % 4);
    int n = 2 + static_cast<int>(rng() % 6);
    int mz = 2 + static_cast<int>(rng() % 4);
    auto pool = make_balanced_pool(rng, r * n, mz, next_id);
    // Arbitrary (non round-robin) fill to manufacture bad rows.
    AssignmentMatrix m(r, n, mz, pool);
    auto res = repair(m);
    CHECK(all_rows_good(res.matrix));
    CHECK_FALSE(res.best_effort);
    for (const auto& swap : res.swaps) {
      CHECK(swap.after_excess_total < swap.before_excess_total);
      CHECK(swap.after_overpop_a <= swap.before_overpop_a);
      CHECK(swap.after_overpop_b <= swap.before_overpop_b);
    }
  }
}

TEST_CASE("apply_uplift keeps an already-good append untouched") {
  auto m = matrix_of({{"A"}, {"B"}, {"C"}}, 3);
  auto res = apply_uplift(m, row_of({"B", "C", "A"}));
  CHECK(res.swaps.empty());
  CHECK(res.matrix.replica_groups() == 2);
  CHECK(all_rows_good(res.matrix));
}

TEST_CASE("apply_uplift repairs only the rows the append broke") {
  auto m = matrix_of({{"A", "B"}, {"B", "C"}, {"C", "A"}}, 3);
  std::vector<Instance> fresh{{"u0", "A"}, {"u1", "C"}, {"u2", "B"}};
  auto before_append = matrix_of({{"A", "B", "A"}, {"B", "C", "C"}, {"C", "A", "B"}}, 3);
  auto res = apply_uplift(m, fresh);
  CHECK(all_rows_good(res.matrix));
  CHECK(res.matrix.replica_groups() == 3);
  // Row 2 was already good and must be untouched.
  CHECK(mz_histogram(res.matrix.row(2)) == mz_histogram(before_append.row(2)));
  CHECK(rows_modified(before_append, res.matrix) == 2);
}

TEST_CASE("apply_uplift handles a same-zone delta column") {
  std::mt19937_64 rng = make_stream(3, "uplift-delta");
  for (int round = 0; round < 50; ++round) {
    int next_id = 0;
    int mz = 3;
    int n = 3 + static_cast<int>(rng() % 3);
    auto pool = make_balanced_pool(rng, 2 * n, mz, next_id);
    auto m = build_matrix(2, n, pool);
    // Delta entirely in one zone still repairs when n divides evenly.
    std::vector<Instance> fresh;
    for (int i = 0; i < n; ++i) {
      fresh.push_back({"d" + std::to_string(i), std::string(1, 'A' + i % mz)});
    }
    auto res = apply_uplift(m, fresh);
    CHECK(all_rows_good(res.matrix));
  }
}

TEST_CASE("apply_uplift validates the instance count") {
  auto m = matrix_of({{"A"}, {"B"}}, 2);
  CHECK_THROWS_AS(apply_uplift(m, row_of({"A"})), std::invalid_argument);
}

TEST_CASE("apply_node_swap in the same zone repairs nothing") {
  auto m = matrix_of({{"A", "B", "C"}, {"B", "C", "A"}}, 3);
  auto res = apply_node_swap(m, m.cell(0, 0).id, {"fresh", "A"});
  CHECK(res.swaps.empty());
  CHECK(res.matrix.cell(0, 0).id == "fresh");
}

TEST_CASE("apply_node_swap repairs just the affected row") {
  auto m = matrix_of(
      {{"A", "B", "C"}, {"B", "C", "A"}, {"C", "A", "B"}}, 3);
  auto broken = apply_node_swap(m, m.cell(0, 0).id, {"fresh", "B"});
  CHECK(all_rows_good(broken.matrix));
  // Exactly the rows named in the executed swaps changed.
  std::set<int> touched;
  for (const auto& s : broken.swaps) {
    touched.insert(s.row_a);
    touched.insert(s.row_b);
  }
  for (int r = 0; r < 3; ++r) {
    if (!touched.count(r)) {
      CHECK(mz_histogram(broken.matrix.row(r)) == mz_histogram(m.row(r)));
    }
  }
}

TEST_CASE("apply_node_swap rejects unknown instances") {
  auto m = matrix_of({{"A"}}, 1);
  CHECK_THROWS_AS(apply_node_swap(m, "ghost", {"fresh", "A"}),
                  std::invalid_argument);
}

TEST_CASE("repair converges when two rows are bad at once") {
  // Two rows made bad by two raw replacements before any repair ran.
  auto m = matrix_of(
      {{"A", "A", "B"}, {"B", "C", "C"}, {"C", "A", "B"}, {"A", "B", "C"}}, 3);
  auto res = repair(m);
  CHECK(all_rows_good(res.matrix));
  CHECK_FALSE(res.best_effort);
}

TEST_CASE("apply_downlift removes a clean column without swaps") {
  auto m = matrix_of({{"A", "B", "C"}, {"B", "C", "A"}}, 3);
  std::vector<std::string> removed{m.cell(0, 2).id, m.cell(1, 2).id};
  auto res = apply_downlift(m, removed, {});
  CHECK(res.matrix.replica_groups() == 2);
  CHECK(res.swaps.empty());
  CHECK(all_rows_good(res.matrix));
}

TEST_CASE("apply_downlift repairs rows broken by the tighter threshold") {
  // (A,A,B,C) is good at R=4 (threshold 2) but bad at R=3 (threshold 1).
  auto m = matrix_of({{"A", "A", "B", "C"}, {"B", "C", "A", "A"},
                      {"C", "B", "C", "B"}}, 3);
  REQUIRE(all_rows_good(m));
  std::vector<std::string> removed{m.cell(0, 3).id, m.cell(1, 3).id,
                                   m.cell(2, 3).id};
  auto res = apply_downlift(m, removed, {});
  CHECK(res.matrix.replica_groups() == 3);
  CHECK_FALSE(res.swaps.empty());
  CHECK(all_rows_good(res.matrix));
}

TEST_CASE("apply_downlift with no removals is the identity") {
  auto m = matrix_of({{"A", "B"}, {"B", "A"}}, 2);
  auto res = apply_downlift(m, {}, {});
  CHECK(res.matrix == m);
  CHECK(res.swaps.empty());
}

TEST_CASE("apply_downlift falls back to cell replacement") {
  auto m = matrix_of({{"A", "B", "C"}, {"B", "C", "A"}}, 3);
  // Two removals in the same row cannot be a column; replace from the pool.
  std::vector<std::string> removed{m.cell(0, 0).id, m.cell(0, 1).id};
  std::vector<Instance> pool{{"p0", "A"}, {"p1", "B"}};
  auto res = apply_downlift(m, removed, pool);
  CHECK(res.matrix.replica_groups() == 3);
  CHECK(all_rows_good(res.matrix));
  CHECK(res.matrix.find("p0").first == 0);
  CHECK_THROWS_AS(apply_downlift(m, removed, {}), std::invalid_argument);
}

TEST_CASE("zone drain leaves enough replicas after repair") {
  std::mt19937_64 rng = make_stream(23, "zone-drain");
  for (int round = 0; round < 100; ++round) {
    int next_id = 0;
    int r = 1 + static_cast<int>(rng() % 6);
    int n = 1 + static_cast<int>(rng() % 5);
    int mz = 2 + static_cast<int>(rng() % 4);
    auto pool = make_balanced_pool(rng, r * n, mz, next_id);
    auto res = repair(AssignmentMatrix(r, n, mz, pool));
    if (res.best_effort) continue;  // possible when r*n < mz zones
    int threshold = mz_threshold(r, mz);
    for (int row = 0; row < n; ++row) {
      auto hist = mz_histogram(res.matrix.row(row));
      for (const auto& [_, count] : hist) {
        // Draining any one zone leaves >= R - ceil(R/MZ) live replicas of
        // every segment the row mirrors.
        CHECK(count <= threshold);
      }
    }
  }
}

TEST_CASE("random lifecycles stay valid after every repair") {
  std::mt19937_64 rng = make_stream(99, "lifecycle-mini");
  for (int round = 0; round < 60; ++round) {
    run_random_lifecycle(rng, [](const RepairResult& res) {
      CHECK_FALSE(res.best_effort);
      CHECK(all_rows_good(res.matrix));
      for (const auto& swap : res.swaps) {
        CHECK(swap.after_excess_total < swap.before_excess_total);
        CHECK(swap.after_overpop_a <= swap.before_overpop_a);
        CHECK(swap.after_overpop_b <= swap.before_overpop_b);
      }
    });
  }
}

TEST_CASE("repair matches the brute-force minimum on sampled small cases") {
  std::mt19937_64 rng = make_stream(55, "minimality-sample");
  int checked = 0;
  while (checked < 150) {
    int r = 1 + static_cast<int>(rng() % 3);
    int n = 1 + static_cast<int>(rng() % 3);
    std::vector<Instance> cells;
    for (int i = 0; i < r * n; ++i) {
      cells.push_back({"c" + std::to_string(i),
                       std::string(1, static_cast<char>('A' + rng() % 3))});
    }
    AssignmentMatrix m(r, n, 3, cells);
    int oracle = min_rows_to_change(m);
    if (oracle < 0) continue;  // no valid arrangement exists
    auto res = repair(m);
    CHECK(all_rows_good(res.matrix));
    CHECK(rows_modified(m, res.matrix) == oracle);
    ++checked;
  }
}
