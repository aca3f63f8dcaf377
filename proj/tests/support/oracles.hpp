// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "olapsim/cluster.hpp"
#include "olapsim/placement.hpp"

namespace olapsim::testing {

inline bool all_rows_good(const AssignmentMatrix& m) {
  for (int r = 0; r < m.mirrored_sets(); ++r) {
    if (!row_status(m.row(r), m.replica_groups(), m.mz_count()).good()) {
      return false;
    }
  }
  return true;
}

inline std::vector<std::map<std::string, int>> row_histograms(
    const AssignmentMatrix& m) {
  std::vector<std::map<std::string, int>> out;
  for (int r = 0; r < m.mirrored_sets(); ++r) out.push_back(mz_histogram(m.row(r)));
  return out;
}

// Rows whose MZ multiset changed between the two matrices. Instances within
// one zone are interchangeable, so multiset equality is the right notion of
// "row untouched".
inline int rows_modified(const AssignmentMatrix& before,
                         const AssignmentMatrix& after) {
  int modified = 0;
  auto b = row_histograms(before);
  auto a = row_histograms(after);
  for (size_t r = 0; r < a.size(); ++r) {
    if (r >= b.size() || a[r] != b[r]) ++modified;
  }
  return modified;
}

namespace detail {

// Can `zone_counts` fill `rows` rows of `width` cells with every zone used
// at most `threshold` times per row?
inline bool can_fill(std::map<std::string, int>& zone_counts, int rows, int width,
                     int threshold) {
  if (rows == 0) {
    for (const auto& [_, n] : zone_counts) {
      if (n != 0) return false;
    }
    return true;
  }
  // Build one good row greedily over all bounded combinations.
  std::vector<std::string> zones;
  for (const auto& [z, _] : zone_counts) zones.push_back(z);
  std::function<bool(size_t, int)> place = [&](size_t zi, int remaining) -> bool {
    if (remaining == 0) return can_fill(zone_counts, rows - 1, width, threshold);
    if (zi >= zones.size()) return false;
    int max_take = std::min({threshold, zone_counts[zones[zi]], remaining});
    for (int take = max_take; take >= 0; --take) {
      zone_counts[zones[zi]] -= take;
      if (place(zi + 1, remaining - take)) {
        zone_counts[zones[zi]] += take;
        return true;
      }
      zone_counts[zones[zi]] += take;
    }
    return false;
  };
  return place(0, width);
}

}  // namespace detail

// Brute-force minimum number of rows that must change (as MZ multisets) so
// that every row is good, over all rearrangements of the instance multiset.
// Returns -1 when no valid arrangement exists.
inline int min_rows_to_change(const AssignmentMatrix& m) {
  const int rows = m.mirrored_sets();
  const int width = m.replica_groups();
  const int threshold = mz_threshold(width, m.mz_count());
  auto hists = row_histograms(m);
  std::map<std::string, int> total;
  for (const auto& h : hists) {
    for (const auto& [z, n] : h) total[z] += n;
  }
  int best = -1;
  for (int keep_mask = 0; keep_mask < (1 << rows); ++keep_mask) {
    std::map<std::string, int> remaining = total;
    bool feasible = true;
    int kept = 0;
    for (int r = 0; r < rows; ++r) {
      if (!(keep_mask & (1 << r))) continue;
      // A kept row keeps its multiset, so it must already be good.
      for (const auto& [z, n] : hists[r]) {
        if (n > threshold) feasible = false;
        remaining[z] -= n;
      }
      ++kept;
    }
    if (!feasible) continue;
    if (detail::can_fill(remaining, rows - kept, width, threshold)) {
      int changed = rows - kept;
      if (best < 0 || changed < best) best = changed;
    }
  }
  return best;
}

// Balanced pool: zone counts differ by at most one; shuffled order.
inline std::vector<Instance> make_balanced_pool(std::mt19937_64& rng, int total,
                                                int mz_count, int& next_id) {
  std::vector<std::string> mzs;
  for (int i = 0; i < total; ++i) {
    mzs.push_back(std::string(1, static_cast<char>('A' + i % mz_count)));
  }
  std::shuffle(mzs.begin(), mzs.end(), rng);
  std::vector<Instance> pool;
  for (const auto& mz : mzs) {
    pool.push_back({"n" + std::to_string(next_id++), mz});
  }
  return pool;
}

// Runs one random lifecycle: build, then a mix of uplift, downlift, and
// node swaps that keeps the global MZ distribution balanced (the platform
// assumption). Calls `check` after every repair.
inline void run_random_lifecycle(
    std::mt19937_64& rng,
    const std::function<void(const RepairResult&)>& check) {
  int next_id = 0;
  int r = 1 + static_cast<int>(rng() % 6);
  int n = 1 + static_cast<int>(rng() % 8);
  int mz_count = 2 + static_cast<int>(rng() % 4);
  auto pool = make_balanced_pool(rng, r * n, mz_count, next_id);
  AssignmentMatrix matrix = build_matrix(r, n, pool);

  auto zone_counts = [&]() {
    std::map<std::string, int> counts;
    for (int zi = 0; zi < mz_count; ++zi) {
      counts[std::string(1, static_cast<char>('A' + zi))] = 0;
    }
    for (int row = 0; row < matrix.mirrored_sets(); ++row) {
      for (int col = 0; col < matrix.replica_groups(); ++col) {
        counts[matrix.cell(row, col).mz]++;
      }
    }
    return counts;
  };
  auto min_zone = [&](std::map<std::string, int> counts) {
    int lowest = INT32_MAX;
    for (const auto& [_, c] : counts) lowest = std::min(lowest, c);
    std::vector<std::string> candidates;
    for (const auto& [z, c] : counts) {
      if (c == lowest) candidates.push_back(z);
    }
    return candidates[rng() % candidates.size()];
  };

  const int ops = 4 + static_cast<int>(rng() % 4);
  for (int op = 0; op < ops; ++op) {
    int kind = static_cast<int>(rng() % 3);
    if (kind == 0 && matrix.replica_groups() < 6) {
      // Uplift: new instances land in balance-preserving zones, assigned to
      // rows in arbitrary order.
      auto counts = zone_counts();
      std::vector<Instance> fresh;
      for (int row = 0; row < matrix.mirrored_sets(); ++row) {
        std::string z = min_zone(counts);
        counts[z]++;
        fresh.push_back({"n" + std::to_string(next_id++), z});
      }
      std::shuffle(fresh.begin(), fresh.end(), rng);
      RepairResult res = apply_uplift(matrix, fresh);
      check(res);
      matrix = res.matrix;
    } else if (kind == 1 && matrix.replica_groups() >= 2) {
      // Downlift: drop a column whose removal keeps the pool balanced.
      std::vector<int> removable;
      for (int col = 0; col < matrix.replica_groups(); ++col) {
        auto counts = zone_counts();
        for (int row = 0; row < matrix.mirrored_sets(); ++row) {
          counts[matrix.cell(row, col).mz]--;
        }
        int lowest = INT32_MAX, highest = 0;
        for (const auto& [_, c] : counts) {
          lowest = std::min(lowest, c);
          highest = std::max(highest, c);
        }
        if (highest - lowest <= 1) removable.push_back(col);
      }
      if (removable.empty()) continue;
      int col = removable[rng() % removable.size()];
      std::vector<std::string> removed;
      for (int row = 0; row < matrix.mirrored_sets(); ++row) {
        removed.push_back(matrix.cell(row, col).id);
      }
      RepairResult res = apply_downlift(matrix, removed, {});
      check(res);
      matrix = res.matrix;
    } else {
      // Node swap: the replacement's zone is random among those keeping the
      // distribution balanced.
      int row = static_cast<int>(rng() % matrix.mirrored_sets());
      int col = static_cast<int>(rng() % matrix.replica_groups());
      auto counts = zone_counts();
      counts[matrix.cell(row, col).mz]--;
      Instance fresh{"n" + std::to_string(next_id++), min_zone(counts)};
      RepairResult res = apply_node_swap(matrix, matrix.cell(row, col).id, fresh);
      check(res);
      matrix = res.matrix;
    }
  }
}

}  // namespace olapsim::testing
