#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "olapsim/cluster.hpp"

namespace olapsim {

// Per-row multiplicity cap: with R replica groups spread over MZ zones, a
// zone drain may take down at most ceil(R/MZ) replicas of any segment.
inline int mz_threshold(int replica_groups, int mz_count) {
  return (replica_groups + mz_count - 1) / mz_count;
}

struct RowStatus {
  std::set<std::string> overpopulated_mzs;
  int excess = 0;  // sum over zones of (multiplicity - threshold), clamped at 0

  bool good() const { return excess == 0; }
};

// One executed exchange between two cells in distinct rows, with the
// overpopulated-MZ counts of both rows before and after.
struct SwapRecord {
  int row_a = 0, col_a = 0;
  int row_b = 0, col_b = 0;
  std::string instance_a;  // occupant of (row_a, col_a) before the swap
  std::string instance_b;
  int before_overpop_a = 0, after_overpop_a = 0;
  int before_overpop_b = 0, after_overpop_b = 0;
  int before_excess_total = 0, after_excess_total = 0;  // across both rows
};

struct RepairResult {
  AssignmentMatrix matrix;
  std::vector<SwapRecord> swaps;
  bool best_effort = false;             // pool imbalance left bad rows behind
  std::vector<int> residual_bad_rows;   // empty unless best_effort
};

RowStatus row_status(const std::vector<Instance>& row, int replica_groups,
                     int mz_count);

// True iff exchanging the two cells (i) does not increase either row's
// overpopulated-MZ count and (ii) strictly decreases their sum. Throws on
// same-row cells.
bool is_valid_swap(const AssignmentMatrix& matrix, std::pair<int, int> cell_a,
                   std::pair<int, int> cell_b);

// Greedy repair: walks bad rows in ascending index, overpopulated MZs in
// label order, source cells in column order, and partners bad-rows-first
// (ascending), then good rows. Among valid swaps it takes the first that
// also strictly decreases total excess, so every recorded swap makes
// measurable progress. Under an MZ-balanced pool the result has no bad
// rows; otherwise best_effort is set and the stragglers are listed.
RepairResult repair(const AssignmentMatrix& matrix);

// Lifecycle entry points. Each edits the matrix, then runs repair.
RepairResult apply_uplift(const AssignmentMatrix& matrix,
                          const std::vector<Instance>& new_instances);

RepairResult apply_node_swap(const AssignmentMatrix& matrix,
                             const std::string& old_instance_id,
                             const Instance& new_instance);

// Column-removal mode: if removed_instance_ids holds exactly one instance
// per row, those cells are rotated into the last column, the column is
// dropped, and repair runs at R-1. Otherwise each removed cell is refilled
// from replacement_pool like a node swap.
RepairResult apply_downlift(const AssignmentMatrix& matrix,
                            const std::vector<std::string>& removed_instance_ids,
                            const std::vector<Instance>& replacement_pool);

}  // namespace olapsim
