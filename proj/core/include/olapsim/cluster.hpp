#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace olapsim {

// A server instance pinned to a maintenance zone (rack, power circuit,
// availability zone -- any fault domain drained as a unit).
struct Instance {
  std::string id;
  std::string mz;

  bool operator==(const Instance&) const = default;
  auto operator<=>(const Instance&) const = default;
};

// The replica-group assignment table: columns are replica groups (each a
// full copy of the data), rows are mirrored server sets (one server per
// group, all hosting the same segments). Cells are filled row-major.
class AssignmentMatrix {
 public:
  AssignmentMatrix() = default;
  AssignmentMatrix(int replica_groups, int mirrored_sets, int mz_count,
                   std::vector<Instance> cells);

  int replica_groups() const { return replica_groups_; }   // R (columns)
  int mirrored_sets() const { return mirrored_sets_; }     // N_i/rg (rows)
  int mz_count() const { return mz_count_; }

  const Instance& cell(int row, int col) const {
    return cells_[static_cast<size_t>(row) * replica_groups_ + col];
  }
  Instance& cell(int row, int col) {
    return cells_[static_cast<size_t>(row) * replica_groups_ + col];
  }
  std::vector<Instance> row(int r) const;

  // (row, col) of the instance with this id, or (-1, -1).
  std::pair<int, int> find(const std::string& instance_id) const;

  bool operator==(const AssignmentMatrix&) const = default;

 private:
  int replica_groups_ = 0;
  int mirrored_sets_ = 0;
  int mz_count_ = 0;
  std::vector<Instance> cells_;  // row-major, size N * R
};

// segment id -> row index of the mirrored server set hosting all R replicas.
struct SegmentMap {
  std::map<std::string, int> rows;
};

// host id -> segments it serves. Derived, never authored by hand.
using HostAssignment = std::map<std::string, std::set<std::string>>;

// Buckets the pool by MZ (label order) and fills cells row-major, cycling
// through the buckets. With an MZ-balanced pool every row comes out good:
// no zone appears in a row more than ceil(R/MZ) times. Deterministic in
// pool order.
AssignmentMatrix build_matrix(int num_replica_groups, int instances_per_rg,
                              const std::vector<Instance>& pool);

// Expands (matrix, segment map) into the per-host segment sets the
// rebalance planner consumes. Every segment lands on exactly R hosts, one
// per replica group.
HostAssignment derive_host_assignment(const AssignmentMatrix& matrix,
                                      const SegmentMap& segmap);

std::map<std::string, int> mz_histogram(const std::vector<Instance>& row);

}  // namespace olapsim
