#include "olapsim/cluster.hpp"

#include <algorithm>

namespace olapsim {

AssignmentMatrix::AssignmentMatrix(int replica_groups, int mirrored_sets,
                                   int mz_count, std::vector<Instance> cells)
    : replica_groups_(replica_groups),
      mirrored_sets_(mirrored_sets),
      mz_count_(mz_count),
      cells_(std::move(cells)) {
  if (replica_groups_ < 1 || mirrored_sets_ < 1 || mz_count_ < 1) {
    throw std::invalid_argument("assignment matrix needs R >= 1, N >= 1, MZ >= 1");
  }
  if (cells_.size() != static_cast<size_t>(replica_groups_) * mirrored_sets_) {
    throw std::invalid_argument("assignment matrix cell count mismatch");
  }
  std::set<std::string> seen;
  for (const auto& inst : cells_) {
    if (!seen.insert(inst.id).second) {
      throw std::invalid_argument("instance appears in two cells: " + inst.id);
    }
  }
}

std::vector<Instance> AssignmentMatrix::row(int r) const {
  std::vector<Instance> out;
  out.reserve(replica_groups_);
  for (int c = 0; c < replica_groups_; ++c) out.push_back(cell(r, c));
  return out;
}

std::pair<int, int> AssignmentMatrix::find(const std::string& instance_id) const {
  for (int r = 0; r < mirrored_sets_; ++r) {
    for (int c = 0; c < replica_groups_; ++c) {
      if (cell(r, c).id == instance_id) return {r, c};
    }
  }
  return {-1, -1};
}

AssignmentMatrix build_matrix(int num_replica_groups, int instances_per_rg,
                              const std::vector<Instance>& pool) {
  const int r = num_replica_groups;
  const int n = instances_per_rg;
  if (r < 1 || n < 1) throw std::invalid_argument("R and N_i/rg must be >= 1");
  const size_t needed = static_cast<size_t>(r) * n;
  if (pool.size() < needed) {
    throw std::invalid_argument("insufficient pool: need " +
                                std::to_string(needed) + " instances, have " +
                                std::to_string(pool.size()));
  }

  // Bucket by MZ, label order; instances keep pool order within a bucket.
  std::map<std::string, std::vector<const Instance*>> buckets;
  for (const auto& inst : pool) buckets[inst.mz].push_back(&inst);
  if (buckets.empty() || buckets.begin()->first.empty()) {
    if (buckets.empty()) throw std::invalid_argument("empty MZ set");
  }
  const int mz_count = static_cast<int>(buckets.size());

  std::vector<std::map<std::string, std::vector<const Instance*>>::iterator> order;
  for (auto it = buckets.begin(); it != buckets.end(); ++it) order.push_back(it);
  std::vector<size_t> next(order.size(), 0);

  std::vector<Instance> cells;
  cells.reserve(needed);
  size_t cursor = 0;
  while (cells.size() < needed) {
    // Advance to the next bucket that still has instances.
    size_t tried = 0;
    while (next[cursor] >= order[cursor]->second.size()) {
      cursor = (cursor + 1) % order.size();
      if (++tried > order.size()) {
        throw std::invalid_argument("insufficient pool while cycling MZ buckets");
      }
    }
    cells.push_back(*order[cursor]->second[next[cursor]++]);
    cursor = (cursor + 1) % order.size();
  }
  return AssignmentMatrix(r, n, mz_count, std::move(cells));
}

HostAssignment derive_host_assignment(const AssignmentMatrix& matrix,
                                      const SegmentMap& segmap) {
  HostAssignment out;
  for (int row = 0; row < matrix.mirrored_sets(); ++row) {
    for (int col = 0; col < matrix.replica_groups(); ++col) {
      out[matrix.cell(row, col).id];  // every host present, possibly empty
    }
  }
  for (const auto& [segment, row] : segmap.rows) {
    if (row < 0 || row >= matrix.mirrored_sets()) {
      throw std::invalid_argument("segment " + segment +
                                  " maps to dangling row index " +
                                  std::to_string(row));
    }
    for (int col = 0; col < matrix.replica_groups(); ++col) {
      out[matrix.cell(row, col).id].insert(segment);
    }
  }
  return out;
}

std::map<std::string, int> mz_histogram(const std::vector<Instance>& row) {
  std::map<std::string, int> hist;
  for (const auto& inst : row) ++hist[inst.mz];
  return hist;
}

}  // namespace olapsim
