#include "olapsim/placement.hpp"

#include <algorithm>
#include <cassert>
#include <map>

namespace olapsim {

namespace {

struct RowView {
  std::map<std::string, int> hist;
  int overpop = 0;
  int excess = 0;
};

RowView view_of(const AssignmentMatrix& m, int row, int threshold) {
  RowView v;
  for (int c = 0; c < m.replica_groups(); ++c) ++v.hist[m.cell(row, c).mz];
  for (const auto& [mz, count] : v.hist) {
    if (count > threshold) {
      ++v.overpop;
      v.excess += count - threshold;
    }
  }
  return v;
}

// Overpop/excess of a row histogram after removing one instance of
// `out_mz` and adding one of `in_mz`.
std::pair<int, int> after_exchange(const std::map<std::string, int>& hist,
                                   const std::string& out_mz,
                                   const std::string& in_mz, int threshold) {
  int overpop = 0, excess = 0;
  auto count_of = [&](const std::string& mz, int base) {
    int c = base;
    if (mz == out_mz) --c;
    if (mz == in_mz) ++c;
    return c;
  };
  bool in_seen = false;
  for (const auto& [mz, base] : hist) {
    if (mz == in_mz) in_seen = true;
    int c = count_of(mz, base);
    if (c > threshold) {
      ++overpop;
      excess += c - threshold;
    }
  }
  if (!in_seen) {
    int c = count_of(in_mz, 0);
    if (c > threshold) {
      ++overpop;
      excess += c - threshold;
    }
  }
  return {overpop, excess};
}

struct SwapEval {
  bool count_valid = false;    // rows don't worsen, overpop sum drops
  bool excess_drops = false;   // total excess across both rows drops
  int after_overpop_a = 0, after_overpop_b = 0;
  int after_excess_a = 0, after_excess_b = 0;
};

SwapEval evaluate_swap(const AssignmentMatrix& m, const RowView& va,
                       const RowView& vb, int row_a, int col_a, int row_b,
                       int col_b, int threshold) {
  SwapEval e;
  const std::string& mz_a = m.cell(row_a, col_a).mz;
  const std::string& mz_b = m.cell(row_b, col_b).mz;
  auto [oa, xa] = after_exchange(va.hist, mz_a, mz_b, threshold);
  auto [ob, xb] = after_exchange(vb.hist, mz_b, mz_a, threshold);
  e.after_overpop_a = oa;
  e.after_overpop_b = ob;
  e.after_excess_a = xa;
  e.after_excess_b = xb;
  e.count_valid = oa <= va.overpop && ob <= vb.overpop &&
                  oa + ob < va.overpop + vb.overpop;
  e.excess_drops = xa + xb < va.excess + vb.excess;
  return e;
}

}  // namespace

RowStatus row_status(const std::vector<Instance>& row, int replica_groups,
                     int mz_count) {
  if (static_cast<int>(row.size()) != replica_groups) {
    throw std::invalid_argument("row length must equal replica group count");
  }
  const int threshold = mz_threshold(replica_groups, mz_count);
  RowStatus st;
  for (const auto& [mz, count] : mz_histogram(row)) {
    if (count > threshold) {
      st.overpopulated_mzs.insert(mz);
      st.excess += count - threshold;
    }
  }
  return st;
}

bool is_valid_swap(const AssignmentMatrix& matrix, std::pair<int, int> cell_a,
                   std::pair<int, int> cell_b) {
  if (cell_a.first == cell_b.first) {
    throw std::invalid_argument("swap cells must be in distinct rows");
  }
  const int threshold = mz_threshold(matrix.replica_groups(), matrix.mz_count());
  RowView va = view_of(matrix, cell_a.first, threshold);
  RowView vb = view_of(matrix, cell_b.first, threshold);
  return evaluate_swap(matrix, va, vb, cell_a.first, cell_a.second,
                       cell_b.first, cell_b.second, threshold)
      .count_valid;
}

RepairResult repair(const AssignmentMatrix& matrix) {
  RepairResult result{matrix, {}, false, {}};
  AssignmentMatrix& m = result.matrix;
  const int rows = m.mirrored_sets();
  const int cols = m.replica_groups();
  const int threshold = mz_threshold(cols, m.mz_count());

  std::vector<RowView> views(rows);
  for (int r = 0; r < rows; ++r) views[r] = view_of(m, r, threshold);

  auto execute = [&](int ra, int ca, int rb, int cb, const SwapEval& e) {
    SwapRecord rec;
    rec.row_a = ra;
    rec.col_a = ca;
    rec.row_b = rb;
    rec.col_b = cb;
    rec.instance_a = m.cell(ra, ca).id;
    rec.instance_b = m.cell(rb, cb).id;
    rec.before_overpop_a = views[ra].overpop;
    rec.before_overpop_b = views[rb].overpop;
    rec.after_overpop_a = e.after_overpop_a;
    rec.after_overpop_b = e.after_overpop_b;
    rec.before_excess_total = views[ra].excess + views[rb].excess;
    rec.after_excess_total = e.after_excess_a + e.after_excess_b;
    std::swap(m.cell(ra, ca), m.cell(rb, cb));
    views[ra] = view_of(m, ra, threshold);
    views[rb] = view_of(m, rb, threshold);
    result.swaps.push_back(rec);
  };

  // One swap for bad row `ra`, or false if no valid partner exists.
  // Sources: overpopulated MZs in label order, cells in column order.
  // Partners: bad rows ascending, then good rows ascending; cells in
  // column order. First valid swap that also drops total excess wins; a
  // merely count-valid swap is kept as fallback.
  auto try_repair_row = [&](int ra) -> bool {
    std::vector<std::string> over_mzs;
    for (const auto& [mz, count] : views[ra].hist) {
      if (count > threshold) over_mzs.push_back(mz);
    }
    struct Candidate {
      int ca, rb, cb;
      SwapEval eval;
    };
    std::optional<Candidate> fallback;
    auto scan_partner = [&](const std::string& mz, int ca, int rb) -> bool {
      for (int cb = 0; cb < cols; ++cb) {
        if (m.cell(rb, cb).mz == mz) continue;  // same-MZ exchange is a no-op
        SwapEval e = evaluate_swap(m, views[ra], views[rb], ra, ca, rb, cb,
                                   threshold);
        if (!e.count_valid) continue;
        if (e.excess_drops) {
          execute(ra, ca, rb, cb, e);
          return true;
        }
        if (!fallback) fallback = Candidate{ca, rb, cb, e};
      }
      return false;
    };
    for (const auto& mz : over_mzs) {
      for (int ca = 0; ca < cols; ++ca) {
        if (m.cell(ra, ca).mz != mz) continue;
        for (int rb = 0; rb < rows; ++rb) {  // bad partners first
          if (rb == ra || views[rb].excess == 0) continue;
          if (scan_partner(mz, ca, rb)) return true;
        }
        for (int rb = 0; rb < rows; ++rb) {  // then good rows
          if (rb == ra || views[rb].excess != 0) continue;
          if (scan_partner(mz, ca, rb)) return true;
        }
      }
    }
    if (fallback) {
      execute(ra, fallback->ca, fallback->rb, fallback->cb, fallback->eval);
      return true;
    }
    return false;
  };

  std::set<int> stuck;
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (int ra = 0; ra < rows; ++ra) {
      while (views[ra].excess > 0) {
        if (!try_repair_row(ra)) {
          stuck.insert(ra);
          break;
        }
        stuck.clear();  // progress may unlock previously stuck rows
        progressed = true;
      }
    }
    if (!stuck.empty() && !progressed) break;
  }

  for (int r = 0; r < rows; ++r) {
    if (views[r].excess > 0) result.residual_bad_rows.push_back(r);
  }
  result.best_effort = !result.residual_bad_rows.empty();
  return result;
}

RepairResult apply_uplift(const AssignmentMatrix& matrix,
                          const std::vector<Instance>& new_instances) {
  const int rows = matrix.mirrored_sets();
  if (static_cast<int>(new_instances.size()) != rows) {
    throw std::invalid_argument("uplift needs exactly one new instance per row");
  }
  const int cols = matrix.replica_groups();
  std::vector<Instance> cells;
  cells.reserve(static_cast<size_t>(rows) * (cols + 1));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) cells.push_back(matrix.cell(r, c));
    cells.push_back(new_instances[r]);
  }
  return repair(
      AssignmentMatrix(cols + 1, rows, matrix.mz_count(), std::move(cells)));
}

RepairResult apply_node_swap(const AssignmentMatrix& matrix,
                             const std::string& old_instance_id,
                             const Instance& new_instance) {
  auto [row, col] = matrix.find(old_instance_id);
  if (row < 0) {
    throw std::invalid_argument("unknown instance: " + old_instance_id);
  }
  AssignmentMatrix m = matrix;
  m.cell(row, col) = new_instance;
  return repair(m);
}

RepairResult apply_downlift(const AssignmentMatrix& matrix,
                            const std::vector<std::string>& removed_instance_ids,
                            const std::vector<Instance>& replacement_pool) {
  if (removed_instance_ids.empty()) {
    return RepairResult{matrix, {}, false, {}};
  }
  const int rows = matrix.mirrored_sets();
  const int cols = matrix.replica_groups();

  // Column-removal mode: one removed instance per row.
  std::vector<int> removed_col(rows, -1);
  bool one_per_row = static_cast<int>(removed_instance_ids.size()) == rows;
  if (one_per_row) {
    for (const auto& id : removed_instance_ids) {
      auto [r, c] = matrix.find(id);
      if (r < 0 || removed_col[r] >= 0) {
        one_per_row = false;
        break;
      }
      removed_col[r] = c;
    }
  }
  if (one_per_row) {
    if (cols == 1) {
      throw std::invalid_argument("cannot remove the only replica group");
    }
    AssignmentMatrix shuffled = matrix;
    for (int r = 0; r < rows; ++r) {
      std::swap(shuffled.cell(r, removed_col[r]), shuffled.cell(r, cols - 1));
    }
    std::vector<Instance> cells;
    cells.reserve(static_cast<size_t>(rows) * (cols - 1));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols - 1; ++c) cells.push_back(shuffled.cell(r, c));
    }
    return repair(
        AssignmentMatrix(cols - 1, rows, matrix.mz_count(), std::move(cells)));
  }

  // Cell-replacement mode: behaves like repeated node swaps.
  if (replacement_pool.size() < removed_instance_ids.size()) {
    throw std::invalid_argument(
        "removal set is not a full column and the replacement pool is too small");
  }
  RepairResult acc{matrix, {}, false, {}};
  size_t next = 0;
  for (const auto& id : removed_instance_ids) {
    if (acc.matrix.find(id).first < 0) {
      throw std::invalid_argument("unknown instance: " + id);
    }
    RepairResult step = apply_node_swap(acc.matrix, id, replacement_pool[next++]);
    acc.matrix = std::move(step.matrix);
    acc.swaps.insert(acc.swaps.end(), step.swaps.begin(), step.swaps.end());
    acc.best_effort = step.best_effort;
    acc.residual_bad_rows = std::move(step.residual_bad_rows);
  }
  return acc;
}

}  // namespace olapsim
