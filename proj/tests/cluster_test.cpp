#include "olapsim/cluster.hpp"

#include <algorithm>
#include <random>

#include "doctest.h"
#include "olapsim/placement.hpp"
#include "olapsim/rng.hpp"

using namespace olapsim;

namespace {

std::vector<Instance> pool_of(const std::vector<std::string>& mzs) {
  std::vector<Instance> pool;
  for (size_t i = 0; i < mzs.size(); ++i) {
    pool.push_back({"i" + std::to_string(i), mzs[i]});
  }
  return pool;
}

std::vector<std::string> row_mzs(const AssignmentMatrix& m, int row) {
  std::vector<std::string> out;
  for (int c = 0; c < m.replica_groups(); ++c) out.push_back(m.cell(row, c).mz);
  return out;
}

}  // namespace

TEST_CASE("mz_histogram counts zones") {
  CHECK(mz_histogram({{"a", "A"}, {"b", "B"}, {"c", "C"}}) ==
        std::map<std::string, int>{{"A", 1}, {"B", 1}, {"C", 1}});
  CHECK(mz_histogram({}) == std::map<std::string, int>{});
  CHECK(mz_histogram({{"a", "A"}, {"b", "A"}, {"c", "B"}}) ==
        std::map<std::string, int>{{"A", 2}, {"B", 1}});
}

TEST_CASE("build_matrix single row covers all zones") {
  auto m = build_matrix(3, 1, pool_of({"A", "B", "C"}));
  CHECK(m.replica_groups() == 3);
  CHECK(m.mirrored_sets() == 1);
  CHECK(m.mz_count() == 3);
  CHECK(row_mzs(m, 0) == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("build_matrix with R=1 yields one instance per row") {
  auto m = build_matrix(1, 3, pool_of({"A", "B", "C"}));
  CHECK(m.mirrored_sets() == 3);
  CHECK(row_mzs(m, 0) == std::vector<std::string>{"A"});
  CHECK(row_mzs(m, 1) == std::vector<std::string>{"B"});
  CHECK(row_mzs(m, 2) == std::vector<std::string>{"C"});
}

TEST_CASE("build_matrix cycles MZ buckets row-major") {
  auto m = build_matrix(3, 2, pool_of({"A", "A", "B", "B", "C", "C"}));
  for (int r = 0; r < 2; ++r) {
    auto hist = mz_histogram(m.row(r));
    CHECK(hist == std::map<std::string, int>{{"A", 1}, {"B", 1}, {"C", 1}});
  }
}

TEST_CASE("build_matrix is deterministic in pool order") {
  auto pool = pool_of({"B", "A", "C", "A", "C", "B"});
  auto m1 = build_matrix(3, 2, pool);
  auto m2 = build_matrix(3, 2, pool);
  CHECK(m1 == m2);
}

TEST_CASE("build_matrix rejects an insufficient pool") {
  CHECK_THROWS_AS(build_matrix(3, 2, pool_of({"A", "B", "C"})),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_matrix(1, 1, {}), std::invalid_argument);
}

TEST_CASE("build_matrix rows respect the per-MZ threshold on balanced pools") {
  std::mt19937_64 rng = make_stream(7, "cluster-build-property");
  for (int round = 0; round < 200; ++round) {
    int r = 1 + static_cast<int>(rng() % 6);
    int n = 1 + static_cast<int>(rng() % 8);
    int mz = 2 + static_cast<int>(rng() % 4);
    int total = r * n;
    // Balanced pool: counts differ by at most one across zones.
    std::vector<std::string> mzs;
    for (int i = 0; i < total; ++i) {
      mzs.push_back(std::string(1, static_cast<char>('A' + i % mz)));
    }
    std::shuffle(mzs.begin(), mzs.end(), rng);
    auto m = build_matrix(r, n, pool_of(mzs));
    for (int row = 0; row < n; ++row) {
      auto st = row_status(m.row(row), r, m.mz_count());
      CAPTURE(r);
      CAPTURE(n);
      CAPTURE(mz);
      CHECK(st.good());
    }
  }
}

TEST_CASE("derive_host_assignment expands a single row") {
  auto m = build_matrix(3, 1, pool_of({"A", "B", "C"}));
  SegmentMap segmap;
  segmap.rows["s1"] = 0;
  auto hosts = derive_host_assignment(m, segmap);
  CHECK(hosts.size() == 3);
  for (const auto& [_, segs] : hosts) {
    CHECK(segs == std::set<std::string>{"s1"});
  }
}

TEST_CASE("derive_host_assignment with empty map leaves hosts empty") {
  auto m = build_matrix(2, 2, pool_of({"A", "B", "A", "B"}));
  auto hosts = derive_host_assignment(m, SegmentMap{});
  CHECK(hosts.size() == 4);
  for (const auto& [_, segs] : hosts) CHECK(segs.empty());
}

TEST_CASE("derive_host_assignment splits rows") {
  auto m = build_matrix(2, 2, pool_of({"A", "B", "A", "B"}));
  SegmentMap segmap;
  segmap.rows = {{"s1", 0}, {"s2", 1}, {"s3", 0}};
  auto hosts = derive_host_assignment(m, segmap);
  for (int c = 0; c < 2; ++c) {
    CHECK(hosts[m.cell(0, c).id] == std::set<std::string>{"s1", "s3"});
    CHECK(hosts[m.cell(1, c).id] == std::set<std::string>{"s2"});
  }
  // Every segment lands on exactly one host per replica-group column.
  for (const auto& seg : {"s1", "s2", "s3"}) {
    int replicas = 0;
    for (const auto& [_, segs] : hosts) replicas += segs.count(seg);
    CHECK(replicas == m.replica_groups());
  }
}

TEST_CASE("derive_host_assignment rejects dangling rows") {
  auto m = build_matrix(2, 2, pool_of({"A", "B", "A", "B"}));
  SegmentMap segmap;
  segmap.rows["s1"] = 5;
  CHECK_THROWS_AS(derive_host_assignment(m, segmap), std::invalid_argument);
}

TEST_CASE("duplicate instances are rejected") {
  std::vector<Instance> cells{{"x", "A"}, {"x", "B"}};
  CHECK_THROWS_AS(AssignmentMatrix(2, 1, 2, cells), std::invalid_argument);
}
