#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "skelact/graph.hpp"
#include "skelact/rng.hpp"

using namespace skelact;

namespace {

JointGraph path_graph(int n) {
  JointGraph g;
  g.node_count = n;
  for (int i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
  return g;
}

// Random connected graph: a random spanning tree plus a few extra edges.
JointGraph random_connected(int n, Rng& rng) {
  JointGraph g;
  g.node_count = n;
  for (int v = 1; v < n; ++v) {
    const int u = static_cast<int>(rng.uniform_int(0, v - 1));
    g.edges.emplace_back(std::min(u, v), std::max(u, v));
  }
  const int extras = static_cast<int>(rng.uniform_int(0, n - 1));
  for (int e = 0; e < extras; ++e) {
    const int a = static_cast<int>(rng.uniform_int(0, n - 1));
    const int b = static_cast<int>(rng.uniform_int(0, n - 1));
    if (a != b) g.edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

}  // namespace

TEST_CASE("head subset induces the nose-eye-ear chains") {
  const JointGraph g = build_part_graph({0, 1, 2, 3, 4});
  CHECK(g.node_count == 5);
  REQUIRE(g.edges.size() == 4);
  CHECK(g.edges == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 3}, {2, 4}});
}

TEST_CASE("default upper-body subset induces arms plus torso links") {
  const JointGraph g = build_part_graph({5, 6, 7, 8, 9, 10, 11, 12});
  CHECK(g.node_count == 8);
  // shoulder-shoulder, arms, shoulder-hip, hip-hip, reindexed densely
  CHECK(g.edges == std::vector<std::pair<int, int>>{
                       {0, 1}, {0, 2}, {0, 6}, {1, 3}, {1, 7}, {2, 4}, {3, 5}, {6, 7}});
}

TEST_CASE("a single joint is a trivial graph") {
  const JointGraph g = build_part_graph({9});
  CHECK(g.node_count == 1);
  CHECK(g.edges.empty());
}

TEST_CASE("the full 17-joint skeleton is connected") {
  const JointGraph g = build_part_graph({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  CHECK(g.node_count == 17);
  CHECK(g.edges.size() == coco_skeleton_edges().size());
  const Eigen::MatrixXi dist = shortest_paths(g);  // throws if disconnected
  CHECK(dist(0, 16) > 0);
}

TEST_CASE("disconnected subsets raise a topology error listing components") {
  CHECK_THROWS_WITH_AS(build_part_graph({0, 9}), doctest::Contains("{9}"), DataError);
}

TEST_CASE("BFS distances on a path") {
  const Eigen::MatrixXi dist = shortest_paths(path_graph(3));
  CHECK(dist(0, 2) == 2);
  for (int i = 0; i < 3; ++i) CHECK(dist(i, i) == 0);
}

TEST_CASE("ear-to-ear distance in the head graph is 4") {
  const JointGraph g = build_part_graph({0, 1, 2, 3, 4});
  const Eigen::MatrixXi dist = shortest_paths(g);
  CHECK(dist(3, 4) == 4);  // ear-eye-nose-eye-ear
}

TEST_CASE("distance partitioning: identity mask plus normalized adjacency") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 4));
    const JointGraph g = random_connected(n, rng);
    const PartitionedGraph pg = distance_partition(g);
    REQUIRE(pg.scale_count() == 2);
    REQUIRE(pg.raw_masks.size() == 2);

    CHECK(pg.raw_masks[0].isApprox(Eigen::MatrixXd::Identity(n, n), 0.0));
    CHECK(pg.masks[0].isApprox(Eigen::MatrixXd::Identity(n, n), 0.0));

    // disjoint supports and raw sum A + I
    const Eigen::MatrixXd sum = pg.raw_masks[0] + pg.raw_masks[1];
    const Eigen::MatrixXd expected = g.adjacency() + Eigen::MatrixXd::Identity(n, n);
    CHECK((sum - expected).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        CHECK((pg.raw_masks[0](i, j) == 0.0 || pg.raw_masks[1](i, j) == 0.0));
      }
    }
  }
}

TEST_CASE("distance masks use hand-checked symmetric normalization") {
  const PartitionedGraph pg = distance_partition(path_graph(3));
  // end node degree 1, middle degree 2
  CHECK(pg.masks[1](0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(pg.masks[1](1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(pg.masks[1](0, 2) == 0.0);
}

TEST_CASE("single node graph: one-hop mask is all zero") {
  JointGraph g;
  g.node_count = 1;
  const PartitionedGraph pg = distance_partition(g);
  CHECK(pg.masks[1](0, 0) == 0.0);
  CHECK(pg.masks[0](0, 0) == 1.0);
}

TEST_CASE("multiscale scale 1 equals the normalized self-looped adjacency") {
  Rng rng(43);
  const JointGraph g = random_connected(5, rng);
  const PartitionedGraph pg = multiscale_partition(g, 1);
  REQUIRE(pg.scale_count() == 1);
  // dense oracle within 1e-12
  const Eigen::MatrixXd looped = g.adjacency() + Eigen::MatrixXd::Identity(5, 5);
  Eigen::VectorXd inv_sqrt(5);
  for (int i = 0; i < 5; ++i) inv_sqrt[i] = 1.0 / std::sqrt(looped.row(i).sum());
  const Eigen::MatrixXd oracle = inv_sqrt.asDiagonal() * looped * inv_sqrt.asDiagonal();
  CHECK((pg.masks[0] - oracle).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("multiscale masks on a path match the hand computation") {
  const PartitionedGraph pg = multiscale_partition(path_graph(3), 2);
  CHECK(pg.masks[0](0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pg.masks[0](1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(pg.masks[0](2, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pg.masks[0](0, 2) == 0.0);
  CHECK(pg.masks[1](0, 2) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("multiscale support equals the k-hop BFS reachability") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(0, 4));
    const JointGraph g = random_connected(n, rng);
    const Eigen::MatrixXi dist = shortest_paths(g);
    const int scales = 3;
    const PartitionedGraph pg = multiscale_partition(g, scales);
    for (int k = 1; k <= scales; ++k) {
      const Eigen::MatrixXd& mask = pg.masks[k - 1];
      CHECK((mask - mask.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK(mask.minCoeff() >= 0.0);
      CHECK(mask.maxCoeff() <= 1.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          CHECK((mask(i, j) > 0.0) == (dist(i, j) <= k));
        }
      }
    }
  }
}

TEST_CASE("zero scales is a parameter error") {
  CHECK_THROWS_AS(multiscale_partition(path_graph(3), 0), UsageError);
}

TEST_CASE("exact-distance masks mark one hop count each, plus the diagonal") {
  const JointGraph g = path_graph(4);
  const Eigen::MatrixXi dist = shortest_paths(g);
  const PartitionedGraph pg = exact_distance_partition(g, 3);
  for (int k = 1; k <= 3; ++k) {
    const Eigen::MatrixXd& raw = pg.raw_masks[k - 1];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const double expected = (i == j || dist(i, j) == k) ? 1.0 : 0.0;
        CHECK(raw(i, j) == expected);
      }
    }
    CHECK((pg.masks[k - 1] - pg.masks[k - 1].transpose()).cwiseAbs().maxCoeff() <= 1e-14);
  }
}
