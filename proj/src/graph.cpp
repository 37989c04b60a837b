#include "skelact/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace skelact {

const std::vector<std::pair<int, int>>& coco_skeleton_edges() {
  static const std::vector<std::pair<int, int>> edges = {
      {0, 1},  {0, 2},  {1, 3},   {2, 4},                       // nose-eyes, eyes-ears
      {3, 5},  {4, 6},                                          // ears-shoulders
      {5, 6},  {5, 7},  {7, 9},   {6, 8},  {8, 10},             // shoulders, arms
      {5, 11}, {6, 12}, {11, 12},                               // torso
      {11, 13}, {13, 15}, {12, 14}, {14, 16},                   // legs
  };
  return edges;
}

std::vector<std::vector<int>> JointGraph::neighbor_lists() const {
  std::vector<std::vector<int>> adj(node_count);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

Eigen::MatrixXd JointGraph::adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(node_count, node_count);
  for (auto [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

JointGraph build_part_graph(const std::vector<int>& subset) {
  if (subset.empty()) throw DataError("build_part_graph: empty joint subset");
  std::vector<int> dense(kJointCount, -1);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const int joint = subset[i];
    if (joint < 0 || joint >= kJointCount) {
      throw DataError("build_part_graph: joint index " + std::to_string(joint) +
                      " outside 0.." + std::to_string(kJointCount - 1));
    }
    if (dense[joint] != -1) {
      throw DataError("build_part_graph: duplicate joint index " + std::to_string(joint));
    }
    dense[joint] = static_cast<int>(i);
  }

  JointGraph g;
  g.node_count = static_cast<int>(subset.size());
  for (auto [a, b] : coco_skeleton_edges()) {
    if (dense[a] >= 0 && dense[b] >= 0) {
      int u = dense[a], v = dense[b];
      if (u > v) std::swap(u, v);
      g.edges.emplace_back(u, v);
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

  // Connectivity check; report components in terms of the original joints.
  std::vector<int> component(g.node_count, -1);
  const auto adj = g.neighbor_lists();
  int component_count = 0;
  for (int start = 0; start < g.node_count; ++start) {
    if (component[start] != -1) continue;
    component[start] = component_count;
    std::deque<int> queue{start};
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : adj[u]) {
        if (component[v] == -1) {
          component[v] = component_count;
          queue.push_back(v);
        }
      }
    }
    ++component_count;
  }
  if (component_count > 1) {
    std::ostringstream msg;
    msg << "build_part_graph: induced subgraph is disconnected; components:";
    for (int c = 0; c < component_count; ++c) {
      msg << " {";
      bool first = true;
      for (int i = 0; i < g.node_count; ++i) {
        if (component[i] == c) {
          if (!first) msg << ',';
          msg << subset[i];
          first = false;
        }
      }
      msg << '}';
    }
    throw DataError(msg.str());
  }
  return g;
}

Eigen::MatrixXi shortest_paths(const JointGraph& g) {
  const int n = g.node_count;
  Eigen::MatrixXi dist = Eigen::MatrixXi::Constant(n, n, -1);
  const auto adj = g.neighbor_lists();
  for (int s = 0; s < n; ++s) {
    dist(s, s) = 0;
    std::deque<int> queue{s};
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : adj[u]) {
        if (dist(s, v) == -1) {
          dist(s, v) = dist(s, u) + 1;
          queue.push_back(v);
        }
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (dist(i, j) < 0) throw DataError("shortest_paths: graph is disconnected");
    }
  }
  return dist;
}

namespace {

// D^{-1/2} M D^{-1/2} with D the row-sum degree of M itself; zero-degree
// rows and columns are left at zero.
Eigen::MatrixXd symmetric_normalize(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double degree = m.row(i).sum();
    inv_sqrt[i] = degree > 0.0 ? 1.0 / std::sqrt(degree) : 0.0;
  }
  return inv_sqrt.asDiagonal() * m * inv_sqrt.asDiagonal();
}

}  // namespace

PartitionedGraph distance_partition(const JointGraph& g) {
  const int n = g.node_count;
  PartitionedGraph pg;
  pg.strategy = PartitionStrategy::Distance;
  pg.node_count = n;
  Eigen::MatrixXd self = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd hop = g.adjacency();
  pg.raw_masks = {self, hop};
  pg.masks = {symmetric_normalize(self), symmetric_normalize(hop)};
  return pg;
}

PartitionedGraph multiscale_partition(const JointGraph& g, int scales) {
  if (scales < 1) {
    throw UsageError("multiscale_partition: scale count must be >= 1, got " +
                     std::to_string(scales));
  }
  const int n = g.node_count;
  Eigen::MatrixXd looped = g.adjacency() + Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd base = symmetric_normalize(looped);

  PartitionedGraph pg;
  pg.strategy = PartitionStrategy::Multiscale;
  pg.node_count = n;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= scales; ++k) {
    power = power * base;
    pg.masks.push_back(power.cwiseMin(1.0));
  }
  return pg;
}

PartitionedGraph exact_distance_partition(const JointGraph& g, int scales) {
  if (scales < 1) {
    throw UsageError("exact_distance_partition: scale count must be >= 1, got " +
                     std::to_string(scales));
  }
  const int n = g.node_count;
  const Eigen::MatrixXi dist = shortest_paths(g);
  PartitionedGraph pg;
  pg.strategy = PartitionStrategy::ExactDistance;
  pg.node_count = n;
  for (int k = 1; k <= scales; ++k) {
    Eigen::MatrixXd mask = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (dist(i, j) == k) mask(i, j) = 1.0;
      }
    }
    pg.raw_masks.push_back(mask);
    pg.masks.push_back(symmetric_normalize(mask));
  }
  return pg;
}

PartitionedGraph build_partition(const JointGraph& g, PartitionStrategy strategy, int scales) {
  switch (strategy) {
    case PartitionStrategy::Distance:
      return distance_partition(g);
    case PartitionStrategy::Multiscale:
      return multiscale_partition(g, scales);
    case PartitionStrategy::ExactDistance:
      return exact_distance_partition(g, scales);
  }
  throw UsageError("build_partition: unknown strategy");
}

}  // namespace skelact
