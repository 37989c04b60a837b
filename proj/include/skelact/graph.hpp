#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "skelact/errors.hpp"

namespace skelact {

inline constexpr int kJointCount = 17;

// COCO-17 keypoint indices: 0 nose, 1/2 eyes, 3/4 ears, 5/6 shoulders,
// 7/8 elbows, 9/10 wrists, 11/12 hips, 13/14 knees, 15/16 ankles.
// The eye-eye link of the stock COCO skeleton is dropped so that the head
// subgraph is the nose-eye-ear chain pair.
const std::vector<std::pair<int, int>>& coco_skeleton_edges();

// Undirected joint graph over densely indexed nodes. Self-loops are never
// stored; partition construction adds them analytically.
struct JointGraph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;  // a < b, sorted, unique

  std::vector<std::vector<int>> neighbor_lists() const;
  Eigen::MatrixXd adjacency() const;
};

// Induced subgraph of the canonical skeleton on `subset`, reindexed densely
// in subset order. Throws DataError when the induced graph is disconnected,
// listing the components.
JointGraph build_part_graph(const std::vector<int>& subset);

// All-pairs BFS hop counts. Requires a connected graph.
Eigen::MatrixXi shortest_paths(const JointGraph& g);

enum class PartitionStrategy { Distance, Multiscale, ExactDistance };

// K spatial masks ready for graph convolution. `masks` hold the normalized
// matrices consumed by the forward pass; `raw_masks` keep the unnormalized
// partition for the distance and exact-distance strategies.
struct PartitionedGraph {
  PartitionStrategy strategy = PartitionStrategy::Distance;
  int node_count = 0;
  std::vector<Eigen::MatrixXd> masks;
  std::vector<Eigen::MatrixXd> raw_masks;

  int scale_count() const { return static_cast<int>(masks.size()); }
};

// K = 2: the root itself and its 1-hop neighbors, each mask symmetrically
// normalized by its own degree matrix (zero-degree rows stay zero).
PartitionedGraph distance_partition(const JointGraph& g);

// Multi-scale masks: with A-hat the symmetrically normalized self-looped
// adjacency, mask k is min(A-hat^k, 1) for k = 1..scales.
PartitionedGraph multiscale_partition(const JointGraph& g, int scales);

// Alternate multi-scale mode: mask k marks exact hop distance k (plus the
// diagonal), then is symmetrically normalized like the distance masks.
PartitionedGraph exact_distance_partition(const JointGraph& g, int scales);

PartitionedGraph build_partition(const JointGraph& g, PartitionStrategy strategy, int scales);

}  // namespace skelact
