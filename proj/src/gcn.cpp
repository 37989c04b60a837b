#include "skelact/gcn.hpp"

#include <cmath>

namespace skelact {

Index GcnLayerParams::in_channels() const {
  if (weights.empty()) throw DimensionError("gcn layer: no partition weights");
  return weights.front().rows();
}

Index GcnLayerParams::out_channels() const {
  if (weights.empty()) throw DimensionError("gcn layer: no partition weights");
  return weights.front().cols();
}

void StreamEncoderParams::validate(const PartitionedGraph& pg) const {
  if (blocks.empty()) throw DimensionError("stream encoder: no GCN blocks");
  if (group_size < 1) throw UsageError("stream encoder: group size must be >= 1");
  if (static_cast<int>(blocks.size()) % group_size != 0) {
    throw UsageError("stream encoder: block count " + std::to_string(blocks.size()) +
                     " is not a multiple of the residual group size " +
                     std::to_string(group_size));
  }
  Index channels = input_w.cols();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const GcnLayerParams& block = blocks[b];
    if (static_cast<int>(block.weights.size()) != pg.scale_count()) {
      throw DimensionError("stream encoder: block " + std::to_string(b) + " has " +
                           std::to_string(block.weights.size()) + " partition weights, graph has " +
                           std::to_string(pg.scale_count()));
    }
    if (block.in_channels() != channels) {
      throw DimensionError("stream encoder: block " + std::to_string(b) + " input channels " +
                           std::to_string(block.in_channels()) + " do not chain from " +
                           std::to_string(channels));
    }
    channels = block.out_channels();
    const bool group_end = (b + 1) % static_cast<std::size_t>(group_size) == 0;
    if (group_end) {
      const std::size_t group_start = b + 1 - static_cast<std::size_t>(group_size);
      if (blocks[group_start].in_channels() != channels) {
        throw UsageError("stream encoder: residual group ending at block " + std::to_string(b) +
                         " changes channel count " +
                         std::to_string(blocks[group_start].in_channels()) + " -> " +
                         std::to_string(channels) + "; groups must preserve it");
      }
    }
  }
  if (output_w.rows() != channels) {
    throw DimensionError("stream encoder: output projection expects " +
                         std::to_string(output_w.rows()) + " channels, blocks produce " +
                         std::to_string(channels));
  }
}

Index StreamEncoderParams::parameter_count() const {
  Index count = input_w.size() + input_b.size() + output_w.size() + output_b.size();
  for (const GcnLayerParams& block : blocks) {
    for (const Tensor& w : block.weights) count += w.size();
    count += block.bias.size();
  }
  return count;
}

Tensor gcn_layer(const Tensor& x, const PartitionedGraph& pg, const GcnLayerParams& p) {
  if (x.rank() != 3) {
    throw DimensionError("gcn_layer: expected [T, N, C] input, got " +
                         shape_to_string(x.shape()));
  }
  if (x.shape()[1] != pg.node_count) {
    throw DimensionError("gcn_layer: input has " + std::to_string(x.shape()[1]) +
                         " nodes, partition has " + std::to_string(pg.node_count));
  }
  if (static_cast<int>(p.weights.size()) != pg.scale_count()) {
    throw DimensionError("gcn_layer: " + std::to_string(p.weights.size()) +
                         " weights for " + std::to_string(pg.scale_count()) + " partitions");
  }
  Tensor acc;
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    Tensor term = frames_matmul(graph_mix(pg.masks[k], x), p.weights[k]);
    acc = k == 0 ? term : add(acc, term);
  }
  return relu(add_bias(acc, p.bias));
}

Tensor stream_encode(const Tensor& coords, const PartitionedGraph& pg,
                     const StreamEncoderParams& sep) {
  sep.validate(pg);
  if (coords.rank() != 3 || coords.shape()[2] != sep.input_w.rows()) {
    throw DimensionError("stream_encode: expected [T, N, " + std::to_string(sep.input_w.rows()) +
                         "] coordinates, got " + shape_to_string(coords.shape()));
  }

  const Tensor projected = add_bias(frames_matmul(coords, sep.input_w), sep.input_b);

  Tensor h = projected;
  Tensor group_input = projected;
  for (std::size_t b = 0; b < sep.blocks.size(); ++b) {
    h = gcn_layer(h, pg, sep.blocks[b]);
    if ((b + 1) % static_cast<std::size_t>(sep.group_size) == 0) {
      h = add(h, group_input);
      group_input = h;
    }
  }
  h = add(h, projected);  // global residual from the projected input

  const Tensor pooled = frames_mean_rows(h);  // [T, C]
  return add_bias(matmul(pooled, sep.output_w), sep.output_b);
}

Eigen::MatrixXd node_aggregation_oracle(const Eigen::MatrixXd& x, const JointGraph& g,
                                        const std::vector<Eigen::MatrixXd>& weights) {
  if (weights.size() != 2) {
    throw DimensionError("node_aggregation_oracle: distance partitioning uses 2 weights");
  }
  if (x.rows() != g.node_count) {
    throw DimensionError("node_aggregation_oracle: feature rows do not match node count");
  }
  const auto adj = g.neighbor_lists();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), weights[0].cols());
  for (int i = 0; i < g.node_count; ++i) {
    // Label 1: the root itself, a singleton subset on both ends.
    out.row(i) += x.row(i) * weights[0];
    // Label 2: 1-hop neighbors. The subset of label-2 nodes around the root
    // has size deg(i); seen from neighbor j the root sits in a subset of
    // size deg(j). Symmetric normalization uses both cardinalities.
    for (int j : adj[i]) {
      const double z_root = static_cast<double>(adj[i].size());
      const double z_neighbor = static_cast<double>(adj[j].size());
      out.row(i) += x.row(j) * weights[1] / std::sqrt(z_root * z_neighbor);
    }
  }
  return out;
}

}  // namespace skelact
