#pragma once

#include <vector>

#include "skelact/graph.hpp"
#include "skelact/tensor.hpp"

namespace skelact {

// One graph-convolution block: per-partition weights plus a shared bias.
struct GcnLayerParams {
  std::vector<Tensor> weights;  // K matrices, all C_in x C_out
  Tensor bias;                  // 1 x C_out

  Index in_channels() const;
  Index out_channels() const;
};

// Stream encoder: pointwise input projection, 9 GCN blocks in residual
// groups of `group_size`, a global residual from the projected input, then
// per-frame mean pooling and projection to the 256-dim feature space.
struct StreamEncoderParams {
  Tensor input_w;  // 2 x C
  Tensor input_b;  // 1 x C
  std::vector<GcnLayerParams> blocks;
  Tensor output_w;  // C x feature_dim
  Tensor output_b;  // 1 x feature_dim
  int group_size = 3;

  void validate(const PartitionedGraph& pg) const;
  Index parameter_count() const;
};

// Spatial graph convolution over a frame sequence [T, N, C_in]:
// per frame, ReLU(sum_k mask_k * X_t * W_k + bias).
Tensor gcn_layer(const Tensor& x, const PartitionedGraph& pg, const GcnLayerParams& p);

// Full per-stream encoder. `coords` is the normalized [T, N, 2] part tensor;
// the result is the [T, feature_dim] frame-feature sequence.
Tensor stream_encode(const Tensor& coords, const PartitionedGraph& pg,
                     const StreamEncoderParams& sep);

// Literal node-wise spatial aggregation for one frame under distance
// partitioning: each root sums its self feature through W_1 and its 1-hop
// neighbors through W_2 with symmetric subset-cardinality normalization.
// Reference route for gcn_layer; values only, no recording.
Eigen::MatrixXd node_aggregation_oracle(const Eigen::MatrixXd& x, const JointGraph& g,
                                        const std::vector<Eigen::MatrixXd>& weights);

}  // namespace skelact
