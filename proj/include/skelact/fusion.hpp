#pragma once

#include <vector>

#include "skelact/tensor.hpp"

namespace skelact {

// Learnable stream-fusion weights: alpha = softmax(lambda * omega).
// omega starts at zero so both streams begin with equal weight; lambda is a
// fixed reinforcement factor scaling how sharply alpha reacts to omega.
struct FusionParams {
  Tensor omega;             // M x 1
  double reinforcement = 1.0;  // lambda > 0
};

// Softmax of lambda*omega with max-subtraction. The result sums to one and
// every entry lies strictly inside (0, 1).
Tensor fusion_weights(const FusionParams& fp);

// Convex per-frame combination sum_m alpha_m * features[m]; every feature
// sequence must share one shape.
Tensor fuse(const std::vector<Tensor>& features, const Tensor& alpha);

}  // namespace skelact
