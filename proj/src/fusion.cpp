#include "skelact/fusion.hpp"

#include <cmath>

namespace skelact {

Tensor fusion_weights(const FusionParams& fp) {
  if (!(fp.reinforcement > 0.0)) {
    throw UsageError("fusion_weights: reinforcement factor must be positive");
  }
  if (fp.omega.size() < 1) throw DimensionError("fusion_weights: omega is empty");
  if (!fp.omega.data().isFinite().all()) {
    throw NumericalError("fusion_weights: omega contains non-finite entries");
  }
  Tensor scaled = mul(fp.omega, Tensor::scalar(fp.reinforcement));
  // Max-subtraction; the shift is constant so softmax and its gradient are
  // unchanged.
  const double shift = scaled.data().maxCoeff();
  Tensor exps = exp(sub(scaled, Tensor::scalar(shift)));
  return div(exps, sum(exps));
}

Tensor fuse(const std::vector<Tensor>& features, const Tensor& alpha) {
  if (features.empty()) throw DimensionError("fuse: no feature streams");
  if (alpha.size() != static_cast<Index>(features.size())) {
    throw DimensionError("fuse: " + std::to_string(features.size()) + " streams but " +
                         std::to_string(alpha.size()) + " weights");
  }
  const Shape& shape = features.front().shape();
  for (const Tensor& f : features) {
    if (f.shape() != shape) {
      throw DimensionError("fuse: feature shape mismatch, " + shape_to_string(f.shape()) +
                           " vs " + shape_to_string(shape));
    }
  }
  Tensor out;
  for (std::size_t m = 0; m < features.size(); ++m) {
    Tensor term = mul(element(alpha, static_cast<Index>(m)), features[m]);
    out = m == 0 ? term : add(out, term);
  }
  return out;
}

}  // namespace skelact
