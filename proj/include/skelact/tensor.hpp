#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "skelact/errors.hpp"

namespace skelact {

using Eigen::ArrayXd;
using Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<Index>;

class Tape;

std::string shape_to_string(const Shape& shape);
Index shape_size(const Shape& shape);

// Immutable dense value, double precision, row-major. A tensor may be bound
// to a Tape (requires_grad), in which case operations consuming it are
// recorded for reverse-mode differentiation. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, ArrayXd data);

  static Tensor zeros(Shape shape);
  static Tensor constant(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_matrix(const RowMatrix& m);
  static Tensor from_matrix(const Eigen::MatrixXd& m);
  // Row-major flat data with an explicit shape.
  static Tensor from_flat(Shape shape, std::vector<double> values);
  static Tensor row_vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_ ? data_->size() : 0; }
  Index rows() const;
  Index cols() const;
  bool is_scalar() const { return size() == 1; }

  const ArrayXd& data() const;
  double value() const;          // scalar tensors only
  double at_flat(Index i) const;

  // Rank-2 view of the flat storage.
  Eigen::Map<const RowMatrix> matrix() const;

  bool requires_grad() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  std::shared_ptr<const ArrayXd> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Gradients of a scalar loss with respect to watched leaves, keyed by the
// leaf's node id. Every entry has the shape of its leaf.
class GradientMap {
 public:
  const Tensor& at(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<int, Tensor>& entries() const { return entries_; }

 private:
  friend class Tape;
  std::map<int, Tensor> entries_;
};

// Ordered record of primitive operations. Confined to a single thread;
// independent tapes may run concurrently. backward() replays the record in
// exact reverse order and is repeatable: calling it twice on the same tape
// produces bit-identical results.
class Tape {
 public:
  using Pull = std::function<void(const ArrayXd& upstream, std::vector<ArrayXd>& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a differentiable leaf of this tape. The returned
  // tensor shares storage with the argument, which itself stays unbound.
  Tensor watch(const Tensor& value);

  GradientMap backward(const Tensor& loss) const;

  std::size_t op_count() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }

  // Recording interface for primitive operations: creates a node holding
  // `value` and registers its reverse rule. `pull` receives the upstream
  // gradient of the node and accumulates into grads[input_node].
  Tensor emit(Shape shape, ArrayXd value, Pull pull);

 private:
  int add_node(Shape shape);
  std::vector<Shape> node_shapes_;
  struct Op {
    int out;
    Pull pull;
  };
  std::vector<Op> ops_;
  std::vector<int> leaves_;  // in watch order
};

// ---------------------------------------------------------------------------
// Primitive operations. Each records itself on the tape of its differentiable
// inputs (which must agree). Binary elementwise ops support equal shapes or a
// single-element tensor against any shape; nothing broader.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Raises NumericalError when any divisor entry has magnitude below 1e-12,
// reporting the offending flat positions.
Tensor div(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& t);
Tensor sigmoid(const Tensor& t);
// log(sigmoid(t)) evaluated in the log domain; stays finite where sigmoid
// itself would flush to zero.
Tensor log_sigmoid(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor relu(const Tensor& t);
Tensor min_with_scalar(const Tensor& t, double ceiling);

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
Tensor transpose(const Tensor& t);
Tensor element(const Tensor& t, Index flat_index);
Tensor row(const Tensor& t, Index r);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Sequence-batched ops over rank-3 tensors shaped [T, N, C].
// graph_mix applies a fixed N-by-N mixing matrix to every frame;
// frames_matmul right-multiplies every frame by a shared weight.
Tensor graph_mix(const Eigen::MatrixXd& mix, const Tensor& x);
Tensor frames_matmul(const Tensor& x, const Tensor& w);
// Adds a 1-by-C bias across the trailing dimension of a rank-2 or rank-3
// tensor.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Per-frame mean over the node dimension: [T, N, C] -> [T, C].
Tensor frames_mean_rows(const Tensor& x);

// Central-difference verification of the reverse pass. `f` must be a
// deterministic map from parameter values to a scalar tensor; it is invoked
// once on watched leaves for the analytic gradient and twice per coordinate
// for the numeric one. Returns max over coordinates of
// |g_ad - g_fd| / max(1, |g_fd|). eps must lie in (0, 1e-2].
using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;
double finite_diff_check(const LossFn& f, const std::vector<Tensor>& params, double eps);

}  // namespace skelact
