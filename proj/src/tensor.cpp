#include "skelact/tensor.hpp"

#include <cmath>
#include <sstream>

namespace skelact {

namespace {

using MapMat = Eigen::Map<const RowMatrix>;
using MutMat = Eigen::Map<RowMatrix>;

MapMat as_matrix(const ArrayXd& flat, Index r, Index c) {
  return MapMat(flat.data(), r, c);
}

ArrayXd flat_of(const RowMatrix& m) {
  return Eigen::Map<const ArrayXd>(m.data(), m.size());
}

void accumulate(ArrayXd& slot, const ArrayXd& delta) {
  if (slot.size() == 0) {
    slot = delta;
  } else {
    slot += delta;
  }
}

// Tape shared by the differentiable inputs, or nullptr for a pure value
// computation. Mixing tapes is a programming error.
Tape* joint_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (t->tape() == nullptr) continue;
    if (tape != nullptr && tape != t->tape()) {
      throw UsageError("operation mixes tensors recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got shape " +
                         shape_to_string(t.shape()));
  }
}

void require_rank3(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected rank-3 tensor, got shape " +
                         shape_to_string(t.shape()));
  }
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, ArrayXd data) : shape_(std::move(shape)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (Index e : shape_) {
    if (e < 1) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape_));
  }
  if (shape_size(shape_) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape_));
  }
  data_ = std::make_shared<const ArrayXd>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  ArrayXd d = ArrayXd::Zero(shape_size(shape));
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::constant(Shape shape, double value) {
  ArrayXd d = ArrayXd::Constant(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double value) { return constant({1, 1}, value); }

Tensor Tensor::from_matrix(const RowMatrix& m) {
  return Tensor({m.rows(), m.cols()}, flat_of(m));
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  return from_matrix(RowMatrix(m));
}

Tensor Tensor::from_flat(Shape shape, std::vector<double> values) {
  ArrayXd d = Eigen::Map<const ArrayXd>(values.data(), static_cast<Index>(values.size()));
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::row_vector(std::initializer_list<double> values) {
  ArrayXd d(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) d[i++] = v;
  return Tensor({1, static_cast<Index>(values.size())}, std::move(d));
}

Index Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is not rank-2");
  return shape_[0];
}

Index Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is not rank-2");
  return shape_[1];
}

const ArrayXd& Tensor::data() const {
  if (!data_) throw UsageError("tensor is empty");
  return *data_;
}

double Tensor::value() const {
  if (!is_scalar()) {
    throw DimensionError("value(): tensor of shape " + shape_to_string(shape_) + " is not scalar");
  }
  return (*data_)[0];
}

double Tensor::at_flat(Index i) const {
  if (i < 0 || i >= size()) throw DimensionError("at_flat: index out of range");
  return (*data_)[i];
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  require_rank2(*this, "matrix");
  return as_matrix(data(), shape_[0], shape_[1]);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

int Tape::add_node(Shape shape) {
  node_shapes_.push_back(std::move(shape));
  return static_cast<int>(node_shapes_.size()) - 1;
}

Tensor Tape::watch(const Tensor& value) {
  if (value.tape() != nullptr) {
    throw UsageError("watch: tensor is already bound to a tape");
  }
  Tensor leaf = value;
  leaf.tape_ = this;
  leaf.node_ = add_node(value.shape());
  leaves_.push_back(leaf.node_);
  return leaf;
}

Tensor Tape::emit(Shape shape, ArrayXd value, Pull pull) {
  Tensor out(std::move(shape), std::move(value));
  out.tape_ = this;
  out.node_ = add_node(out.shape());
  ops_.push_back(Op{out.node_, std::move(pull)});
  return out;
}

GradientMap Tape::backward(const Tensor& loss) const {
  if (ops_.empty()) throw UsageError("backward: tape is empty");
  if (loss.tape() != this) throw UsageError("backward: loss was not recorded on this tape");
  if (!loss.is_scalar()) {
    throw DimensionError("backward: loss must be scalar, got shape " +
                         shape_to_string(loss.shape()));
  }

  std::vector<ArrayXd> grads(node_shapes_.size());
  grads[loss.node()] = ArrayXd::Ones(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const ArrayXd& upstream = grads[it->out];
    if (upstream.size() == 0) continue;  // node does not influence the loss
    it->pull(upstream, grads);
  }

  GradientMap result;
  for (int id : leaves_) {
    const Shape& shape = node_shapes_[id];
    ArrayXd g = grads[id].size() ? grads[id] : ArrayXd::Zero(shape_size(shape));
    result.entries_.emplace(id, Tensor(shape, std::move(g)));
  }
  return result;
}

const Tensor& GradientMap::at(const Tensor& leaf) const {
  auto it = entries_.find(leaf.node());
  if (leaf.node() < 0 || it == entries_.end()) {
    throw UsageError("gradient map: tensor is not a watched leaf");
  }
  return it->second;
}

bool GradientMap::contains(const Tensor& leaf) const {
  return leaf.node() >= 0 && entries_.count(leaf.node()) > 0;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  RowMatrix c = a.matrix() * b.matrix();
  Tape* tape = joint_tape({&a, &b});
  if (!tape) return Tensor::from_matrix(c);

  return tape->emit({m, n}, flat_of(c), [a, b, m, k, n](const ArrayXd& up, std::vector<ArrayXd>& g) {
    MapMat u(up.data(), m, n);
    if (a.node() >= 0) accumulate(g[a.node()], flat_of(RowMatrix(u * b.matrix().transpose())));
    if (b.node() >= 0) accumulate(g[b.node()], flat_of(RowMatrix(a.matrix().transpose() * u)));
  });
}

// ---------------------------------------------------------------------------
// elementwise binary: equal shapes or one single-element operand
// ---------------------------------------------------------------------------

namespace {

enum class Broadcast { None, ScalarLeft, ScalarRight };

Broadcast binary_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (a.is_scalar()) return Broadcast::ScalarLeft;
  if (b.is_scalar()) return Broadcast::ScalarRight;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) +
                       " vs " + shape_to_string(b.shape()) +
                       " (only equal-shape or scalar broadcasting is supported)");
}

// Shared recording logic: `fwd` computes the value, `da`/`db` map the
// upstream gradient to each input's gradient before scalar reduction.
template <typename Fwd, typename Da, typename Db>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
  const Broadcast mode = binary_mode(a, b, name);
  const Tensor& wide = (mode == Broadcast::ScalarLeft) ? b : a;
  ArrayXd value = fwd(mode);
  Tape* tape = joint_tape({&a, &b});
  if (!tape) return Tensor(wide.shape(), std::move(value));

  return tape->emit(wide.shape(), std::move(value),
                    [a, b, mode, da, db](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (a.node() >= 0) {
                        ArrayXd ga = da(up, mode);
                        if (mode == Broadcast::ScalarLeft) ga = ArrayXd::Constant(1, ga.sum());
                        accumulate(g[a.node()], ga);
                      }
                      if (b.node() >= 0) {
                        ArrayXd gb = db(up, mode);
                        if (mode == Broadcast::ScalarRight) gb = ArrayXd::Constant(1, gb.sum());
                        accumulate(g[b.node()], gb);
                      }
                    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add",
      [&](Broadcast mode) -> ArrayXd {
        if (mode == Broadcast::None) return a.data() + b.data();
        if (mode == Broadcast::ScalarLeft) return a.value() + b.data();
        return a.data() + b.value();
      },
      [](const ArrayXd& up, Broadcast) -> ArrayXd { return up; },
      [](const ArrayXd& up, Broadcast) -> ArrayXd { return up; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub",
      [&](Broadcast mode) -> ArrayXd {
        if (mode == Broadcast::None) return a.data() - b.data();
        if (mode == Broadcast::ScalarLeft) return a.value() - b.data();
        return a.data() - b.value();
      },
      [](const ArrayXd& up, Broadcast) -> ArrayXd { return up; },
      [](const ArrayXd& up, Broadcast) -> ArrayXd { return -up; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul",
      [&](Broadcast mode) -> ArrayXd {
        if (mode == Broadcast::None) return a.data() * b.data();
        if (mode == Broadcast::ScalarLeft) return a.value() * b.data();
        return a.data() * b.value();
      },
      [a, b](const ArrayXd& up, Broadcast mode) -> ArrayXd {
        if (mode == Broadcast::ScalarRight) return up * b.value();
        return up * b.data();
      },
      [a, b](const ArrayXd& up, Broadcast mode) -> ArrayXd {
        if (mode == Broadcast::ScalarLeft) return up * a.value();
        return up * a.data();
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  constexpr double kSingular = 1e-12;
  // Record near-zero divisor positions before touching the arithmetic.
  const ArrayXd& divisor = b.data();
  Index bad_count = 0;
  Index first_bad = -1;
  for (Index i = 0; i < divisor.size(); ++i) {
    if (std::abs(divisor[i]) < kSingular) {
      if (first_bad < 0) first_bad = i;
      ++bad_count;
    }
  }
  if (bad_count > 0) {
    throw NumericalError("div: divisor magnitude below 1e-12 at " + std::to_string(bad_count) +
                         " position(s), first flat index " + std::to_string(first_bad));
  }
  return binary_op(
      a, b, "div",
      [&](Broadcast mode) -> ArrayXd {
        if (mode == Broadcast::None) return a.data() / b.data();
        if (mode == Broadcast::ScalarLeft) return a.value() / b.data();
        return a.data() / b.value();
      },
      [a, b](const ArrayXd& up, Broadcast mode) -> ArrayXd {
        if (mode == Broadcast::ScalarRight) return up / b.value();
        return up / b.data();
      },
      [a, b](const ArrayXd& up, Broadcast mode) -> ArrayXd {
        switch (mode) {
          case Broadcast::None:
            return -up * a.data() / (b.data() * b.data());
          case Broadcast::ScalarLeft:
            return -up * a.value() / (b.data() * b.data());
          case Broadcast::ScalarRight:
            return -up * a.data() / (b.value() * b.value());
        }
        return up;  // unreachable
      });
}

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

namespace {

// `dfn(up, x, y)` maps the upstream gradient given saved input x and output y.
template <typename Ffn, typename Dfn>
Tensor unary_op(const Tensor& t, Ffn ffn, Dfn dfn) {
  ArrayXd value = ffn(t.data());
  Tape* tape = joint_tape({&t});
  if (!tape) return Tensor(t.shape(), std::move(value));
  ArrayXd saved = value;
  return tape->emit(t.shape(), std::move(value),
                    [t, saved, dfn](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (t.node() >= 0) accumulate(g[t.node()], dfn(up, t.data(), saved));
                    });
}

}  // namespace

Tensor tanh(const Tensor& t) {
  return unary_op(
      t, [](const ArrayXd& x) -> ArrayXd { return x.tanh(); },
      [](const ArrayXd& up, const ArrayXd&, const ArrayXd& y) -> ArrayXd {
        return up * (1.0 - y * y);
      });
}

Tensor sigmoid(const Tensor& t) {
  return unary_op(
      t,
      [](const ArrayXd& x) -> ArrayXd { return 0.5 * (0.5 * x).tanh() + 0.5; },
      [](const ArrayXd& up, const ArrayXd&, const ArrayXd& y) -> ArrayXd {
        return up * y * (1.0 - y);
      });
}

Tensor log_sigmoid(const Tensor& t) {
  return unary_op(
      t,
      [](const ArrayXd& x) -> ArrayXd {
        // -softplus(-x) = -(max(-x, 0) + log1p(exp(-|x|)))
        return -((-x).max(0.0) + (-x.abs()).exp().log1p());
      },
      [](const ArrayXd& up, const ArrayXd& x, const ArrayXd&) -> ArrayXd {
        // d/dx log sigmoid(x) = sigmoid(-x)
        return up * (0.5 - 0.5 * (0.5 * x).tanh());
      });
}

Tensor exp(const Tensor& t) {
  return unary_op(
      t, [](const ArrayXd& x) -> ArrayXd { return x.exp(); },
      [](const ArrayXd& up, const ArrayXd&, const ArrayXd& y) -> ArrayXd { return up * y; });
}

Tensor log(const Tensor& t) {
  return unary_op(
      t, [](const ArrayXd& x) -> ArrayXd { return x.log(); },
      [](const ArrayXd& up, const ArrayXd& x, const ArrayXd&) -> ArrayXd { return up / x; });
}

Tensor relu(const Tensor& t) {
  return unary_op(
      t, [](const ArrayXd& x) -> ArrayXd { return x.max(0.0); },
      [](const ArrayXd& up, const ArrayXd& x, const ArrayXd&) -> ArrayXd {
        return up * (x > 0.0).cast<double>();
      });
}

Tensor min_with_scalar(const Tensor& t, double ceiling) {
  return unary_op(
      t, [ceiling](const ArrayXd& x) -> ArrayXd { return x.min(ceiling); },
      [ceiling](const ArrayXd& up, const ArrayXd& x, const ArrayXd&) -> ArrayXd {
        return up * (x < ceiling).cast<double>();
      });
}

// ---------------------------------------------------------------------------
// reductions and rearrangements
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& t) {
  ArrayXd value = ArrayXd::Constant(1, t.data().sum());
  Tape* tape = joint_tape({&t});
  if (!tape) return Tensor({1, 1}, std::move(value));
  const Index n = t.size();
  return tape->emit({1, 1}, std::move(value), [t, n](const ArrayXd& up, std::vector<ArrayXd>& g) {
    if (t.node() >= 0) accumulate(g[t.node()], ArrayXd::Constant(n, up[0]));
  });
}

Tensor mean(const Tensor& t) {
  ArrayXd value = ArrayXd::Constant(1, t.data().mean());
  Tape* tape = joint_tape({&t});
  if (!tape) return Tensor({1, 1}, std::move(value));
  const Index n = t.size();
  return tape->emit({1, 1}, std::move(value), [t, n](const ArrayXd& up, std::vector<ArrayXd>& g) {
    if (t.node() >= 0)
      accumulate(g[t.node()], ArrayXd::Constant(n, up[0] / static_cast<double>(n)));
  });
}

Tensor transpose(const Tensor& t) {
  require_rank2(t, "transpose");
  const Index r = t.rows(), c = t.cols();
  RowMatrix v = t.matrix().transpose();
  Tape* tape = joint_tape({&t});
  if (!tape) return Tensor::from_matrix(v);
  return tape->emit({c, r}, flat_of(v), [t, r, c](const ArrayXd& up, std::vector<ArrayXd>& g) {
    if (t.node() >= 0) {
      MapMat u(up.data(), c, r);
      accumulate(g[t.node()], flat_of(RowMatrix(u.transpose())));
    }
  });
}

Tensor element(const Tensor& t, Index flat_index) {
  if (flat_index < 0 || flat_index >= t.size()) {
    throw DimensionError("element: flat index " + std::to_string(flat_index) +
                         " out of range for shape " + shape_to_string(t.shape()));
  }
  ArrayXd value = ArrayXd::Constant(1, t.data()[flat_index]);
  Tape* tape = joint_tape({&t});
  if (!tape) return Tensor({1, 1}, std::move(value));
  const Index n = t.size();
  return tape->emit({1, 1}, std::move(value),
                    [t, n, flat_index](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (t.node() >= 0) {
                        ArrayXd delta = ArrayXd::Zero(n);
                        delta[flat_index] = up[0];
                        accumulate(g[t.node()], delta);
                      }
                    });
}

Tensor row(const Tensor& t, Index r) {
  require_rank2(t, "row");
  if (r < 0 || r >= t.rows()) {
    throw DimensionError("row: index " + std::to_string(r) + " out of range for shape " +
                         shape_to_string(t.shape()));
  }
  const Index c = t.cols();
  ArrayXd value = t.data().segment(r * c, c);
  Tape* tape = joint_tape({&t});
  if (!tape) return Tensor({1, c}, std::move(value));
  const Index total = t.size();
  return tape->emit({1, c}, std::move(value),
                    [t, r, c, total](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (t.node() >= 0) {
                        ArrayXd delta = ArrayXd::Zero(total);
                        delta.segment(r * c, c) = up;
                        accumulate(g[t.node()], delta);
                      }
                    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const Index c = parts.front().cols();
  Index total_rows = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch, " + shape_to_string(p.shape()) +
                           " vs expected " + std::to_string(c) + " columns");
    }
    total_rows += p.rows();
  }
  ArrayXd value(total_rows * c);
  Index offset = 0;
  for (const Tensor& p : parts) {
    value.segment(offset, p.size()) = p.data();
    offset += p.size();
  }
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    Tape* pt = joint_tape({&p});
    if (pt) {
      if (tape && tape != pt) throw UsageError("concat_rows mixes tapes");
      tape = pt;
    }
  }
  if (!tape) return Tensor({total_rows, c}, std::move(value));
  return tape->emit({total_rows, c}, std::move(value),
                    [parts](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      Index offset = 0;
                      for (const Tensor& p : parts) {
                        if (p.node() >= 0) accumulate(g[p.node()], up.segment(offset, p.size()));
                        offset += p.size();
                      }
                    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row mismatch, " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  const Index r = a.rows(), ca = a.cols(), cb = b.cols();
  RowMatrix v(r, ca + cb);
  v.leftCols(ca) = a.matrix();
  v.rightCols(cb) = b.matrix();
  Tape* tape = joint_tape({&a, &b});
  if (!tape) return Tensor::from_matrix(v);
  return tape->emit({r, ca + cb}, flat_of(v),
                    [a, b, r, ca, cb](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      MapMat u(up.data(), r, ca + cb);
                      if (a.node() >= 0) accumulate(g[a.node()], flat_of(RowMatrix(u.leftCols(ca))));
                      if (b.node() >= 0) accumulate(g[b.node()], flat_of(RowMatrix(u.rightCols(cb))));
                    });
}

// ---------------------------------------------------------------------------
// sequence-batched ops over [T, N, C]
// ---------------------------------------------------------------------------

Tensor graph_mix(const Eigen::MatrixXd& mix, const Tensor& x) {
  require_rank3(x, "graph_mix");
  const Index t_len = x.shape()[0], n = x.shape()[1], c = x.shape()[2];
  if (mix.rows() != n || mix.cols() != n) {
    throw DimensionError("graph_mix: mixing matrix " + std::to_string(mix.rows()) + "x" +
                         std::to_string(mix.cols()) + " does not match node count " +
                         std::to_string(n));
  }
  ArrayXd value(x.size());
  for (Index t = 0; t < t_len; ++t) {
    MapMat xt(x.data().data() + t * n * c, n, c);
    MutMat out(value.data() + t * n * c, n, c);
    out = mix * xt;
  }
  Tape* tape = joint_tape({&x});
  if (!tape) return Tensor(x.shape(), std::move(value));
  Eigen::MatrixXd mix_t = mix.transpose();
  return tape->emit(x.shape(), std::move(value),
                    [x, mix_t, t_len, n, c](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (x.node() < 0) return;
                      ArrayXd dx(up.size());
                      for (Index t = 0; t < t_len; ++t) {
                        MapMat ut(up.data() + t * n * c, n, c);
                        MutMat out(dx.data() + t * n * c, n, c);
                        out = mix_t * ut;
                      }
                      accumulate(g[x.node()], dx);
                    });
}

Tensor frames_matmul(const Tensor& x, const Tensor& w) {
  require_rank3(x, "frames_matmul");
  require_rank2(w, "frames_matmul");
  const Index t_len = x.shape()[0], n = x.shape()[1], c_in = x.shape()[2];
  if (w.rows() != c_in) {
    throw DimensionError("frames_matmul: channel mismatch, frames " + shape_to_string(x.shape()) +
                         " vs weight " + shape_to_string(w.shape()));
  }
  const Index c_out = w.cols();
  ArrayXd value(t_len * n * c_out);
  for (Index t = 0; t < t_len; ++t) {
    MapMat xt(x.data().data() + t * n * c_in, n, c_in);
    MutMat out(value.data() + t * n * c_out, n, c_out);
    out = xt * w.matrix();
  }
  Tape* tape = joint_tape({&x, &w});
  Shape out_shape{t_len, n, c_out};
  if (!tape) return Tensor(std::move(out_shape), std::move(value));
  return tape->emit(std::move(out_shape), std::move(value),
                    [x, w, t_len, n, c_in, c_out](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (x.node() >= 0) {
                        ArrayXd dx(x.size());
                        for (Index t = 0; t < t_len; ++t) {
                          MapMat ut(up.data() + t * n * c_out, n, c_out);
                          MutMat out(dx.data() + t * n * c_in, n, c_in);
                          out = ut * w.matrix().transpose();
                        }
                        accumulate(g[x.node()], dx);
                      }
                      if (w.node() >= 0) {
                        RowMatrix dw = RowMatrix::Zero(c_in, c_out);
                        for (Index t = 0; t < t_len; ++t) {
                          MapMat xt(x.data().data() + t * n * c_in, n, c_in);
                          MapMat ut(up.data() + t * n * c_out, n, c_out);
                          dw += xt.transpose() * ut;
                        }
                        accumulate(g[w.node()], flat_of(dw));
                      }
                    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("add_bias: expected rank-2 or rank-3 tensor, got " +
                         shape_to_string(x.shape()));
  }
  const Index c = x.shape().back();
  if (bias.rank() != 2 || bias.rows() != 1 || bias.cols() != c) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) +
                         " does not match trailing extent " + std::to_string(c));
  }
  const Index lead = x.size() / c;
  ArrayXd value = x.data();
  for (Index i = 0; i < lead; ++i) value.segment(i * c, c) += bias.data();
  Tape* tape = joint_tape({&x, &bias});
  if (!tape) return Tensor(x.shape(), std::move(value));
  return tape->emit(x.shape(), std::move(value),
                    [x, bias, lead, c](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (x.node() >= 0) accumulate(g[x.node()], up);
                      if (bias.node() >= 0) {
                        ArrayXd db = ArrayXd::Zero(c);
                        for (Index i = 0; i < lead; ++i) db += up.segment(i * c, c);
                        accumulate(g[bias.node()], db);
                      }
                    });
}

Tensor frames_mean_rows(const Tensor& x) {
  require_rank3(x, "frames_mean_rows");
  const Index t_len = x.shape()[0], n = x.shape()[1], c = x.shape()[2];
  ArrayXd value(t_len * c);
  for (Index t = 0; t < t_len; ++t) {
    MapMat xt(x.data().data() + t * n * c, n, c);
    Eigen::Map<Eigen::RowVectorXd> out(value.data() + t * c, c);
    out = xt.colwise().mean();
  }
  Tape* tape = joint_tape({&x});
  if (!tape) return Tensor({t_len, c}, std::move(value));
  return tape->emit({t_len, c}, std::move(value),
                    [x, t_len, n, c](const ArrayXd& up, std::vector<ArrayXd>& g) {
                      if (x.node() < 0) return;
                      ArrayXd dx(x.size());
                      const double scale = 1.0 / static_cast<double>(n);
                      for (Index t = 0; t < t_len; ++t) {
                        for (Index i = 0; i < n; ++i) {
                          dx.segment(t * n * c + i * c, c) = up.segment(t * c, c) * scale;
                        }
                      }
                      accumulate(g[x.node()], dx);
                    });
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

double finite_diff_check(const LossFn& f, const std::vector<Tensor>& params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw UsageError("finite_diff_check: eps must lie in (0, 1e-2], got " + std::to_string(eps));
  }
  if (params.empty()) throw UsageError("finite_diff_check: no parameters");

  // Analytic gradients via one recorded forward pass.
  Tape tape;
  std::vector<Tensor> watched;
  watched.reserve(params.size());
  for (const Tensor& p : params) watched.push_back(tape.watch(p));
  Tensor loss = f(watched);
  if (!loss.is_scalar()) throw DimensionError("finite_diff_check: f must return a scalar");
  if (!std::isfinite(loss.value())) {
    throw NumericalError("finite_diff_check: f is not finite at the base point");
  }
  GradientMap grads = tape.backward(loss);

  auto eval = [&](const std::vector<Tensor>& p) -> double {
    Tensor out = f(p);
    return out.value();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const ArrayXd& analytic = grads.at(watched[pi]).data();
    for (Index j = 0; j < params[pi].size(); ++j) {
      std::vector<Tensor> plus = params;
      std::vector<Tensor> minus = params;
      ArrayXd bumped = params[pi].data();
      bumped[j] += eps;
      plus[pi] = Tensor(params[pi].shape(), bumped);
      bumped[j] -= 2.0 * eps;
      minus[pi] = Tensor(params[pi].shape(), bumped);
      const double f_plus = eval(plus);
      const double f_minus = eval(minus);
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericalError("finite_diff_check: non-finite value at parameter " +
                             std::to_string(pi) + ", coordinate " + std::to_string(j));
      }
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double err = std::abs(analytic[j] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace skelact
