#include "skelact/axlstm.hpp"

#include <cmath>
#include <limits>

namespace skelact {

namespace {

Tensor affine(const Tensor& x, const Tensor& wx, const Tensor& h, const Tensor& wh,
              const Tensor& b) {
  return add(add(matmul(x, wx), matmul(h, wh)), b);
}

void check_cell_shapes(const Tensor& x, const CellParams& p, const char* cell) {
  if (x.rank() != 2 || x.rows() != 1 || x.cols() != p.input_dim()) {
    throw DimensionError(std::string(cell) + ": input shape " + shape_to_string(x.shape()) +
                         " does not match cell input dim " + std::to_string(p.input_dim()));
  }
}

}  // namespace

LstmState LstmState::initial(Index hidden_dim) {
  return LstmState{Tensor::zeros({1, hidden_dim}), Tensor::zeros({1, hidden_dim})};
}

SLstmState SLstmState::initial(Index hidden_dim) {
  SLstmState s;
  s.cell = Tensor::zeros({1, hidden_dim});
  s.normalizer = Tensor::zeros({1, hidden_dim});
  s.hidden = Tensor::zeros({1, hidden_dim});
  s.stabilizer = ArrayXd::Constant(hidden_dim, -std::numeric_limits<double>::infinity());
  return s;
}

LstmState lstm_step(const Tensor& x, const LstmState& s, const CellParams& p) {
  check_cell_shapes(x, p, "lstm_step");
  Tensor gate_i = sigmoid(affine(x, p.w_xi, s.hidden, p.w_hi, p.b_i));
  Tensor gate_f = sigmoid(affine(x, p.w_xf, s.hidden, p.w_hf, p.b_f));
  Tensor gate_o = sigmoid(affine(x, p.w_xo, s.hidden, p.w_ho, p.b_o));
  Tensor candidate = tanh(affine(x, p.w_xc, s.hidden, p.w_hc, p.b_c));
  Tensor cell = add(mul(gate_f, s.cell), mul(gate_i, candidate));
  Tensor hidden = mul(gate_o, tanh(cell));
  return LstmState{hidden, cell};
}

SLstmState slstm_step(const Tensor& x, const SLstmState& s, const CellParams& p,
                      ForgetGate forget, int step_index) {
  check_cell_shapes(x, p, "slstm_step");
  const Index n = p.hidden_dim();

  Tensor z_i = affine(x, p.w_xi, s.hidden, p.w_hi, p.b_i);
  Tensor z_f = affine(x, p.w_xf, s.hidden, p.w_hf, p.b_f);
  Tensor z_o = affine(x, p.w_xo, s.hidden, p.w_ho, p.b_o);
  Tensor z_c = affine(x, p.w_xc, s.hidden, p.w_hc, p.b_c);

  // Stabilizer update. m is treated as a constant, which is exact: C and N
  // carry the same exp(-m) factor, and it cancels in C/N. Both gates are
  // rescaled in the log domain so the branch that wins the max becomes
  // exactly one; multiplying a directly evaluated sigmoid instead flushes
  // the forget gate to zero once z_f drops below about -37 and collapses
  // the normalizer.
  Tensor log_forget = forget == ForgetGate::Sigmoid ? log_sigmoid(z_f) : z_f;
  const ArrayXd m_new = (log_forget.data() + s.stabilizer).max(z_i.data());

  Tensor gate_i = exp(sub(z_i, Tensor({1, n}, m_new)));
  // exp(log f + m_prev - m_new); on the first step m_prev is -inf and the
  // vanished gate only multiplies the zero initial state.
  Tensor gate_f =
      exp(sub(add(log_forget, Tensor({1, n}, ArrayXd(s.stabilizer))), Tensor({1, n}, m_new)));
  Tensor modulated = tanh(z_c);
  Tensor gate_o = sigmoid(z_o);

  SLstmState out;
  out.cell = add(mul(gate_f, s.cell), mul(gate_i, modulated));
  out.normalizer = add(mul(gate_f, s.normalizer), gate_i);
  out.hidden = mul(gate_o, tanh(div(out.cell, out.normalizer)));
  out.stabilizer = m_new;

  if (!out.cell.data().isFinite().all() || !out.normalizer.data().isFinite().all() ||
      !out.hidden.data().isFinite().all()) {
    const double worst = std::max(std::max(z_i.data().abs().maxCoeff(), z_f.data().abs().maxCoeff()),
                                  std::max(z_o.data().abs().maxCoeff(), z_c.data().abs().maxCoeff()));
    throw NumericalError("slstm_step: non-finite state at step " + std::to_string(step_index) +
                         ", max |pre-activation| = " + std::to_string(worst));
  }
  return out;
}

AttentionResult attention_pool(const std::vector<Tensor>& window_states,
                               const AttentionParams& ap, const Tensor& x_last,
                               const Tensor& h_prev) {
  if (ap.window < 1) throw UsageError("attention_pool: window must be >= 1");
  if (static_cast<int>(window_states.size()) != ap.window) {
    throw DimensionError("attention_pool: got " + std::to_string(window_states.size()) +
                         " states for window " + std::to_string(ap.window));
  }
  const Index hidden_dim = h_prev.cols();
  const Index span = x_last.cols() + hidden_dim;
  if (ap.weight.rows() != ap.window || ap.weight.cols() != span ||
      ap.bias.shape() != ap.weight.shape()) {
    throw DimensionError("attention_pool: weight/bias must be [window x input+hidden] = [" +
                         std::to_string(ap.window) + "x" + std::to_string(span) + "], got " +
                         shape_to_string(ap.weight.shape()) + " and " +
                         shape_to_string(ap.bias.shape()));
  }

  Tensor context = concat_cols(x_last, h_prev);  // 1 x span
  Tensor broadcast = matmul(Tensor::constant({ap.window, 1}, 1.0), context);
  Tensor scores_matrix = add(mul(ap.weight, broadcast), ap.bias);  // window x span
  Tensor scores = matmul(scores_matrix,
                         Tensor::constant({span, 1}, 1.0 / static_cast<double>(span)));

  const double shift = scores.data().maxCoeff();
  Tensor exps = exp(sub(scores, Tensor::scalar(shift)));
  Tensor alpha = div(exps, sum(exps));  // window x 1

  Tensor stacked = concat_rows(window_states);  // window x n
  Tensor pooled = relu(matmul(transpose(alpha), stacked));
  return AttentionResult{pooled, alpha};
}

std::vector<Tensor> run_cell(const Tensor& features, CellKind kind, const CellParams& p,
                             ForgetGate forget) {
  if (features.rank() != 2) {
    throw DimensionError("run_cell: expected [T, d] features, got " +
                         shape_to_string(features.shape()));
  }
  const Index t_len = features.rows();
  std::vector<Tensor> hiddens;
  hiddens.reserve(t_len);
  if (kind == CellKind::Lstm) {
    LstmState state = LstmState::initial(p.hidden_dim());
    for (Index t = 0; t < t_len; ++t) {
      state = lstm_step(row(features, t), state, p);
      hiddens.push_back(state.hidden);
    }
  } else {
    SLstmState state = SLstmState::initial(p.hidden_dim());
    for (Index t = 0; t < t_len; ++t) {
      state = slstm_step(row(features, t), state, p, forget, static_cast<int>(t));
      hiddens.push_back(state.hidden);
    }
  }
  return hiddens;
}

Tensor axlstm_forward(const Tensor& features, CellKind kind, const CellParams& p,
                      ForgetGate forget, const AttentionParams& ap) {
  const std::vector<Tensor> hiddens = run_cell(features, kind, p, forget);
  const Index t_len = features.rows();
  const Index n = p.hidden_dim();

  std::vector<Tensor> window;
  window.reserve(ap.window);
  for (int offset = ap.window - 1; offset >= 0; --offset) {
    const Index idx = t_len - 1 - offset;
    window.push_back(idx >= 0 ? hiddens[idx] : Tensor::zeros({1, n}));
  }
  Tensor x_last = row(features, t_len - 1);
  Tensor h_prev = t_len >= 2 ? hiddens[t_len - 2] : Tensor::zeros({1, n});
  return attention_pool(window, ap, x_last, h_prev).pooled;
}

}  // namespace skelact
