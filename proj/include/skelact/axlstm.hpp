#pragma once

#include <vector>

#include "skelact/tensor.hpp"

namespace skelact {

enum class CellKind { Lstm, Slstm };
enum class ForgetGate { Sigmoid, Exponential };

// Gate weights shared by the plain LSTM and the sLSTM cell. Row-vector
// convention: x (1 x input) times W (input x hidden).
struct CellParams {
  Tensor w_xi, w_hi, b_i;
  Tensor w_xf, w_hf, b_f;
  Tensor w_xo, w_ho, b_o;
  Tensor w_xc, w_hc, b_c;

  Index input_dim() const { return w_xi.rows(); }
  Index hidden_dim() const { return w_xi.cols(); }
};

struct LstmState {
  Tensor hidden;  // 1 x n
  Tensor cell;    // 1 x n
  static LstmState initial(Index hidden_dim);
};

// sLSTM running state. The stabilizer is a per-unit log-domain running
// maximum kept outside the graph: cell and normalizer carry a shared
// exp(-m) factor that cancels in cell/normalizer, so hidden values and
// gradients match the unstabilized recurrence wherever that one is finite.
struct SLstmState {
  Tensor cell;        // C_t
  Tensor normalizer;  // N_t, > 0 after the first step
  Tensor hidden;      // H_t
  ArrayXd stabilizer;  // m_t, starts at -inf
  static SLstmState initial(Index hidden_dim);
};

LstmState lstm_step(const Tensor& x, const LstmState& s, const CellParams& p);

// One sLSTM update: exponential input gate, sigmoid or exponential forget
// gate, normalizer accumulation, hidden = o * tanh(C/N). `step_index` only
// labels numerical errors.
SLstmState slstm_step(const Tensor& x, const SLstmState& s, const CellParams& p,
                      ForgetGate forget, int step_index = -1);

// Windowed attention scoring. The weight and bias span the concatenation of
// the current input and previous hidden state: both are
// window x (input_dim + hidden_dim).
struct AttentionParams {
  Tensor weight;
  Tensor bias;
  int window = 0;
};

struct AttentionResult {
  Tensor pooled;  // 1 x n, ReLU of the alpha-weighted hidden sum
  Tensor alpha;   // window x 1, sums to one
};

// Scores: broadcast [x_t, h_prev] against the rows of the weight, add the
// bias, take row means, softmax over the window. `window_states` must hold
// exactly `window` hidden states in chronological order.
AttentionResult attention_pool(const std::vector<Tensor>& window_states,
                               const AttentionParams& ap, const Tensor& x_last,
                               const Tensor& h_prev);

// Runs the selected cell across all rows of `features` ([T, d]) and returns
// the T hidden states.
std::vector<Tensor> run_cell(const Tensor& features, CellKind kind, const CellParams& p,
                             ForgetGate forget);

// Full temporal head: recurrence plus attention pooling over the final
// window of hidden states (zero-padded on the left when T < window).
Tensor axlstm_forward(const Tensor& features, CellKind kind, const CellParams& p,
                      ForgetGate forget, const AttentionParams& ap);

}  // namespace skelact
