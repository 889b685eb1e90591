// Trainable recurrent cells with hand-written forward and backward passes.
#pragma once

#include <cstdint>

#include "esrm/numerics.hpp"
#include "esrm/tensor.hpp"

namespace esrm {

enum class CellKind { kSimpleRnn, kLstm };

// simple-rnn: d*d + d*i + d; lstm: four gates, 4x that.
std::int64_t param_count(CellKind kind, int input_dim, int state_dim);

// h = tanh(W_hh h_prev + W_xh x + b)
struct SimpleRnnCell {
  int input_dim = 0;
  int state_dim = 0;
  Tensor w_xh;  // d x i
  Tensor w_hh;  // d x d
  Tensor b;     // d x 1

  struct Cache {
    Vector x, h_prev, h;
  };

  Vector forward(const Vector& h_prev, const Vector& x,
                 Cache* cache = nullptr) const;
  // Accumulates parameter gradients; writes input and previous-state grads.
  void backward(const Cache& cache, const Vector& dh, Vector& dx,
                Vector& dh_prev);
};

// Standard LSTM, no peepholes. Gate rows are packed [input; forget;
// candidate; output] in w_x (4d x i), w_h (4d x d) and b (4d x 1).
struct LstmCell {
  int input_dim = 0;
  int state_dim = 0;
  Tensor w_x;
  Tensor w_h;
  Tensor b;

  struct State {
    Vector h, c;
  };
  struct Cache {
    Vector x, h_prev, c_prev;
    Vector gates;  // 4d activations [i; f; g; o]
    Vector c, tanh_c;
  };

  State forward(const State& prev, const Vector& x,
                Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Vector& dh, const Vector& dc,
                Vector& dx, Vector& dh_prev, Vector& dc_prev);
};

// Weights uniform on [-k, k] with k = 1/sqrt(state_dim); biases zero except
// the LSTM forget gate, which starts at 1.
SimpleRnnCell make_simple_rnn_cell(int input_dim, int state_dim, Prng& rng);
LstmCell make_lstm_cell(int input_dim, int state_dim, Prng& rng);

}  // namespace esrm
