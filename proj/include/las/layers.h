#pragma once

#include <vector>

#include "las/rng.h"
#include "las/tensor.h"

namespace las {

// Character lookup table. lookup(i) returns the ith row of weights and is
// numerically identical to onehot(i) * weights.
struct EmbeddingTable {
  TensorPtr weights;  // [n x m]

  int vocab_size() const { return weights->rows(); }
  int dim() const { return weights->cols(); }
};

TensorPtr embed(Graph& g, const EmbeddingTable& table, int index);  // [1 x m]

// Gate order in the fused matrices/bias: input, forget, output, candidate.
struct LstmCell {
  TensorPtr w_x;   // [in x 4H]
  TensorPtr w_h;   // [H x 4H]
  TensorPtr bias;  // [4H]

  int input_dim() const { return w_x->rows(); }
  int hidden() const { return w_h->rows(); }
};

struct LstmState {
  TensorPtr h;  // [1 x H]
  TensorPtr c;  // [1 x H]
};

LstmCell make_lstm_cell(int input_dim, int hidden, Rng& rng);
LstmState lstm_zero_state(Graph& g, const LstmCell& cell);
LstmState lstm_step(Graph& g, const LstmCell& cell, const TensorPtr& x, const LstmState& prev);

// Stack of bidirectional layers; each layer reads the previous layer's
// concatenated outputs. Output width is 2H for every layer.
struct Blstm {
  struct Layer {
    LstmCell fwd;
    LstmCell bwd;
  };
  std::vector<Layer> layers;

  int hidden() const { return layers.front().fwd.hidden(); }
  int output_dim() const { return 2 * hidden(); }
};

Blstm make_blstm(int input_dim, int hidden, int num_layers, Rng& rng);
TensorPtr blstm_forward(Graph& g, const Blstm& net, const TensorPtr& x);  // [T x 2H]

// Normalized (Glorot) initialization: uniform on +-sqrt(6 / (fan_in + fan_out))
// for 2-D weights. Biases are initialized to zero separately.
Tensor glorot_init(const std::vector<int>& shape, Rng& rng);

}  // namespace las
