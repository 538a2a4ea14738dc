#include "las/layers.h"

#include <cmath>

#include "las/error.h"

namespace las {

TensorPtr embed(Graph& g, const EmbeddingTable& table, int index) {
  if (index < 0 || index >= table.vocab_size()) {
    throw VocabError("embed: index " + std::to_string(index) + " outside vocabulary of size " +
                     std::to_string(table.vocab_size()));
  }
  return g.row(table.weights, index);
}

LstmCell make_lstm_cell(int input_dim, int hidden, Rng& rng) {
  LstmCell cell;
  cell.w_x = make_param(glorot_init({input_dim, 4 * hidden}, rng));
  cell.w_h = make_param(glorot_init({hidden, 4 * hidden}, rng));
  cell.bias = make_param(Tensor({4 * hidden}));
  return cell;
}

LstmState lstm_zero_state(Graph& g, const LstmCell& cell) {
  const int H = cell.hidden();
  return {g.input(Tensor({1, H})), g.input(Tensor({1, H}))};
}

LstmState lstm_step(Graph& g, const LstmCell& cell, const TensorPtr& x, const LstmState& prev) {
  const int H = cell.hidden();
  if (x->cols() != cell.input_dim() || x->rows() != 1) {
    throw DimensionError("lstm_step: input " + shape_str(x->shape()) + " vs cell [" +
                         std::to_string(cell.input_dim()) + "x" + std::to_string(4 * H) + "]");
  }
  if (prev.h->cols() != H || prev.c->cols() != H) {
    throw DimensionError("lstm_step: state " + shape_str(prev.h->shape()) +
                         " vs hidden size " + std::to_string(H));
  }
  auto pre = g.add_bias(g.add(g.matmul(x, cell.w_x), g.matmul(prev.h, cell.w_h)), cell.bias);
  auto gi = g.sigmoid(g.slice_cols(pre, 0, H));
  auto gf = g.sigmoid(g.slice_cols(pre, H, 2 * H));
  auto go = g.sigmoid(g.slice_cols(pre, 2 * H, 3 * H));
  auto cand = g.tanh(g.slice_cols(pre, 3 * H, 4 * H));
  auto c = g.add(g.mul(gf, prev.c), g.mul(gi, cand));
  auto h = g.mul(go, g.tanh(c));
  return {h, c};
}

Blstm make_blstm(int input_dim, int hidden, int num_layers, Rng& rng) {
  Blstm net;
  int in = input_dim;
  for (int l = 0; l < num_layers; ++l) {
    Blstm::Layer layer;
    layer.fwd = make_lstm_cell(in, hidden, rng);
    layer.bwd = make_lstm_cell(in, hidden, rng);
    net.layers.push_back(layer);
    in = 2 * hidden;
  }
  return net;
}

TensorPtr blstm_forward(Graph& g, const Blstm& net, const TensorPtr& x) {
  if (x->rank() != 2 || x->rows() == 0) {
    throw InputError("blstm_forward: expected non-empty [T x d] input, got " +
                     shape_str(x->shape()));
  }
  TensorPtr cur = x;
  for (const auto& layer : net.layers) {
    const int T = cur->rows();
    std::vector<TensorPtr> fwd_h(T), bwd_h(T);
    LstmState st = lstm_zero_state(g, layer.fwd);
    for (int t = 0; t < T; ++t) {
      st = lstm_step(g, layer.fwd, g.row(cur, t), st);
      fwd_h[t] = st.h;
    }
    st = lstm_zero_state(g, layer.bwd);
    for (int t = T - 1; t >= 0; --t) {
      st = lstm_step(g, layer.bwd, g.row(cur, t), st);
      bwd_h[t] = st.h;
    }
    std::vector<TensorPtr> rows(T);
    for (int t = 0; t < T; ++t) rows[t] = g.concat_cols({fwd_h[t], bwd_h[t]});
    cur = g.concat_rows(rows);
  }
  return cur;
}

Tensor glorot_init(const std::vector<int>& shape, Rng& rng) {
  if (shape.size() != 2) {
    throw ConfigError("glorot_init: weight shape must be 2-D, got " + shape_str(shape));
  }
  const double fan_in = shape[0], fan_out = shape[1];
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(shape);
  for (int i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.uniform(-a, a));
  return t;
}

}  // namespace las
