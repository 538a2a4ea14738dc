#include "las/attention.h"

#include "las/error.h"
#include "las/layers.h"

namespace las {

AttentionVariant attention_variant_from(const std::string& name) {
  if (name == "content") return AttentionVariant::content;
  if (name == "location") return AttentionVariant::location;
  if (name == "smoothed") return AttentionVariant::smoothed;
  throw ConfigError("unknown attention variant '" + name +
                    "' (valid: content, location, smoothed)");
}

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::content: return "content";
    case AttentionVariant::location: return "location";
    case AttentionVariant::smoothed: return "smoothed";
  }
  return "?";
}

NormalizeMode normalize_mode_for(AttentionVariant v) {
  return v == AttentionVariant::smoothed ? NormalizeMode::sigmoid : NormalizeMode::softmax;
}

AttentionScorer make_attention_scorer(AttentionVariant variant, int attn_dim, int state_dim,
                                      int encoder_dim, int filters, int filter_width,
                                      Rng& rng) {
  AttentionScorer s;
  s.variant = variant;
  Tensor w2 = glorot_init({attn_dim, 1}, rng);
  s.w = make_param(Tensor({attn_dim}, std::vector<Scalar>(w2.data(), w2.data() + w2.size())));
  s.W = make_param(glorot_init({attn_dim, state_dim}, rng));
  s.V = make_param(glorot_init({attn_dim, encoder_dim}, rng));
  s.b = make_param(Tensor({attn_dim}));
  if (variant == AttentionVariant::location) {
    s.U = make_param(glorot_init({attn_dim, filters}, rng));
    s.F = make_param(glorot_init({filters, filter_width}, rng));
  }
  return s;
}

TensorPtr attention_score(Graph& g, const AttentionScorer& scorer, const TensorPtr& state,
                          const TensorPtr& h, const TensorPtr& alpha_prev) {
  const int T = h->rows();
  const int a = scorer.dim();
  if (state->rows() != 1 || state->cols() != scorer.W->cols()) {
    throw DimensionError("attention_score: state " + shape_str(state->shape()) + " vs W " +
                         shape_str(scorer.W->shape()));
  }
  if (h->cols() != scorer.V->cols()) {
    throw DimensionError("attention_score: encoder outputs " + shape_str(h->shape()) +
                         " vs V " + shape_str(scorer.V->shape()));
  }
  // W s + b once, V h_j per frame (bias-broadcast over T).
  auto ws = g.reshape(g.matmul(state, g.transpose(scorer.W)), {a});  // [a]
  auto vh = g.matmul(h, g.transpose(scorer.V));                      // [T x a]
  auto pre = g.add_bias(vh, g.add(ws, scorer.b));
  if (scorer.variant == AttentionVariant::location) {
    if (!alpha_prev || alpha_prev->size() != T) {
      throw DimensionError("attention_score: location variant needs alpha_prev of length " +
                           std::to_string(T) + ", got " +
                           (alpha_prev ? shape_str(alpha_prev->shape()) : std::string("none")));
    }
    auto alpha1d = alpha_prev->rank() == 1 ? alpha_prev : g.reshape(alpha_prev, {T});
    auto f = g.conv1d(alpha1d, scorer.F);             // [T x k]
    pre = g.add(pre, g.matmul(f, g.transpose(scorer.U)));  // [T x a]
  }
  auto e = g.matmul(g.tanh(pre), g.reshape(scorer.w, {a, 1}));  // [T x 1]
  return g.reshape(e, {T});
}

TensorPtr attention_normalize(Graph& g, const TensorPtr& e, NormalizeMode mode) {
  if (!e->all_finite()) throw NumericError("attention_normalize: non-finite scores");
  const int T = e->size();
  if (mode == NormalizeMode::softmax) {
    return g.reshape(g.softmax(g.reshape(e, {1, T})), {T});
  }
  return g.sigmoid(e);
}

TensorPtr attention_context(Graph& g, const TensorPtr& alpha, const TensorPtr& h) {
  if (alpha->size() != h->rows()) {
    throw DimensionError("attention_context: alignment " + shape_str(alpha->shape()) +
                         " vs encoder outputs " + shape_str(h->shape()));
  }
  return g.matmul(g.reshape(alpha, {1, alpha->size()}), h);  // [1 x 2H]
}

}  // namespace las
