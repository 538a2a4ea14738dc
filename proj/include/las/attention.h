#pragma once

#include <string>

#include "las/rng.h"
#include "las/tensor.h"

namespace las {

// content:  e_j = w' tanh(W s + V h_j + b), softmax normalization
// location: adds U f_j with f = F * alpha_prev (1-D convolution over the
//           previous alignment), softmax normalization
// smoothed: content scoring with element-wise sigmoid normalization
enum class AttentionVariant { content, location, smoothed };

enum class NormalizeMode { softmax, sigmoid };

AttentionVariant attention_variant_from(const std::string& name);
std::string to_string(AttentionVariant v);
NormalizeMode normalize_mode_for(AttentionVariant v);

struct AttentionScorer {
  AttentionVariant variant = AttentionVariant::content;
  TensorPtr w;  // [a]
  TensorPtr W;  // [a x s]
  TensorPtr V;  // [a x 2H]
  TensorPtr b;  // [a]
  TensorPtr U;  // [a x k], location only
  TensorPtr F;  // [k x r], location only

  int dim() const { return W->rows(); }
};

AttentionScorer make_attention_scorer(AttentionVariant variant, int attn_dim, int state_dim,
                                      int encoder_dim, int filters, int filter_width, Rng& rng);

// Scores every encoder position against the decoder state. alpha_prev is
// required (length T) for the location variant and ignored otherwise.
TensorPtr attention_score(Graph& g, const AttentionScorer& scorer, const TensorPtr& state,
                          const TensorPtr& h, const TensorPtr& alpha_prev);  // [T]

TensorPtr attention_normalize(Graph& g, const TensorPtr& e, NormalizeMode mode);  // [T]

// c = sum_j alpha_j h_j
TensorPtr attention_context(Graph& g, const TensorPtr& alpha, const TensorPtr& h);  // [1 x 2H]

}  // namespace las
