#pragma once

#include <vector>

#include "las/charlm.h"
#include "las/model.h"
#include "las/tensor.h"

namespace las {

// softmax(logits / tau), row-wise, through the same kernel as the model's
// softmax so tau = 1 reproduces it bitwise.
Tensor tempered_distribution(const Tensor& logits, double tau);

struct DecodeConfig {
  int beam = 30;
  double tau = 2.0;    // temperature on the per-step distribution
  double gamma = 0.1;  // language-model weight
  int max_len = 0;     // 0: twice the input frame count
  // Ranking normally uses log softmax(o/tau); with temper_scores the
  // accumulated log-probabilities are divided by tau instead.
  bool temper_scores = false;

  void validate() const;
};

struct Hypothesis {
  std::vector<int> chars;    // no <sos>, no trailing <eos>
  double model_logprob = 0;  // untempered sum of ln p, <eos> step included
  double lm_score = 0;       // scorer total; includes the terminal step when complete
  double fused_cost = 0;     // the ranking objective; lower is better
  bool complete = false;     // ended with <eos> within the length budget
};

// Beam search over characters with fused ranking cost
//   -(sum of tempered log-probs + gamma * lm score).
// Returns completed hypotheses sorted by fused cost (at most `beam`); if
// nothing completed within the budget, the single best live hypothesis is
// returned with complete = false. lm may be null (gamma then has no effect).
std::vector<Hypothesis> beam_search(const LasModel& model, const Tensor& feats,
                                    const DecodeConfig& config, const CharScorer* lm = nullptr);

Hypothesis greedy_decode(const LasModel& model, const Tensor& feats, int max_len = 0);

long edit_distance(const std::vector<int>& a, const std::vector<int>& b);

// Remove every <sos>/<eos> id; <unk> stays, it is a real label.
std::vector<int> strip_specials(const std::vector<int>& seq, int sos_id, int eos_id);

// Levenshtein distance over the stripped sequences divided by the stripped
// reference length.
double cer(const std::vector<int>& hyp, const std::vector<int>& ref, int sos_id, int eos_id);

struct EvalResult {
  double cer = 0;  // total edits / total reference characters
  double ser = 0;  // fraction of sentences with any error
  long edits = 0;
  long ref_chars = 0;
  int sentences = 0;
  int wrong = 0;
};

EvalResult evaluate_pairs(const std::vector<std::vector<int>>& hyps,
                          const std::vector<std::vector<int>>& refs, int sos_id, int eos_id);

}  // namespace las
