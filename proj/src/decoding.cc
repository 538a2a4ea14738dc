#include "las/decoding.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace las {

Tensor tempered_distribution(const Tensor& logits, double tau) {
  if (tau <= 0) throw ConfigError("tempered_distribution: tau must be positive");
  if (!logits.all_finite()) throw NumericError("tempered_distribution: non-finite logits");
  Tensor scaled = logits;
  for (int i = 0; i < scaled.size(); ++i)
    scaled[i] = static_cast<Scalar>(scaled[i] / static_cast<Scalar>(tau));
  return softmax_rows(scaled);
}

void DecodeConfig::validate() const {
  if (beam < 1) throw ConfigError("DecodeConfig: beam must be at least 1");
  if (tau <= 0) throw ConfigError("DecodeConfig: tau must be positive");
  if (gamma < 0) throw ConfigError("DecodeConfig: gamma must be non-negative");
  if (max_len < 0) throw ConfigError("DecodeConfig: max_len must be non-negative");
}

namespace {

Tensor log_probs_row(const Tensor& logits, double tau) {
  if (tau == 1.0) return log_softmax_rows(logits);
  Tensor scaled = logits;
  for (int i = 0; i < scaled.size(); ++i)
    scaled[i] = static_cast<Scalar>(scaled[i] / static_cast<Scalar>(tau));
  return log_softmax_rows(scaled);
}

struct Live {
  Hypothesis hyp;
  DecodeState state;
  CharScorer::State lm_state;
};

struct Candidate {
  Hypothesis hyp;
  bool is_eos = false;
  DecodeState state;
  CharScorer::State lm_state;
};

bool cost_less(const Hypothesis& a, const Hypothesis& b) { return a.fused_cost < b.fused_cost; }

}  // namespace

std::vector<Hypothesis> beam_search(const LasModel& model, const Tensor& feats,
                                    const DecodeConfig& config, const CharScorer* lm) {
  config.validate();
  const int n = model.config.vocab_size;
  const int sos = model.config.sos_id, eos = model.config.eos_id;
  const int max_len = config.max_len > 0 ? config.max_len : 2 * feats.rows();

  Graph g;
  TensorPtr h = listen(g, model, feats, ListenMode::decode);

  std::vector<Live> live(1);
  live[0].state = initial_decode_state(g, model, h->rows());
  if (lm) live[0].lm_state = lm->initial();

  std::vector<Hypothesis> completed;
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    // Expand every live hypothesis over the whole inventory, prune the joint
    // candidate list to the beam, and only then move <eos> winners to the
    // completed pool: an <eos> has to earn a beam slot like any character.
    std::vector<Candidate> cands;
    for (Live& L : live) {
      int y_prev = L.hyp.chars.empty() ? sos : L.hyp.chars.back();
      StepResult sr = decode_step(g, model, h, y_prev, L.state);
      const Tensor& logits = *sr.logits;
      if (!logits.all_finite()) throw NumericError("beam_search: non-finite logits");
      Tensor lp = log_softmax_rows(logits);
      Tensor lp_rank = config.temper_scores ? lp : log_probs_row(logits, config.tau);
      const double rank_div = config.temper_scores ? config.tau : 1.0;

      for (int c = 0; c < n; ++c) {
        if (c == sos) continue;
        double step_cost = -static_cast<double>(lp_rank[c]) / rank_div;
        double lm_delta = 0;
        CharScorer::State lm_next;
        if (lm) {
          if (c == eos) {
            lm_delta = lm->terminal_delta(L.lm_state);
          } else {
            auto [ns, d] = lm->advance(L.lm_state, c);
            lm_next = std::move(ns);
            lm_delta = d;
          }
        }
        Candidate cand;
        cand.hyp.chars = L.hyp.chars;
        cand.hyp.model_logprob = L.hyp.model_logprob + static_cast<double>(lp[c]);
        cand.hyp.lm_score = L.hyp.lm_score + lm_delta;
        cand.hyp.fused_cost = L.hyp.fused_cost + step_cost - config.gamma * lm_delta;
        if (c == eos) {
          cand.hyp.complete = true;
          cand.is_eos = true;
        } else {
          cand.hyp.chars.push_back(c);
          cand.state = sr.state;
          if (lm) cand.lm_state = std::move(lm_next);
        }
        cands.push_back(std::move(cand));
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return cost_less(a.hyp, b.hyp); });
    if (static_cast<int>(cands.size()) > config.beam)
      cands.resize(static_cast<size_t>(config.beam));

    std::vector<Live> next;
    for (Candidate& cand : cands) {
      if (cand.is_eos) {
        completed.push_back(std::move(cand.hyp));
      } else {
        Live nl;
        nl.hyp = std::move(cand.hyp);
        nl.state = std::move(cand.state);
        nl.lm_state = std::move(cand.lm_state);
        next.push_back(std::move(nl));
      }
    }
    std::stable_sort(completed.begin(), completed.end(), cost_less);
    if (static_cast<int>(completed.size()) > config.beam)
      completed.resize(static_cast<size_t>(config.beam));
    live = std::move(next);
    // Step costs never decrease the total, so once the pool is full and the
    // best live hypothesis is already worse than the worst kept completion,
    // nothing live can enter the pool.
    if (static_cast<int>(completed.size()) == config.beam && !live.empty() &&
        live.front().hyp.fused_cost >= completed.back().fused_cost)
      break;
  }

  if (!completed.empty()) return completed;
  if (live.empty()) throw NumericError("beam_search: no hypotheses");
  Hypothesis best = live.front().hyp;
  best.complete = false;
  return {best};
}

Hypothesis greedy_decode(const LasModel& model, const Tensor& feats, int max_len) {
  const int n = model.config.vocab_size;
  const int sos = model.config.sos_id, eos = model.config.eos_id;
  if (max_len <= 0) max_len = 2 * feats.rows();

  Graph g;
  TensorPtr h = listen(g, model, feats, ListenMode::decode);
  DecodeState state = initial_decode_state(g, model, h->rows());

  Hypothesis hyp;
  int y_prev = sos;
  for (int step = 0; step < max_len; ++step) {
    StepResult sr = decode_step(g, model, h, y_prev, state);
    const Tensor& logits = *sr.logits;
    if (!logits.all_finite()) throw NumericError("greedy_decode: non-finite logits");
    int best = -1;
    for (int c = 0; c < n; ++c) {
      if (c == sos) continue;
      if (best < 0 || logits[c] > logits[best]) best = c;
    }
    Tensor lp = log_softmax_rows(logits);
    hyp.model_logprob += static_cast<double>(lp[best]);
    if (best == eos) {
      hyp.complete = true;
      break;
    }
    hyp.chars.push_back(best);
    state = sr.state;
    y_prev = best;
  }
  hyp.fused_cost = -hyp.model_logprob;
  return hyp;
}

long edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<long> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<long>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<long>(i);
    for (size_t j = 1; j <= m; ++j) {
      long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::vector<int> strip_specials(const std::vector<int>& seq, int sos_id, int eos_id) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (int c : seq)
    if (c != sos_id && c != eos_id) out.push_back(c);
  return out;
}

double cer(const std::vector<int>& hyp, const std::vector<int>& ref, int sos_id, int eos_id) {
  std::vector<int> h = strip_specials(hyp, sos_id, eos_id);
  std::vector<int> r = strip_specials(ref, sos_id, eos_id);
  if (r.empty()) throw InputError("cer: empty reference");
  return static_cast<double>(edit_distance(h, r)) / static_cast<double>(r.size());
}

EvalResult evaluate_pairs(const std::vector<std::vector<int>>& hyps,
                          const std::vector<std::vector<int>>& refs, int sos_id, int eos_id) {
  if (hyps.size() != refs.size())
    throw InputError("evaluate_pairs: " + std::to_string(hyps.size()) + " hypotheses for " +
                     std::to_string(refs.size()) + " references");
  if (refs.empty()) throw InputError("evaluate_pairs: empty input");
  EvalResult r;
  for (size_t i = 0; i < refs.size(); ++i) {
    std::vector<int> h = strip_specials(hyps[i], sos_id, eos_id);
    std::vector<int> ref = strip_specials(refs[i], sos_id, eos_id);
    if (ref.empty()) throw InputError("evaluate_pairs: empty reference at index " + std::to_string(i));
    r.edits += edit_distance(h, ref);
    r.ref_chars += static_cast<long>(ref.size());
    if (h != ref) ++r.wrong;
    ++r.sentences;
  }
  r.cer = static_cast<double>(r.edits) / static_cast<double>(r.ref_chars);
  r.ser = static_cast<double>(r.wrong) / static_cast<double>(r.sentences);
  return r;
}

}  // namespace las
