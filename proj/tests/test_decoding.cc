#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "las/decoding.h"
#include "las/rng.h"

using namespace las;

namespace {

Tensor random_logits(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Tensor t({rows, cols});
  for (int i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(2.0 * rng.gaussian());
  return t;
}

int argmax_row(const Tensor& t) {
  int best = 0;
  for (int i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

LasConfig toy_config(int vocab) {
  LasConfig cfg;
  cfg.feat_dim = 3;
  cfg.encoder_layers = 1;
  cfg.encoder_hidden = 3;
  cfg.decoder_hidden = 3;
  cfg.vocab_size = vocab;
  cfg.embed_dim = 3;
  cfg.attn_dim = 3;
  cfg.attn_filters = 2;
  cfg.attn_filter_width = 3;
  cfg.frame_skip = 1;
  return cfg;
}

Tensor random_feats(int frames, int dim, uint64_t seed) {
  Rng rng(seed);
  Tensor t({frames, dim});
  for (int i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.gaussian());
  return t;
}

struct Outcome {
  std::vector<int> chars;
  double model_logprob = 0;
  double lm_score = 0;
  double fused_cost = 0;
};

// Replays every candidate stream the search could emit: all character
// sequences up to max_len, each closed by <eos> within the budget.
std::vector<Outcome> enumerate_outcomes(const LasModel& model, const Tensor& feats,
                                        const DecodeConfig& config, const CharScorer* lm) {
  const int n = model.config.vocab_size;
  const int sos = model.config.sos_id, eos = model.config.eos_id;
  const int max_len = config.max_len > 0 ? config.max_len : 2 * feats.rows();

  Graph g;
  TensorPtr h = listen(g, model, feats, ListenMode::decode);
  std::vector<Outcome> out;

  std::function<void(const DecodeState&, const CharScorer::State&, int, const Outcome&)> rec =
      [&](const DecodeState& state, const CharScorer::State& lm_state, int step,
          const Outcome& acc) {
        if (step == max_len) return;  // ran out of budget without <eos>
        int y_prev = acc.chars.empty() ? sos : acc.chars.back();
        StepResult sr = decode_step(g, model, h, y_prev, state);
        Tensor lp = log_softmax_rows(*sr.logits);
        Tensor scaled = *sr.logits;
        for (int i = 0; i < scaled.size(); ++i)
          scaled[i] = static_cast<Scalar>(scaled[i] / static_cast<Scalar>(config.tau));
        Tensor lp_rank = config.temper_scores ? lp : log_softmax_rows(scaled);
        const double rank_div = config.temper_scores ? config.tau : 1.0;
        for (int c = 0; c < n; ++c) {
          if (c == sos) continue;
          double lm_delta = 0;
          CharScorer::State lm_next;
          if (lm) {
            if (c == eos) {
              lm_delta = lm->terminal_delta(lm_state);
            } else {
              auto [ns, d] = lm->advance(lm_state, c);
              lm_next = std::move(ns);
              lm_delta = d;
            }
          }
          Outcome cand = acc;
          cand.model_logprob += static_cast<double>(lp[c]);
          cand.lm_score += lm_delta;
          cand.fused_cost +=
              -static_cast<double>(lp_rank[c]) / rank_div - config.gamma * lm_delta;
          if (c == eos) {
            out.push_back(std::move(cand));
          } else {
            cand.chars.push_back(c);
            rec(sr.state, lm ? lm_next : lm_state, step + 1, cand);
          }
        }
      };
  Outcome start;
  rec(initial_decode_state(g, model, h->rows()), lm ? lm->initial() : CharScorer::State{}, 0,
      start);
  return out;
}

// Full-matrix Wagner-Fischer, written independently of the library's
// two-row version.
long oracle_edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<long>> d(a.size() + 1, std::vector<long>(b.size() + 1, 0));
  for (size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<long>(i);
  for (size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<long>(j);
  for (size_t i = 1; i <= a.size(); ++i)
    for (size_t j = 1; j <= b.size(); ++j) {
      long best = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      best = std::min(best, d[i - 1][j] + 1);
      best = std::min(best, d[i][j - 1] + 1);
      d[i][j] = best;
    }
  return d[a.size()][b.size()];
}

CharScorer toy_scorer(const LasModel& model) {
  static Lexicon lex = [] {
    Lexicon l;
    l.add("P", {"a", "b"});
    l.add("Q", {"b"});
    l.add("R", {"a"});
    return l;
  }();
  static WordNgram lm = [] {
    WordNgram m;
    m.train({{"P", "Q"}, {"R", "P"}, {"Q"}, {"P"}, {"R", "Q", "P"}});
    return m;
  }();
  (void)model;
  return CharScorer(lex, lm, [](const std::string& ch) {
    if (ch == "a") return 3;
    if (ch == "b") return 4;
    return -1;
  });
}

}  // namespace

TEST_CASE("tau = 1 tempering is bitwise plain softmax") {
  Tensor logits = random_logits(3, 7, 11);
  Tensor plain = softmax_rows(logits);
  Tensor tempered = tempered_distribution(logits, 1.0);
  REQUIRE(tempered.size() == plain.size());
  for (int i = 0; i < plain.size(); ++i) CHECK(tempered[i] == plain[i]);
}

TEST_CASE("tau = 2 on logits [0, 2 ln 3] gives [0.25, 0.75]") {
  Tensor logits({1, 2});
  logits[0] = 0;
  logits[1] = static_cast<Scalar>(2.0 * std::log(3.0));
  Tensor p = tempered_distribution(logits, 2.0);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("huge tau flattens to uniform") {
  Tensor logits = random_logits(1, 9, 13);
  Tensor p = tempered_distribution(logits, 1e6);
  for (int i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - 1.0 / 9.0) < 1e-5);
}

TEST_CASE("argmax is invariant under any positive temperature") {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Tensor logits = random_logits(1, 12, seed);
    int ref = argmax_row(tempered_distribution(logits, 1.0));
    for (double tau : {0.1, 0.5, 2.0, 7.0, 500.0})
      CHECK(argmax_row(tempered_distribution(logits, tau)) == ref);
  }
}

TEST_CASE("tempered_distribution validates inputs") {
  Tensor logits = random_logits(1, 4, 3);
  CHECK_THROWS_AS(tempered_distribution(logits, 0.0), ConfigError);
  CHECK_THROWS_AS(tempered_distribution(logits, -1.0), ConfigError);
  logits[2] = std::numeric_limits<Scalar>::quiet_NaN();
  CHECK_THROWS_AS(tempered_distribution(logits, 1.0), NumericError);
}

TEST_CASE("decode config validation") {
  DecodeConfig dc;
  dc.beam = 0;
  CHECK_THROWS_AS(dc.validate(), ConfigError);
  dc = DecodeConfig{};
  dc.tau = 0;
  CHECK_THROWS_AS(dc.validate(), ConfigError);
  dc = DecodeConfig{};
  dc.gamma = -0.1;
  CHECK_THROWS_AS(dc.validate(), ConfigError);
  dc = DecodeConfig{};
  dc.max_len = -1;
  CHECK_THROWS_AS(dc.validate(), ConfigError);
  dc = DecodeConfig{};
  CHECK_NOTHROW(dc.validate());
}

TEST_CASE("exhaustive beam equals brute-force enumeration on the toy task") {
  Rng rng(31);
  LasModel model = make_model(toy_config(5), rng);
  Tensor feats = random_feats(2, 3, 77);
  CharScorer scorer = toy_scorer(model);

  for (double tau : {0.5, 1.0, 2.0}) {
    for (double gamma : {0.0, 0.1}) {
      for (bool temper_scores : {false, true}) {
        DecodeConfig dc;
        dc.beam = 64;
        dc.tau = tau;
        dc.gamma = gamma;
        dc.temper_scores = temper_scores;
        dc.max_len = 3;
        const CharScorer* lm = gamma > 0 ? &scorer : nullptr;

        auto outcomes = enumerate_outcomes(model, feats, dc, lm);
        std::stable_sort(outcomes.begin(), outcomes.end(),
                         [](const Outcome& a, const Outcome& b) {
                           return a.fused_cost < b.fused_cost;
                         });
        auto hyps = beam_search(model, feats, dc, lm);

        REQUIRE(!hyps.empty());
        // Every candidate fits in the exhaustive beam, so the full completed
        // list must match the enumeration.
        REQUIRE(hyps.size() == outcomes.size());
        for (size_t i = 0; i < hyps.size(); ++i) {
          CHECK(hyps[i].complete);
          CHECK(hyps[i].chars == outcomes[i].chars);
          CHECK(hyps[i].fused_cost ==
                doctest::Approx(outcomes[i].fused_cost).epsilon(1e-12));
          CHECK(hyps[i].model_logprob ==
                doctest::Approx(outcomes[i].model_logprob).epsilon(1e-12));
          CHECK(hyps[i].lm_score == doctest::Approx(outcomes[i].lm_score).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("narrow beams never beat the exhaustive beam") {
  Rng rng(32);
  LasModel model = make_model(toy_config(5), rng);
  Tensor feats = random_feats(3, 3, 78);
  CharScorer scorer = toy_scorer(model);
  DecodeConfig wide;
  wide.beam = 256;
  wide.max_len = 4;
  wide.tau = 1.5;
  wide.gamma = 0.1;
  double best = beam_search(model, feats, wide, &scorer).front().fused_cost;
  for (int beam : {1, 2, 4, 8}) {
    DecodeConfig dc = wide;
    dc.beam = beam;
    double got = beam_search(model, feats, dc, &scorer).front().fused_cost;
    CHECK(got >= best - 1e-12);
  }
}

TEST_CASE("beam 1 with tau 1 and gamma 0 reproduces greedy decoding") {
  for (uint64_t seed : {41u, 42u, 43u, 44u}) {
    Rng rng(seed);
    LasModel model = make_model(toy_config(6), rng);
    Tensor feats = random_feats(4, 3, seed + 100);

    Hypothesis greedy = greedy_decode(model, feats);
    DecodeConfig dc;
    dc.beam = 1;
    dc.tau = 1.0;
    dc.gamma = 0.0;
    Hypothesis beam = beam_search(model, feats, dc).front();

    CHECK(beam.chars == greedy.chars);
    CHECK(beam.complete == greedy.complete);
    CHECK(beam.model_logprob == doctest::Approx(greedy.model_logprob).epsilon(1e-12));
    CHECK(beam.fused_cost == doctest::Approx(-beam.model_logprob).epsilon(1e-12));
  }
}

TEST_CASE("gamma 0 fused ranking equals the LM-free ranking exactly") {
  Rng rng(51);
  LasModel model = make_model(toy_config(5), rng);
  Tensor feats = random_feats(3, 3, 151);
  CharScorer scorer = toy_scorer(model);

  DecodeConfig dc;
  dc.beam = 8;
  dc.tau = 2.0;
  dc.gamma = 0.0;
  auto with_lm = beam_search(model, feats, dc, &scorer);
  auto without = beam_search(model, feats, dc, nullptr);

  REQUIRE(with_lm.size() == without.size());
  for (size_t i = 0; i < with_lm.size(); ++i) {
    CHECK(with_lm[i].chars == without[i].chars);
    CHECK(with_lm[i].fused_cost == without[i].fused_cost);
    CHECK(with_lm[i].model_logprob == without[i].model_logprob);
    CHECK(without[i].lm_score == 0.0);
  }
}

TEST_CASE("model_logprob stays untempered while the ranking is tempered") {
  Rng rng(52);
  LasModel model = make_model(toy_config(5), rng);
  Tensor feats = random_feats(2, 3, 152);
  DecodeConfig dc;
  dc.beam = 16;
  dc.gamma = 0.0;
  dc.max_len = 3;
  dc.tau = 1.0;
  auto plain = beam_search(model, feats, dc);
  dc.tau = 3.0;
  auto hot = beam_search(model, feats, dc);
  // Same candidate set either way; match them up by character sequence.
  for (const auto& h : hot) {
    for (const auto& p : plain) {
      if (p.chars == h.chars) {
        CHECK(h.model_logprob == doctest::Approx(p.model_logprob).epsilon(1e-12));
        CHECK(p.fused_cost == doctest::Approx(-p.model_logprob).epsilon(1e-12));
        CHECK(h.fused_cost != doctest::Approx(-h.model_logprob).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("beam search is deterministic") {
  Rng rng(53);
  LasModel model = make_model(toy_config(5), rng);
  Tensor feats = random_feats(3, 3, 153);
  CharScorer scorer = toy_scorer(model);
  DecodeConfig dc;
  dc.beam = 4;
  auto a = beam_search(model, feats, dc, &scorer);
  auto b = beam_search(model, feats, dc, &scorer);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].chars == b[i].chars);
    CHECK(a[i].fused_cost == b[i].fused_cost);
  }
}

TEST_CASE("beam search rejects non-finite models") {
  Rng rng(54);
  LasModel model = make_model(toy_config(5), rng);
  (*model.proj_w)[0] = std::numeric_limits<Scalar>::quiet_NaN();
  Tensor feats = random_feats(2, 3, 154);
  DecodeConfig dc;
  CHECK_THROWS_AS(beam_search(model, feats, dc), NumericError);
  CHECK_THROWS_AS(greedy_decode(model, feats), NumericError);
}

TEST_CASE("edit distance on known pairs") {
  CHECK(edit_distance({}, {}) == 0);
  CHECK(edit_distance({1, 2, 3}, {1, 2, 3}) == 0);
  CHECK(edit_distance({1, 2, 3}, {1, 9, 3}) == 1);
  CHECK(edit_distance({1, 2}, {}) == 2);
  // kitten -> sitting
  CHECK(edit_distance({10, 8, 19, 19, 4, 13}, {18, 8, 19, 19, 8, 13, 6}) == 3);
}

TEST_CASE("edit distance matches an independent DP on 1000 random pairs") {
  Rng rng(55);
  for (int trial = 0; trial < 1000; ++trial) {
    auto draw = [&] {
      std::vector<int> s(static_cast<size_t>(rng.uniform_int(0, 12)));
      for (auto& c : s) c = static_cast<int>(rng.uniform_int(0, 3));
      return s;
    };
    std::vector<int> a = draw(), b = draw();
    long want = oracle_edit_distance(a, b);
    CHECK(edit_distance(a, b) == want);
    CHECK(edit_distance(b, a) == want);  // distance is symmetric
  }
}

TEST_CASE("cer strips specials and normalizes by reference length") {
  CHECK(cer({3, 4, 5}, {3, 4, 5}, 1, 2) == 0.0);
  CHECK(cer({3, 9, 5}, {3, 4, 5}, 1, 2) == doctest::Approx(1.0 / 3.0));
  CHECK(cer({}, {3, 4}, 1, 2) == 1.0);
  // <sos>/<eos> are invisible; <unk> is a real label.
  CHECK(cer({1, 3, 4, 2}, {3, 4}, 1, 2) == 0.0);
  CHECK(cer({0, 4}, {3, 4}, 1, 2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(cer({3}, {1, 2}, 1, 2), InputError);
  CHECK(strip_specials({1, 0, 3, 2, 4}, 1, 2) == std::vector<int>{0, 3, 4});
}

TEST_CASE("cer is not symmetric but the underlying distance is") {
  std::vector<int> hyp{3, 4, 5, 6}, ref{3, 4};
  CHECK(edit_distance(hyp, ref) == edit_distance(ref, hyp));
  CHECK(cer(hyp, ref, 1, 2) == doctest::Approx(1.0));
  CHECK(cer(ref, hyp, 1, 2) == doctest::Approx(0.5));
}

TEST_CASE("evaluate_pairs micro-averages cer and counts wrong sentences") {
  std::vector<std::vector<int>> refs{{3, 4}, {5}, {3, 3, 3}, {4, 5}};
  std::vector<std::vector<int>> hyps{{3, 4}, {5}, {3, 3, 3}, {4, 5}};
  EvalResult all_right = evaluate_pairs(hyps, refs, 1, 2);
  CHECK(all_right.cer == 0.0);
  CHECK(all_right.ser == 0.0);

  hyps[2] = {3, 9, 3};
  EvalResult one_wrong = evaluate_pairs(hyps, refs, 1, 2);
  CHECK(one_wrong.ser == doctest::Approx(0.25));
  CHECK(one_wrong.edits == 1);
  CHECK(one_wrong.ref_chars == 8);
  CHECK(one_wrong.cer == doctest::Approx(1.0 / 8.0));

  CHECK_THROWS_AS(evaluate_pairs({{3}}, refs, 1, 2), InputError);
  CHECK_THROWS_AS(evaluate_pairs({}, {}, 1, 2), InputError);
  CHECK_THROWS_AS(evaluate_pairs({{3}}, {{1, 2}}, 1, 2), InputError);
}

TEST_CASE("zero ser if and only if zero cer") {
  Rng rng(56);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<int>> refs, hyps;
    for (int i = 0; i < 6; ++i) {
      std::vector<int> r(static_cast<size_t>(rng.uniform_int(1, 5)));
      for (auto& c : r) c = 3 + static_cast<int>(rng.uniform_int(0, 3));
      std::vector<int> h = r;
      if (rng.uniform() < 0.3 && !h.empty()) h[0] = 3 + ((h[0] - 3 + 1) % 4);
      refs.push_back(r);
      hyps.push_back(h);
    }
    EvalResult res = evaluate_pairs(hyps, refs, 1, 2);
    CHECK((res.ser == 0.0) == (res.cer == 0.0));
  }
}
