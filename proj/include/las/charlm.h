#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "las/error.h"

namespace las {

// word<TAB>char char char, one entry per line.
struct Lexicon {
  std::vector<std::pair<std::string, std::vector<std::string>>> entries;

  void add(const std::string& word, std::vector<std::string> spelling);
  static Lexicon load(const std::string& path);
  void save(const std::string& path) const;
};

// Word trigram with Witten-Bell interpolation:
//   P(w|h) = (c(hw) + N1+(h) P(w|h')) / (c(h) + N1+(h))
// which the usual backoff tables represent exactly with
//   bow(h) = N1+(h) / (c(h) + N1+(h)).
// Unknown words map to <unk>; probabilities are natural logs, ARPA files
// store log10 as usual.
class WordNgram {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  void train(const std::vector<std::vector<std::string>>& corpus);
  bool trained() const { return trained_; }

  int word_id(const std::string& w) const;  // kUnk when absent
  const std::string& word(int id) const;
  int vocab_size() const { return static_cast<int>(words_.size()); }
  // Types the model can predict: seen words, </s>, <unk>; excludes <s>.
  int support_size() const { return vocab_size() - 1; }

  double logp(int h1, int h2, int w) const;  // natural log P(w | h1 h2)
  // Sum of logp over the sentence's words plus the </s> step.
  double sentence_logp(const std::vector<std::string>& sentence) const;

  void save_arpa(const std::string& path) const;
  static WordNgram load_arpa(const std::string& path);

 private:
  friend class CharScorer;
  static uint64_t key2(int a, int b) { return (static_cast<uint64_t>(a) << 21) | static_cast<uint64_t>(b); }
  static uint64_t key3(int a, int b, int c) {
    return (static_cast<uint64_t>(a) << 42) | (static_cast<uint64_t>(b) << 21) | static_cast<uint64_t>(c);
  }
  double logp2(int h2, int w) const;
  int intern(const std::string& w);

  bool trained_ = false;
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
  std::vector<double> p1_;    // by word id
  std::vector<double> bow1_;  // by word id
  std::unordered_map<uint64_t, double> p2_, bow2_, p3_;
};

// Viterbi scorer for character sequences under lexicon + word trigram: the
// best segmentation of the characters into lexicon words (any character can
// also stand alone as an <unk> word, at a penalty). States carry the frontier
// of (history, trie position) items so scoring is incremental; the running
// value is an admissible bound that charges each pending partial word its
// best completion, and the terminal score is the exact best complete
// segmentation including the </s> step.
class CharScorer {
 public:
  CharScorer(const Lexicon& lex, const WordNgram& lm,
             const std::function<int(const std::string&)>& char_id,
             double unk_penalty = kDefaultUnkPenalty);

  static constexpr double kDefaultUnkPenalty = -6.907755278982137;  // ln 1e-3

  struct Item {
    int h1 = 0, h2 = 0;  // last two word ids
    int node = 0;        // trie position; 0 is the root (word boundary)
    double score = 0;    // best log-prob of any segmentation reaching here
    bool operator==(const Item& o) const {
      return h1 == o.h1 && h2 == o.h2 && node == o.node && score == o.score;
    }
  };
  struct State {
    std::vector<Item> items;  // sorted by (h1, h2, node), deduped
    double reported = 0;      // bound already handed out via deltas
    bool operator==(const State& o) const {
      return reported == o.reported && items == o.items;
    }
  };

  State initial() const;
  // Consume one character; returns the new state and the bound increment.
  std::pair<State, double> advance(const State& s, int char_id) const;
  // End-of-sequence increment: exact best full segmentation plus </s>, minus
  // the bound already reported.
  double terminal_delta(const State& s) const;
  // Convenience: initial + sum of deltas (+ terminal delta when terminal).
  double score_chars(const std::vector<int>& chars, bool terminal) const;

  double unk_penalty() const { return unk_penalty_; }

 private:
  struct Node {
    std::map<int, int> next;       // char id -> node
    std::vector<int> words_here;   // lm word ids spelled exactly to this node
    std::vector<int> words_below;  // lm word ids in this subtree (non-root)
  };
  double bound(const std::vector<Item>& items) const;

  std::vector<Node> trie_;
  const WordNgram* lm_;
  double unk_penalty_;
};

}  // namespace las
