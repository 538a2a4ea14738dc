#include "las/charlm.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace las {

namespace {
constexpr double kLn10 = 2.302585092994046;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

void Lexicon::add(const std::string& word, std::vector<std::string> spelling) {
  if (word.empty()) throw InputError("lexicon: empty word");
  if (spelling.empty()) throw InputError("lexicon: word '" + word + "' has an empty spelling");
  entries.emplace_back(word, std::move(spelling));
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected 'word<TAB>spelling'");
    std::string word = line.substr(0, tab);
    std::istringstream rest(line.substr(tab + 1));
    std::vector<std::string> spelling;
    std::string ch;
    while (rest >> ch) spelling.push_back(ch);
    if (word.empty() || spelling.empty())
      throw InputError(path + ":" + std::to_string(lineno) + ": expected 'word<TAB>spelling'");
    lex.add(word, std::move(spelling));
  }
  return lex;
}

void Lexicon::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [word, spelling] : entries) {
    out << word << '\t';
    for (size_t i = 0; i < spelling.size(); ++i) out << (i ? " " : "") << spelling[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

int WordNgram::intern(const std::string& w) {
  auto it = ids_.find(w);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(words_.size());
  words_.push_back(w);
  ids_.emplace(w, id);
  return id;
}

int WordNgram::word_id(const std::string& w) const {
  auto it = ids_.find(w);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& WordNgram::word(int id) const {
  if (id < 0 || id >= vocab_size())
    throw VocabError("no word with id " + std::to_string(id));
  return words_[static_cast<size_t>(id)];
}

void WordNgram::train(const std::vector<std::vector<std::string>>& corpus) {
  if (corpus.empty()) throw InputError("WordNgram::train: empty corpus");
  words_.clear();
  ids_.clear();
  intern("<unk>");
  intern("<s>");
  intern("</s>");

  std::unordered_map<uint64_t, long> c3, c2;
  std::vector<long> c1;
  auto bump1 = [&](int w) {
    if (static_cast<size_t>(w) >= c1.size()) c1.resize(static_cast<size_t>(w) + 1, 0);
    ++c1[static_cast<size_t>(w)];
  };
  for (const auto& sentence : corpus) {
    int h1 = kBos, h2 = kBos;
    std::vector<int> tokens;
    for (const auto& w : sentence)
      if (!w.empty()) tokens.push_back(intern(w));
    tokens.push_back(kEos);
    for (int w : tokens) {
      bump1(w);
      ++c2[key2(h2, w)];
      ++c3[key3(h1, h2, w)];
      h1 = h2;
      h2 = w;
    }
  }
  c1.resize(static_cast<size_t>(vocab_size()), 0);

  // Context totals and distinct-continuation counts.
  std::vector<long> ctx2(static_cast<size_t>(vocab_size()), 0), n1p2(ctx2);
  std::unordered_map<uint64_t, long> ctx3, n1p3;
  for (const auto& [k, n] : c2) {
    int v = static_cast<int>(k >> 21);
    ctx2[static_cast<size_t>(v)] += n;
    ++n1p2[static_cast<size_t>(v)];
  }
  for (const auto& [k, n] : c3) {
    uint64_t h = k >> 21;
    ctx3[h] += n;
    ++n1p3[h];
  }
  long tokens = 0, n1p1 = 0;
  for (int w = 0; w < vocab_size(); ++w) {
    tokens += c1[static_cast<size_t>(w)];
    if (c1[static_cast<size_t>(w)] > 0) ++n1p1;
  }

  const double p0 = 1.0 / static_cast<double>(support_size());
  p1_.assign(static_cast<size_t>(vocab_size()), kNegInf);
  bow1_.assign(static_cast<size_t>(vocab_size()), 0.0);
  for (int w = 0; w < vocab_size(); ++w) {
    if (w == kBos) {
      p1_[static_cast<size_t>(w)] = -99.0 * kLn10;  // placeholder; <s> is never predicted
      continue;
    }
    double num = static_cast<double>(c1[static_cast<size_t>(w)]) + static_cast<double>(n1p1) * p0;
    p1_[static_cast<size_t>(w)] = std::log(num / (static_cast<double>(tokens) + static_cast<double>(n1p1)));
  }
  for (int v = 0; v < vocab_size(); ++v)
    if (ctx2[static_cast<size_t>(v)] > 0)
      bow1_[static_cast<size_t>(v)] =
          std::log(static_cast<double>(n1p2[static_cast<size_t>(v)]) /
                   static_cast<double>(ctx2[static_cast<size_t>(v)] + n1p2[static_cast<size_t>(v)]));

  p2_.clear();
  bow2_.clear();
  p3_.clear();
  for (const auto& [k, n] : c2) {
    int v = static_cast<int>(k >> 21), w = static_cast<int>(k & ((1u << 21) - 1));
    double lam = static_cast<double>(ctx2[static_cast<size_t>(v)] + n1p2[static_cast<size_t>(v)]);
    double num = static_cast<double>(n) +
                 static_cast<double>(n1p2[static_cast<size_t>(v)]) * std::exp(p1_[static_cast<size_t>(w)]);
    p2_[k] = std::log(num / lam);
  }
  for (const auto& [h, n] : ctx3)
    bow2_[h] = std::log(static_cast<double>(n1p3[h]) / static_cast<double>(n + n1p3[h]));
  for (const auto& [k, n] : c3) {
    uint64_t h = k >> 21;
    int v = static_cast<int>(h & ((1u << 21) - 1)), w = static_cast<int>(k & ((1u << 21) - 1));
    double lam = static_cast<double>(ctx3[h] + n1p3[h]);
    double num = static_cast<double>(n) + static_cast<double>(n1p3[h]) * std::exp(logp2(v, w));
    p3_[k] = std::log(num / lam);
  }
  trained_ = true;
}

double WordNgram::logp2(int h2, int w) const {
  auto it = p2_.find(key2(h2, w));
  if (it != p2_.end()) return it->second;
  return bow1_[static_cast<size_t>(h2)] + p1_[static_cast<size_t>(w)];
}

double WordNgram::logp(int h1, int h2, int w) const {
  if (!trained_) throw ConfigError("WordNgram: not trained");
  auto clamp = [this](int id) { return id < 0 || id >= vocab_size() ? kUnk : id; };
  h1 = clamp(h1);
  h2 = clamp(h2);
  w = clamp(w);
  auto it = p3_.find(key3(h1, h2, w));
  if (it != p3_.end()) return it->second;
  auto bw = bow2_.find(key2(h1, h2));
  return (bw == bow2_.end() ? 0.0 : bw->second) + logp2(h2, w);
}

double WordNgram::sentence_logp(const std::vector<std::string>& sentence) const {
  int h1 = kBos, h2 = kBos;
  double total = 0;
  for (const auto& w : sentence) {
    int id = word_id(w);
    total += logp(h1, h2, id);
    h1 = h2;
    h2 = id;
  }
  return total + logp(h1, h2, kEos);
}

void WordNgram::save_arpa(const std::string& path) const {
  if (!trained_) throw ConfigError("WordNgram: not trained");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[64];
  auto log10 = [&](double ln) {
    std::snprintf(buf, sizeof(buf), "%.12g", ln / kLn10);
    return std::string(buf);
  };
  // A history can carry a trigram backoff weight without having been counted
  // as a bigram itself (the sentence-initial "<s> <s>" context). Such keys
  // still need a 2-gram line to live on; their probability field is the
  // backoff-chain value, which leaves every query unchanged.
  std::vector<uint64_t> keys;
  keys.reserve(p2_.size() + bow2_.size());
  for (const auto& [k, p] : p2_) keys.push_back(k);
  for (const auto& [k, b] : bow2_) {
    if (b != 0 && !p2_.count(k)) keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());

  out << "\\data\\\n";
  out << "ngram 1=" << vocab_size() << "\n";
  out << "ngram 2=" << keys.size() << "\n";
  out << "ngram 3=" << p3_.size() << "\n\n";

  out << "\\1-grams:\n";
  for (int w = 0; w < vocab_size(); ++w) {
    out << log10(p1_[static_cast<size_t>(w)]) << '\t' << words_[static_cast<size_t>(w)];
    if (bow1_[static_cast<size_t>(w)] != 0) out << '\t' << log10(bow1_[static_cast<size_t>(w)]);
    out << '\n';
  }
  out << "\n\\2-grams:\n";
  for (uint64_t k : keys) {
    int v = static_cast<int>(k >> 21), w = static_cast<int>(k & ((1u << 21) - 1));
    auto p = p2_.find(k);
    out << log10(p != p2_.end() ? p->second : logp2(v, w)) << '\t'
        << words_[static_cast<size_t>(v)] << ' ' << words_[static_cast<size_t>(w)];
    auto bw = bow2_.find(k);
    if (bw != bow2_.end() && bw->second != 0) out << '\t' << log10(bw->second);
    out << '\n';
  }
  keys.clear();
  keys.reserve(p3_.size());
  for (const auto& [k, p] : p3_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  out << "\n\\3-grams:\n";
  for (uint64_t k : keys) {
    int u = static_cast<int>(k >> 42), v = static_cast<int>((k >> 21) & ((1u << 21) - 1)),
        w = static_cast<int>(k & ((1u << 21) - 1));
    out << log10(p3_.at(k)) << '\t' << words_[static_cast<size_t>(u)] << ' '
        << words_[static_cast<size_t>(v)] << ' ' << words_[static_cast<size_t>(w)] << '\n';
  }
  out << "\n\\end\\\n";
  if (!out) throw IoError("write failed: " + path);
}

WordNgram WordNgram::load_arpa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  WordNgram lm;
  lm.intern("<unk>");
  lm.intern("<s>");
  lm.intern("</s>");

  std::string line;
  int order = 0;
  bool saw_data = false, saw_end = false;
  struct Row {
    double logp;
    std::vector<std::string> words;
    double bow;
    bool has_bow;
  };
  std::vector<Row> rows1, rows2, rows3;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    if (line == "\\data\\") {
      saw_data = true;
      continue;
    }
    if (line == "\\end\\") {
      saw_end = true;
      break;
    }
    if (line.rfind("ngram ", 0) == 0) continue;
    if (line == "\\1-grams:") {
      order = 1;
      continue;
    }
    if (line == "\\2-grams:") {
      order = 2;
      continue;
    }
    if (line == "\\3-grams:") {
      order = 3;
      continue;
    }
    if (order == 0) continue;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    if (static_cast<int>(tok.size()) < order + 1 || static_cast<int>(tok.size()) > order + 2)
      throw InputError(path + ": malformed " + std::to_string(order) + "-gram line: " + line);
    Row row;
    row.logp = std::stod(tok[0]) * kLn10;
    for (int i = 0; i < order; ++i) row.words.push_back(tok[static_cast<size_t>(i) + 1]);
    row.has_bow = static_cast<int>(tok.size()) == order + 2;
    row.bow = row.has_bow ? std::stod(tok.back()) * kLn10 : 0.0;
    (order == 1 ? rows1 : order == 2 ? rows2 : rows3).push_back(std::move(row));
  }
  if (!saw_data || !saw_end) throw InputError(path + ": not an ARPA file");

  for (const auto& r : rows1) lm.intern(r.words[0]);
  lm.p1_.assign(static_cast<size_t>(lm.vocab_size()), kNegInf);
  lm.bow1_.assign(static_cast<size_t>(lm.vocab_size()), 0.0);
  for (const auto& r : rows1) {
    int w = lm.word_id(r.words[0]);
    lm.p1_[static_cast<size_t>(w)] = r.logp;
    if (r.has_bow) lm.bow1_[static_cast<size_t>(w)] = r.bow;
  }
  auto id_of = [&](const std::string& w) {
    auto it = lm.ids_.find(w);
    if (it == lm.ids_.end()) throw InputError(path + ": n-gram uses unlisted word '" + w + "'");
    return it->second;
  };
  for (const auto& r : rows2) {
    uint64_t k = key2(id_of(r.words[0]), id_of(r.words[1]));
    lm.p2_[k] = r.logp;
    if (r.has_bow) lm.bow2_[k] = r.bow;
  }
  for (const auto& r : rows3)
    lm.p3_[key3(id_of(r.words[0]), id_of(r.words[1]), id_of(r.words[2]))] = r.logp;
  lm.trained_ = true;
  return lm;
}

CharScorer::CharScorer(const Lexicon& lex, const WordNgram& lm,
                       const std::function<int(const std::string&)>& char_id, double unk_penalty)
    : lm_(&lm), unk_penalty_(unk_penalty) {
  if (!lm.trained()) throw ConfigError("CharScorer: language model is not trained");
  trie_.emplace_back();
  for (const auto& [word, spelling] : lex.entries) {
    int wid = lm.word_id(word);
    int node = 0;
    for (const auto& ch : spelling) {
      int c = char_id(ch);
      if (c < 0)
        throw VocabError("lexicon word '" + word + "' uses unknown character '" + ch + "'");
      auto it = trie_[static_cast<size_t>(node)].next.find(c);
      if (it == trie_[static_cast<size_t>(node)].next.end()) {
        trie_.emplace_back();
        it = trie_[static_cast<size_t>(node)]
                 .next.emplace(c, static_cast<int>(trie_.size()) - 1)
                 .first;
      }
      node = it->second;
      trie_[static_cast<size_t>(node)].words_below.push_back(wid);
    }
    trie_[static_cast<size_t>(node)].words_here.push_back(wid);
  }
}

double CharScorer::bound(const std::vector<Item>& items) const {
  double best = kNegInf;
  for (const auto& it : items) {
    double v = it.score;
    if (it.node != 0) {
      double pending = kNegInf;
      for (int w : trie_[static_cast<size_t>(it.node)].words_below)
        pending = std::max(pending, lm_->logp(it.h1, it.h2, w));
      v += pending;
    }
    best = std::max(best, v);
  }
  return best;
}

CharScorer::State CharScorer::initial() const {
  State s;
  s.items.push_back(Item{WordNgram::kBos, WordNgram::kBos, 0, 0.0});
  s.reported = 0.0;
  return s;
}

std::pair<CharScorer::State, double> CharScorer::advance(const State& s, int char_id) const {
  if (s.items.empty()) throw InputError("CharScorer::advance: empty state");
  std::map<std::tuple<int, int, int>, double> best;
  auto relax = [&](int h1, int h2, int node, double score) {
    auto key = std::make_tuple(h1, h2, node);
    auto it = best.find(key);
    if (it == best.end())
      best.emplace(key, score);
    else if (score > it->second)
      it->second = score;
  };
  for (const auto& item : s.items) {
    auto arc = trie_[static_cast<size_t>(item.node)].next.find(char_id);
    if (arc != trie_[static_cast<size_t>(item.node)].next.end()) {
      int child = arc->second;
      relax(item.h1, item.h2, child, item.score);
      for (int w : trie_[static_cast<size_t>(child)].words_here)
        relax(item.h2, w, 0, item.score + lm_->logp(item.h1, item.h2, w));
    }
    if (item.node == 0) {
      // The character alone as an unknown word keeps the search total.
      relax(item.h2, WordNgram::kUnk, 0,
            item.score + lm_->logp(item.h1, item.h2, WordNgram::kUnk) + unk_penalty_);
    }
  }
  State ns;
  ns.items.reserve(best.size());
  for (const auto& [key, score] : best)
    ns.items.push_back(Item{std::get<0>(key), std::get<1>(key), std::get<2>(key), score});
  ns.reported = bound(ns.items);
  return {std::move(ns), ns.reported - s.reported};
}

double CharScorer::terminal_delta(const State& s) const {
  if (s.items.empty()) throw InputError("CharScorer::terminal_delta: empty state");
  double best = kNegInf;
  for (const auto& item : s.items)
    if (item.node == 0)
      best = std::max(best, item.score + lm_->logp(item.h1, item.h2, WordNgram::kEos));
  return best - s.reported;
}

double CharScorer::score_chars(const std::vector<int>& chars, bool terminal) const {
  State st = initial();
  double total = st.reported;
  for (int c : chars) {
    auto [ns, delta] = advance(st, c);
    st = std::move(ns);
    total += delta;
  }
  if (terminal) total += terminal_delta(st);
  return total;
}

}  // namespace las
