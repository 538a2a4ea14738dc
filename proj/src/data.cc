#include "las/data.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace las {

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& in, size_t off) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<unsigned char>(in[off + static_cast<size_t>(i)])) << (8 * i);
  return v;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Vocabulary::Vocabulary() {
  add("<unk>");
  add("<sos>");
  add("<eos>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& chars) : Vocabulary() {
  for (const auto& c : chars) add(c);
}

int Vocabulary::add(const std::string& token) {
  if (token.empty()) throw VocabError("empty vocabulary token");
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw VocabError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<std::string> Vocabulary::utf8_chars(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char b = static_cast<unsigned char>(text[i]);
    size_t len = 0;
    if (b < 0x80)
      len = 1;
    else if ((b & 0xe0) == 0xc0)
      len = 2;
    else if ((b & 0xf0) == 0xe0)
      len = 3;
    else if ((b & 0xf8) == 0xf0)
      len = 4;
    else
      throw InputError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    if (i + len > text.size()) throw InputError("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80)
        throw InputError("invalid UTF-8 continuation at offset " + std::to_string(i + k));
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& c : utf8_chars(text)) {
    int id = id_of(c);
    out.push_back(id < 0 ? kUnk : id);
  }
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += token(id);
  return out;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) v.add(line);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (int id = 3; id < size(); ++id) out << tokens_[static_cast<size_t>(id)] << '\n';
  if (!out) throw IoError("write failed: " + path);
}

void write_features(const std::string& path, const Tensor& feats) {
  if (feats.rank() != 2) throw DimensionError("write_features: want [frames x dim], got " + shape_str(feats.shape()));
  std::string bytes;
  bytes.reserve(16 + static_cast<size_t>(feats.size()) * 4);
  bytes += "LASF";
  put_u32(bytes, 1);
  put_u32(bytes, static_cast<uint32_t>(feats.rows()));
  put_u32(bytes, static_cast<uint32_t>(feats.cols()));
  for (int i = 0; i < feats.size(); ++i)
    put_u32(bytes, std::bit_cast<uint32_t>(static_cast<float>(feats[i])));
  write_file_atomic(path, bytes);
}

Tensor read_features(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "LASF") != 0)
    throw IoError(path + ": not a feature file");
  uint32_t version = get_u32(bytes, 4);
  if (version != 1) throw IoError(path + ": unsupported feature file version " + std::to_string(version));
  uint32_t frames = get_u32(bytes, 8), dim = get_u32(bytes, 12);
  size_t want = 16 + static_cast<size_t>(frames) * dim * 4;
  if (bytes.size() != want)
    throw IoError(path + ": truncated feature file (" + std::to_string(bytes.size()) + " bytes, want " +
                  std::to_string(want) + ")");
  Tensor t({static_cast<int>(frames), static_cast<int>(dim)});
  for (int i = 0; i < t.size(); ++i)
    t[i] = static_cast<Scalar>(std::bit_cast<float>(get_u32(bytes, 16 + static_cast<size_t>(i) * 4)));
  return t;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected 'id<TAB>features<TAB>transcript'");
    ManifestEntry e;
    e.id = line.substr(0, t1);
    e.feat_path = line.substr(t1 + 1, t2 - t1 - 1);
    e.transcript = line.substr(t2 + 1);
    if (e.id.empty() || e.feat_path.empty() || e.transcript.empty())
      throw InputError(path + ":" + std::to_string(lineno) + ": empty manifest field");
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& e : entries) out << e.id << '\t' << e.feat_path << '\t' << e.transcript << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Utterance> load_dataset(const std::string& manifest_path, const Vocabulary& vocab) {
  namespace fs = std::filesystem;
  fs::path base = fs::path(manifest_path).parent_path();
  std::vector<Utterance> utts;
  for (const auto& e : load_manifest(manifest_path)) {
    fs::path p(e.feat_path);
    if (p.is_relative()) p = base / p;
    Utterance u;
    u.id = e.id;
    u.feats = read_features(p.string());
    u.targets = vocab.encode(e.transcript);
    utts.push_back(std::move(u));
  }
  return utts;
}

void normalize_features(std::vector<Tensor*>& feats) {
  if (feats.empty()) throw InputError("normalize_features: no utterances");
  int dim = feats[0]->cols();
  long frames = 0;
  for (Tensor* t : feats) {
    if (t->rank() != 2 || t->cols() != dim)
      throw DimensionError("normalize_features: inconsistent shape " + shape_str(t->shape()));
    frames += t->rows();
  }
  if (frames < 2) throw InputError("normalize_features: need at least 2 frames, got " + std::to_string(frames));
  std::vector<double> mean(static_cast<size_t>(dim), 0), var(static_cast<size_t>(dim), 0);
  for (Tensor* t : feats)
    for (int r = 0; r < t->rows(); ++r)
      for (int c = 0; c < dim; ++c) mean[static_cast<size_t>(c)] += t->at(r, c);
  for (auto& m : mean) m /= static_cast<double>(frames);
  for (Tensor* t : feats)
    for (int r = 0; r < t->rows(); ++r)
      for (int c = 0; c < dim; ++c) {
        double d = t->at(r, c) - mean[static_cast<size_t>(c)];
        var[static_cast<size_t>(c)] += d * d;
      }
  for (auto& v : var) v /= static_cast<double>(frames);
  for (Tensor* t : feats)
    for (int r = 0; r < t->rows(); ++r)
      for (int c = 0; c < dim; ++c) {
        double sd = std::max(std::sqrt(var[static_cast<size_t>(c)]), 1e-6);
        t->at(r, c) = static_cast<Scalar>((t->at(r, c) - mean[static_cast<size_t>(c)]) / sd);
      }
}

void SyntheticTaskSpec::validate() const {
  if (num_chars < 2 || num_chars > 26) throw ConfigError("SyntheticTaskSpec: num_chars must be in [2, 26]");
  if (feat_dim < 1) throw ConfigError("SyntheticTaskSpec: feat_dim must be positive");
  if (frames_per_char < 1) throw ConfigError("SyntheticTaskSpec: frames_per_char must be positive");
  if (frames_jitter < 0) throw ConfigError("SyntheticTaskSpec: frames_jitter must be non-negative");
  if (noise < 0) throw ConfigError("SyntheticTaskSpec: noise must be non-negative");
  if (min_len < 1 || max_len < min_len) throw ConfigError("SyntheticTaskSpec: need 1 <= min_len <= max_len");
  if (train_utts < 1) throw ConfigError("SyntheticTaskSpec: train_utts must be positive");
  if (valid_utts < 0 || test_utts < 0) throw ConfigError("SyntheticTaskSpec: utterance counts must be non-negative");
  if (num_speakers < 1) throw ConfigError("SyntheticTaskSpec: num_speakers must be positive");
  if (num_words < 3) throw ConfigError("SyntheticTaskSpec: num_words must be at least 3");
  if (max_word_len < 1) throw ConfigError("SyntheticTaskSpec: max_word_len must be positive");
  if (lm_sentences < 0) throw ConfigError("SyntheticTaskSpec: lm_sentences must be non-negative");
}

namespace {

struct SpeakerJitter {
  std::vector<double> offset, scale;
};

}  // namespace

GeneratedData generate_synthetic(const SyntheticTaskSpec& spec, const std::string& out_dir) {
  spec.validate();
  Rng rng(spec.seed);
  GeneratedData data;

  std::vector<std::string> chars;
  for (int i = 0; i < spec.num_chars; ++i) chars.push_back(std::string(1, static_cast<char>('a' + i)));
  data.vocab = Vocabulary(chars);

  // Templates: distinct directions, norm 2, separated by min_template_distance.
  data.templates = Tensor({spec.num_chars, spec.feat_dim});
  for (int c = 0; c < spec.num_chars; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<double> v(static_cast<size_t>(spec.feat_dim));
      double norm = 0;
      for (auto& x : v) {
        x = rng.gaussian();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm < 1e-12) continue;
      for (auto& x : v) x = 2.0 * x / norm;
      placed = true;
      for (int p = 0; p < c && placed; ++p) {
        double d2 = 0;
        for (int k = 0; k < spec.feat_dim; ++k) {
          double d = data.templates.at(p, k) - v[static_cast<size_t>(k)];
          d2 += d * d;
        }
        if (std::sqrt(d2) < spec.min_template_distance) placed = false;
      }
      if (placed)
        for (int k = 0; k < spec.feat_dim; ++k) data.templates.at(c, k) = static_cast<Scalar>(v[static_cast<size_t>(k)]);
    }
    if (!placed)
      throw ConfigError("generate_synthetic: cannot place " + std::to_string(spec.num_chars) +
                        " templates at distance " + std::to_string(spec.min_template_distance) +
                        "; lower it or raise feat_dim");
  }

  // Word list over the characters; at least two one-character words so any
  // length is reachable when composing transcripts.
  std::vector<std::string> words;
  std::set<std::string> used;
  auto add_word = [&](const std::string& w) {
    if (used.insert(w).second) {
      words.push_back(w);
      std::vector<std::string> spelling;
      for (char ch : w) spelling.push_back(std::string(1, ch));
      data.lexicon.add(w, std::move(spelling));
      return true;
    }
    return false;
  };
  while (static_cast<int>(words.size()) < 2)
    add_word(std::string(1, static_cast<char>('a' + rng.uniform_int(0, spec.num_chars - 1))));
  int guard = 0;
  while (static_cast<int>(words.size()) < spec.num_words) {
    int len = rng.uniform_int(1, spec.max_word_len);
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.uniform_int(0, spec.num_chars - 1)));
    if (!add_word(w) && ++guard > 100000)
      throw ConfigError("generate_synthetic: cannot draw " + std::to_string(spec.num_words) + " distinct words");
  }

  auto sample_sentence = [&]() {
    int target = rng.uniform_int(spec.min_len, spec.max_len);
    std::vector<std::string> sentence;
    int len = 0;
    while (len < target) {
      int room = spec.max_len - len;
      const std::string* w = nullptr;
      do {
        w = &words[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(words.size()) - 1))];
      } while (static_cast<int>(w->size()) > room);
      sentence.push_back(*w);
      len += static_cast<int>(w->size());
    }
    return sentence;
  };

  std::vector<SpeakerJitter> speakers(static_cast<size_t>(spec.num_speakers));
  for (auto& s : speakers) {
    s.offset.resize(static_cast<size_t>(spec.feat_dim));
    s.scale.resize(static_cast<size_t>(spec.feat_dim));
    for (int k = 0; k < spec.feat_dim; ++k) {
      s.offset[static_cast<size_t>(k)] = spec.speaker_offset * rng.gaussian();
      s.scale[static_cast<size_t>(k)] = std::exp(spec.speaker_scale * rng.gaussian());
    }
  }

  auto make_split = [&](const std::string& name, int count, std::vector<Utterance>& out,
                        std::vector<std::string>* speaker_ids, bool record_corpus) {
    std::vector<int> speaker_of;
    for (int i = 0; i < count; ++i) {
      int s = static_cast<int>(static_cast<long>(i) * spec.num_speakers / count);
      speaker_of.push_back(s);
      auto sentence = sample_sentence();
      if (record_corpus) data.lm_corpus.push_back(sentence);
      std::string transcript;
      for (const auto& w : sentence) transcript += w;
      std::vector<int> targets = data.vocab.encode(transcript);
      int total_frames = 0;
      std::vector<int> frames_per(targets.size());
      for (size_t k = 0; k < targets.size(); ++k) {
        int f = spec.frames_per_char +
                (spec.frames_jitter > 0 ? rng.uniform_int(-spec.frames_jitter, spec.frames_jitter) : 0);
        frames_per[k] = std::max(1, f);
        total_frames += frames_per[k];
      }
      Tensor feats({total_frames, spec.feat_dim});
      const SpeakerJitter& jit = speakers[static_cast<size_t>(s)];
      int row = 0;
      for (size_t k = 0; k < targets.size(); ++k) {
        int tpl = targets[k] - 3;
        for (int f = 0; f < frames_per[k]; ++f, ++row)
          for (int dcol = 0; dcol < spec.feat_dim; ++dcol) {
            double x = data.templates.at(tpl, dcol) + spec.noise * rng.gaussian();
            feats.at(row, dcol) =
                static_cast<Scalar>(jit.scale[static_cast<size_t>(dcol)] * x + jit.offset[static_cast<size_t>(dcol)]);
          }
      }
      char id[64];
      std::snprintf(id, sizeof(id), "%s_s%02d_u%04d", name.c_str(), s, i);
      Utterance u;
      u.id = id;
      u.feats = std::move(feats);
      u.targets = std::move(targets);
      out.push_back(std::move(u));
      if (speaker_ids) {
        char sid[16];
        std::snprintf(sid, sizeof(sid), "s%02d", s);
        speaker_ids->push_back(sid);
      }
    }
    if (spec.normalize) {
      for (int s = 0; s < spec.num_speakers; ++s) {
        std::vector<Tensor*> group;
        for (int i = 0; i < count; ++i)
          if (speaker_of[static_cast<size_t>(i)] == s)
            group.push_back(&out[out.size() - static_cast<size_t>(count) + static_cast<size_t>(i)].feats);
        if (!group.empty()) normalize_features(group);
      }
    }
  };

  make_split("train", spec.train_utts, data.train, &data.train_speakers, true);
  make_split("valid", spec.valid_utts, data.valid, nullptr, false);
  make_split("test", spec.test_utts, data.test, nullptr, false);
  for (int i = 0; i < spec.lm_sentences; ++i) data.lm_corpus.push_back(sample_sentence());

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "features", ec);
    if (ec) throw IoError("cannot create " + out_dir + "/features: " + ec.message());
    auto write_split = [&](const std::string& name, const std::vector<Utterance>& utts) {
      std::vector<ManifestEntry> entries;
      for (const auto& u : utts) {
        std::string rel = "features/" + u.id + ".feat";
        write_features((fs::path(out_dir) / rel).string(), u.feats);
        entries.push_back({u.id, rel, data.vocab.decode(u.targets)});
      }
      save_manifest(entries, (fs::path(out_dir) / (name + ".tsv")).string());
    };
    write_split("train", data.train);
    write_split("valid", data.valid);
    write_split("test", data.test);
    data.vocab.save((fs::path(out_dir) / "vocab.txt").string());
    data.lexicon.save((fs::path(out_dir) / "lexicon.txt").string());
    std::ofstream corpus((fs::path(out_dir) / "lm_corpus.txt").string());
    if (!corpus) throw IoError("cannot write " + out_dir + "/lm_corpus.txt");
    for (const auto& sentence : data.lm_corpus) {
      for (size_t i = 0; i < sentence.size(); ++i) corpus << (i ? " " : "") << sentence[i];
      corpus << '\n';
    }
    std::ofstream spk((fs::path(out_dir) / "speakers.tsv").string());
    if (!spk) throw IoError("cannot write " + out_dir + "/speakers.tsv");
    for (size_t i = 0; i < data.train.size(); ++i)
      spk << data.train[i].id << '\t' << data.train_speakers[i] << '\n';
  }
  return data;
}

uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_stamp(const std::string& config_text, uint64_t seed) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "config_hash=%016llx\nseed=%llu\n",
                static_cast<unsigned long long>(fnv1a(config_text)),
                static_cast<unsigned long long>(seed));
  return buf;
}

void write_stamp(const std::string& path, const std::string& config_text, uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << config_stamp(config_text, seed);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace las
