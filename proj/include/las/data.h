#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "las/charlm.h"
#include "las/rng.h"
#include "las/tensor.h"
#include "las/training.h"

namespace las {

// Character inventory. Ids 0..2 are reserved (<unk>, <sos>, <eos>); real
// characters start at 3. The vocab file stores only the real characters, one
// per line.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& chars);

  int add(const std::string& token);
  int size() const { return static_cast<int>(tokens_.size()); }
  int id_of(const std::string& token) const;  // -1 when absent
  const std::string& token(int id) const;

  // UTF-8 codepoints; characters outside the vocabulary become <unk>.
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;
  static std::vector<std::string> utf8_chars(const std::string& text);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Feature file: magic "LASF", u32 version, u32 frames, u32 dim, then
// frames*dim little-endian float32, row-major. Writes go through a temp file
// and a rename so readers never see a partial file.
void write_features(const std::string& path, const Tensor& feats);
Tensor read_features(const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string feat_path;  // relative paths resolve against the manifest's directory
  std::string transcript;
};

std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<Utterance> load_dataset(const std::string& manifest_path, const Vocabulary& vocab);

// In-place per-speaker mean/variance normalization: the tensors are one
// speaker's utterances; every dimension is shifted to mean 0 and scaled to
// unit variance (std floored at 1e-6).
void normalize_features(std::vector<Tensor*>& feats);

// Synthetic task: word-structured character transcripts rendered to frames by
// repeating a per-character template with Gaussian noise, then distorted by a
// per-speaker affine jitter that normalization undoes.
struct SyntheticTaskSpec {
  int num_chars = 20;
  int feat_dim = 8;
  int frames_per_char = 3;  // +- frames_jitter, never below 1
  int frames_jitter = 1;
  double noise = 0.3;
  int min_len = 2;   // transcript length bounds, in characters
  int max_len = 12;
  int train_utts = 2000;
  int valid_utts = 200;
  int test_utts = 200;
  int num_speakers = 4;
  double speaker_offset = 0.5;  // per-dim offset magnitude
  double speaker_scale = 0.2;   // per-dim log-scale magnitude
  int num_words = 40;
  int max_word_len = 3;
  int lm_sentences = 500;  // extra text-only sentences for the word LM
  double min_template_distance = 1.0;
  bool normalize = true;
  uint64_t seed = 7;

  void validate() const;
};

struct GeneratedData {
  Vocabulary vocab;
  Tensor templates;  // [num_chars x feat_dim]
  Lexicon lexicon;
  std::vector<std::vector<std::string>> lm_corpus;  // word sentences
  std::vector<Utterance> train, valid, test;
  std::vector<std::string> train_speakers;  // speaker id per train utterance
};

// out_dir empty keeps everything in memory; otherwise writes features/,
// {train,valid,test}.tsv, vocab.txt, lexicon.txt, lm_corpus.txt, speakers.tsv.
GeneratedData generate_synthetic(const SyntheticTaskSpec& spec, const std::string& out_dir = "");

// FNV-1a over the bytes, for reproducibility stamps.
uint64_t fnv1a(const std::string& bytes);
// "config_hash=<16 hex digits>\nseed=<seed>\n"
std::string config_stamp(const std::string& config_text, uint64_t seed);
void write_stamp(const std::string& path, const std::string& config_text, uint64_t seed);

}  // namespace las
