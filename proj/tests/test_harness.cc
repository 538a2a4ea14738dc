#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "las/data.h"
#include "las/decoding.h"

using namespace las;
namespace fs = std::filesystem;

#ifndef LAS_TOOL_PATH
#define LAS_TOOL_PATH "las-tool-not-configured"
#endif

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "las_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct CmdResult {
  int code = -1;
  std::string out, err;
};

CmdResult run_tool(const fs::path& dir, const std::string& tag, const std::string& args) {
  fs::path out_f = dir / (tag + ".out"), err_f = dir / (tag + ".err");
  std::string cmd = std::string(LAS_TOOL_PATH) + " " + args + " > " + out_f.string() + " 2> " +
                    err_f.string();
  int rc = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out_f);
  r.err = slurp(err_f);
  return r;
}

Tensor random_feats(int frames, int dim, uint64_t seed) {
  Rng rng(seed);
  Tensor t({frames, dim});
  for (int i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.gaussian());
  return t;
}

SyntheticTaskSpec tiny_spec() {
  SyntheticTaskSpec spec;
  spec.num_chars = 5;
  spec.feat_dim = 4;
  spec.max_len = 6;
  spec.train_utts = 20;
  spec.valid_utts = 5;
  spec.test_utts = 5;
  spec.num_speakers = 2;
  spec.num_words = 6;
  spec.lm_sentences = 10;
  spec.seed = 11;
  return spec;
}

bool trees_identical(const fs::path& a, const fs::path& b) {
  std::map<std::string, std::string> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa[fs::relative(e.path(), a).string()] = slurp(e.path());
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb[fs::relative(e.path(), b).string()] = slurp(e.path());
  return fa == fb;
}

}  // namespace

TEST_CASE("utf8_chars splits codepoints and rejects malformed bytes") {
  CHECK(Vocabulary::utf8_chars("abc") == std::vector<std::string>{"a", "b", "c"});
  auto multi = Vocabulary::utf8_chars("h\xc3\xa9!");
  REQUIRE(multi.size() == 3);
  CHECK(multi[1] == "\xc3\xa9");
  CHECK(Vocabulary::utf8_chars("").empty());
  CHECK_THROWS_AS(Vocabulary::utf8_chars("\xff"), InputError);
  CHECK_THROWS_AS(Vocabulary::utf8_chars("\xc3"), InputError);        // truncated
  CHECK_THROWS_AS(Vocabulary::utf8_chars("\xc3\x28"), InputError);    // bad continuation
}

TEST_CASE("vocabulary reserves special ids and encodes unknowns to <unk>") {
  Vocabulary v({"a", "b", "c"});
  CHECK(v.size() == 6);
  CHECK(v.id_of("<unk>") == Vocabulary::kUnk);
  CHECK(v.id_of("<sos>") == Vocabulary::kSos);
  CHECK(v.id_of("<eos>") == Vocabulary::kEos);
  CHECK(v.id_of("a") == 3);
  CHECK(v.id_of("c") == 5);
  CHECK(v.id_of("z") == -1);
  CHECK(v.encode("bazb") == std::vector<int>{4, 3, 0, 4});
  CHECK(v.decode({3, 4, 5}) == "abc");
  CHECK(v.token(0) == "<unk>");
  CHECK_THROWS_AS(v.token(6), VocabError);
  CHECK_THROWS_AS(v.token(-1), VocabError);
  CHECK_THROWS_AS(v.add(""), VocabError);
  CHECK(v.add("a") == 3);  // re-adding returns the existing id
}

TEST_CASE("vocabulary file round-trip keeps ids") {
  fs::path dir = fresh_dir("vocab");
  Vocabulary v({"x", "y", "z"});
  v.save((dir / "vocab.txt").string());
  // Only the real characters are stored, one per line.
  CHECK(slurp(dir / "vocab.txt") == "x\ny\nz\n");
  Vocabulary loaded = Vocabulary::load((dir / "vocab.txt").string());
  CHECK(loaded.size() == v.size());
  for (int id = 0; id < v.size(); ++id) CHECK(loaded.token(id) == v.token(id));
  CHECK_THROWS_AS(Vocabulary::load((dir / "missing.txt").string()), IoError);
}

TEST_CASE("feature files round-trip bitwise after the float32 write") {
  fs::path dir = fresh_dir("feats");
  Tensor t = random_feats(7, 3, 21);
  fs::path p1 = dir / "a.feat", p2 = dir / "b.feat";
  write_features(p1.string(), t);
  Tensor r1 = read_features(p1.string());
  REQUIRE(r1.rows() == 7);
  REQUIRE(r1.cols() == 3);
  // Storage is float32: the first read rounds, after which values are stable.
  for (int i = 0; i < t.size(); ++i)
    CHECK(r1[i] == static_cast<Scalar>(static_cast<float>(t[i])));
  write_features(p2.string(), r1);
  CHECK(slurp(p1) == slurp(p2));
  Tensor r2 = read_features(p2.string());
  for (int i = 0; i < r1.size(); ++i) CHECK(r2[i] == r1[i]);
}

TEST_CASE("feature reader rejects damaged files") {
  fs::path dir = fresh_dir("feats_bad");
  Tensor t = random_feats(4, 2, 22);
  fs::path good = dir / "good.feat";
  write_features(good.string(), t);
  std::string bytes = slurp(good);

  CHECK_THROWS_AS(read_features((dir / "missing.feat").string()), IoError);

  spit(dir / "magic.feat", "XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(read_features((dir / "magic.feat").string()), IoError);

  spit(dir / "trunc.feat", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_features((dir / "trunc.feat").string()), IoError);

  std::string vbytes = bytes;
  vbytes[4] = 9;
  spit(dir / "version.feat", vbytes);
  CHECK_THROWS_AS(read_features((dir / "version.feat").string()), IoError);

  Tensor flat({4});
  CHECK_THROWS_AS(write_features((dir / "flat.feat").string(), flat), DimensionError);
}

TEST_CASE("manifest round-trip and validation") {
  fs::path dir = fresh_dir("manifest");
  std::vector<ManifestEntry> entries{{"u1", "features/u1.feat", "abc"},
                                     {"u2", "/abs/u2.feat", "b"}};
  fs::path p = dir / "m.tsv";
  save_manifest(entries, p.string());
  auto loaded = load_manifest(p.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].id == "u1");
  CHECK(loaded[0].feat_path == "features/u1.feat");
  CHECK(loaded[0].transcript == "abc");
  CHECK(loaded[1].feat_path == "/abs/u2.feat");

  spit(dir / "bad1.tsv", "only-one-field\n");
  CHECK_THROWS_AS(load_manifest((dir / "bad1.tsv").string()), InputError);
  spit(dir / "bad2.tsv", "id\tpath\n");
  CHECK_THROWS_AS(load_manifest((dir / "bad2.tsv").string()), InputError);
  spit(dir / "bad3.tsv", "\tpath\ttext\n");
  CHECK_THROWS_AS(load_manifest((dir / "bad3.tsv").string()), InputError);
  CHECK_THROWS_AS(load_manifest((dir / "missing.tsv").string()), IoError);
}

TEST_CASE("load_dataset resolves feature paths against the manifest directory") {
  fs::path dir = fresh_dir("dataset");
  fs::create_directories(dir / "features");
  Tensor t = random_feats(5, 2, 23);
  write_features((dir / "features" / "u1.feat").string(), t);
  save_manifest({{"u1", "features/u1.feat", "ab"}}, (dir / "m.tsv").string());

  Vocabulary v({"a", "b"});
  // Load via a path that is not the current directory.
  auto utts = load_dataset((dir / "m.tsv").string(), v);
  REQUIRE(utts.size() == 1);
  CHECK(utts[0].id == "u1");
  CHECK(utts[0].feats.rows() == 5);
  CHECK(utts[0].targets == std::vector<int>{3, 4});
}

TEST_CASE("normalize_features zeroes means and scales variances globally") {
  Rng rng(24);
  Tensor a = random_feats(40, 3, 25), b = random_feats(25, 3, 26);
  for (int i = 0; i < a.size(); ++i) a[i] = static_cast<Scalar>(a[i] * 3.0 + 5.0);
  for (int i = 0; i < b.size(); ++i) b[i] = static_cast<Scalar>(b[i] * 3.0 + 5.0);
  std::vector<Tensor*> group{&a, &b};
  normalize_features(group);

  const long frames = 65;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (const Tensor* t : {&a, &b})
      for (int r = 0; r < t->rows(); ++r) mean += t->at(r, c);
    mean /= static_cast<double>(frames);
    for (const Tensor* t : {&a, &b})
      for (int r = 0; r < t->rows(); ++r) {
        double d = t->at(r, c) - mean;
        var += d * d;
      }
    var /= static_cast<double>(frames);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("normalize_features flattens constant dimensions to zero") {
  Tensor a({10, 2});
  Rng rng(27);
  for (int r = 0; r < 10; ++r) {
    a.at(r, 0) = 4.5;  // constant
    a.at(r, 1) = static_cast<Scalar>(rng.gaussian());
  }
  std::vector<Tensor*> group{&a};
  normalize_features(group);
  for (int r = 0; r < 10; ++r) CHECK(a.at(r, 0) == 0.0);
}

TEST_CASE("normalize_features input validation") {
  std::vector<Tensor*> empty;
  CHECK_THROWS_AS(normalize_features(empty), InputError);

  Tensor one({1, 2});
  std::vector<Tensor*> single{&one};
  CHECK_THROWS_AS(normalize_features(single), InputError);

  Tensor a({3, 2}), b({3, 4});
  std::vector<Tensor*> mismatched{&a, &b};
  CHECK_THROWS_AS(normalize_features(mismatched), DimensionError);
}

TEST_CASE("synthetic generation is deterministic in memory") {
  SyntheticTaskSpec spec = tiny_spec();
  GeneratedData d1 = generate_synthetic(spec);
  GeneratedData d2 = generate_synthetic(spec);
  REQUIRE(d1.train.size() == d2.train.size());
  for (size_t i = 0; i < d1.train.size(); ++i) {
    CHECK(d1.train[i].id == d2.train[i].id);
    CHECK(d1.train[i].targets == d2.train[i].targets);
    REQUIRE(d1.train[i].feats.size() == d2.train[i].feats.size());
    for (int k = 0; k < d1.train[i].feats.size(); ++k)
      CHECK(d1.train[i].feats[k] == d2.train[i].feats[k]);
  }
  CHECK(d1.lm_corpus == d2.lm_corpus);

  SyntheticTaskSpec other = spec;
  other.seed = 12;
  GeneratedData d3 = generate_synthetic(other);
  bool any_diff = false;
  for (size_t i = 0; i < d1.train.size() && !any_diff; ++i)
    any_diff = d1.train[i].targets != d3.train[i].targets;
  CHECK(any_diff);
}

TEST_CASE("synthetic generation writes byte-identical trees for one seed") {
  SyntheticTaskSpec spec = tiny_spec();
  fs::path d1 = fresh_dir("gen1"), d2 = fresh_dir("gen2");
  generate_synthetic(spec, d1.string());
  generate_synthetic(spec, d2.string());
  CHECK(trees_identical(d1, d2));
  for (const char* f : {"train.tsv", "valid.tsv", "test.tsv", "vocab.txt", "lexicon.txt",
                        "lm_corpus.txt", "speakers.tsv"})
    CHECK(fs::exists(d1 / f));
}

TEST_CASE("templates have norm 2 and respect the separation floor") {
  SyntheticTaskSpec spec = tiny_spec();
  GeneratedData data = generate_synthetic(spec);
  REQUIRE(data.templates.rows() == spec.num_chars);
  for (int c = 0; c < spec.num_chars; ++c) {
    double norm = 0;
    for (int k = 0; k < spec.feat_dim; ++k) norm += data.templates.at(c, k) * data.templates.at(c, k);
    CHECK(std::sqrt(norm) == doctest::Approx(2.0).epsilon(1e-9));
    for (int p = 0; p < c; ++p) {
      double d2 = 0;
      for (int k = 0; k < spec.feat_dim; ++k) {
        double d = data.templates.at(c, k) - data.templates.at(p, k);
        d2 += d * d;
      }
      CHECK(std::sqrt(d2) >= spec.min_template_distance - 1e-12);
    }
  }
  // Impossible packing is reported, not looped forever.
  SyntheticTaskSpec cramped = tiny_spec();
  cramped.num_chars = 26;
  cramped.feat_dim = 1;
  CHECK_THROWS_AS(generate_synthetic(cramped), ConfigError);
}

TEST_CASE("frame counts stay within the jitter bounds") {
  SyntheticTaskSpec spec = tiny_spec();
  spec.frames_per_char = 3;
  spec.frames_jitter = 1;
  GeneratedData data = generate_synthetic(spec);
  for (const auto& u : data.train) {
    long len = static_cast<long>(u.targets.size());
    CHECK(u.feats.rows() >= len * std::max(1, spec.frames_per_char - spec.frames_jitter));
    CHECK(u.feats.rows() <= len * (spec.frames_per_char + spec.frames_jitter));
    CHECK(u.feats.cols() == spec.feat_dim);
  }
}

TEST_CASE("utterance ids name the split, speaker, and index") {
  GeneratedData data = generate_synthetic(tiny_spec());
  CHECK(data.train[0].id == "train_s00_u0000");
  CHECK(data.train.back().id == "train_s01_u0019");
  CHECK(data.valid[0].id == "valid_s00_u0000");
  CHECK(data.train_speakers.size() == data.train.size());
  CHECK(data.train_speakers[0] == "s00");
  CHECK(data.train_speakers.back() == "s01");
}

TEST_CASE("lexicon always contains at least two one-character words") {
  GeneratedData data = generate_synthetic(tiny_spec());
  int singles = 0;
  for (const auto& [word, spelling] : data.lexicon.entries)
    if (spelling.size() == 1) ++singles;
  CHECK(singles >= 2);
  CHECK(static_cast<int>(data.lexicon.entries.size()) == tiny_spec().num_words);
}

TEST_CASE("speaker jitter moves the raw clouds apart and normalization closes them") {
  SyntheticTaskSpec spec = tiny_spec();
  spec.speaker_offset = 2.0;
  spec.normalize = false;
  GeneratedData raw = generate_synthetic(spec);

  auto speaker_mean = [&](const GeneratedData& d, const std::string& s) {
    std::vector<double> mean(static_cast<size_t>(spec.feat_dim), 0);
    long n = 0;
    for (size_t i = 0; i < d.train.size(); ++i) {
      if (d.train_speakers[i] != s) continue;
      const Tensor& t = d.train[i].feats;
      for (int r = 0; r < t.rows(); ++r)
        for (int c = 0; c < spec.feat_dim; ++c) mean[static_cast<size_t>(c)] += t.at(r, c);
      n += t.rows();
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    return mean;
  };
  auto gap = [&](const GeneratedData& d) {
    auto a = speaker_mean(d, "s00"), b = speaker_mean(d, "s01");
    double g = 0;
    for (int c = 0; c < spec.feat_dim; ++c) g += (a[static_cast<size_t>(c)] - b[static_cast<size_t>(c)]) *
                                                 (a[static_cast<size_t>(c)] - b[static_cast<size_t>(c)]);
    return std::sqrt(g);
  };
  CHECK(gap(raw) > 0.5);

  spec.normalize = true;
  GeneratedData norm = generate_synthetic(spec);
  CHECK(gap(norm) < 1e-9);
}

TEST_CASE("clean generation is decodable by nearest-template lookup") {
  SyntheticTaskSpec spec = tiny_spec();
  spec.noise = 0;
  spec.frames_jitter = 0;
  spec.speaker_offset = 0;
  spec.speaker_scale = 0;
  spec.normalize = false;
  GeneratedData data = generate_synthetic(spec);

  std::vector<std::vector<int>> hyps, refs;
  for (const auto& u : data.train) {
    std::vector<int> hyp;
    for (int r = 0; r < u.feats.rows(); r += spec.frames_per_char) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < spec.num_chars; ++c) {
        double d2 = 0;
        for (int k = 0; k < spec.feat_dim; ++k) {
          double d = u.feats.at(r, k) - data.templates.at(c, k);
          d2 += d * d;
        }
        if (d2 < best_d) {
          best_d = d2;
          best = c;
        }
      }
      hyp.push_back(best + 3);
    }
    hyps.push_back(hyp);
    refs.push_back(u.targets);
  }
  EvalResult res = evaluate_pairs(hyps, refs, Vocabulary::kSos, Vocabulary::kEos);
  CHECK(res.cer == 0.0);
  CHECK(res.ser == 0.0);
}

TEST_CASE("task spec validation lists the offending field") {
  SyntheticTaskSpec spec = tiny_spec();
  spec.num_chars = 1;
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("num_chars"), ConfigError);
  spec = tiny_spec();
  spec.num_chars = 27;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = tiny_spec();
  spec.min_len = 9;
  spec.max_len = 2;
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("min_len"), ConfigError);
  spec = tiny_spec();
  spec.num_words = 2;
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("num_words"), ConfigError);
  spec = tiny_spec();
  spec.frames_per_char = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("fnv1a matches the reference vectors") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("config stamps change exactly when the configuration changes") {
  std::string s1 = config_stamp("lr=0.001\n", 5);
  CHECK(s1 == config_stamp("lr=0.001\n", 5));
  CHECK(s1 != config_stamp("lr=0.002\n", 5));
  CHECK(s1 != config_stamp("lr=0.001\n", 6));
  CHECK(s1.find("config_hash=") == 0);
  CHECK(s1.find("seed=5\n") != std::string::npos);

  fs::path dir = fresh_dir("stamp");
  write_stamp((dir / "stamp.txt").string(), "lr=0.001\n", 5);
  CHECK(slurp(dir / "stamp.txt") == s1);
}

TEST_CASE("cli exit codes by error class") {
  CHECK(exit_code_for(ConfigError("x")) == 1);
  CHECK(exit_code_for(NumericError("x")) == 3);
  CHECK(exit_code_for(InputError("x")) == 2);
  CHECK(exit_code_for(IoError("x")) == 2);
  CHECK(exit_code_for(VocabError("x")) == 2);
  CHECK(exit_code_for(CheckpointError("x")) == 2);
  CHECK(exit_code_for(DimensionError("x")) == 2);
}

TEST_CASE("cli pipeline: gen-data, build-lm, train, decode, eval, sweep") {
  fs::path dir = fresh_dir("pipeline");
  fs::path data = dir / "data";

  CmdResult gen = run_tool(dir, "gen",
                           "gen-data --out " + data.string() +
                               " --num-chars 5 --feat-dim 4 --max-len 6 --train-utts 24"
                               " --valid-utts 6 --test-utts 6 --num-speakers 2 --num-words 6"
                               " --lm-sentences 12 --seed 11");
  CHECK(gen.code == 0);
  CHECK(fs::exists(data / "stamp.txt"));

  CmdResult lm = run_tool(dir, "lm",
                          "build-lm --corpus " + (data / "lm_corpus.txt").string() + " --arpa " +
                              (data / "lm.arpa").string());
  CHECK(lm.code == 0);

  fs::path run = dir / "run";
  CmdResult train = run_tool(dir, "train",
                             "train --data " + data.string() + " --out " + run.string() +
                                 " --encoder-hidden 6 --decoder-hidden 6 --embed-dim 4"
                                 " --attn-dim 6 --frame-skip 1 --epochs 2 --batch-size 4"
                                 " --seed 1");
  CHECK(train.code == 0);
  CHECK(train.out.find("best_epoch=") != std::string::npos);
  CHECK(fs::exists(run / "checkpoint.las"));
  CHECK(fs::exists(run / "metrics.tsv"));
  CHECK(fs::exists(run / "stamp.txt"));

  fs::path hyp = dir / "hyp.tsv";
  CmdResult dec = run_tool(dir, "decode",
                           "decode --checkpoint " + (run / "checkpoint.las").string() +
                               " --vocab " + (data / "vocab.txt").string() + " --manifest " +
                               (data / "test.tsv").string() + " --greedy --max-len 20 --out " +
                               hyp.string());
  CHECK(dec.code == 0);
  CHECK(fs::exists(hyp));

  CmdResult ev = run_tool(dir, "eval",
                          "eval --hyps " + hyp.string() + " --refs " + (data / "test.tsv").string() +
                              " --vocab " + (data / "vocab.txt").string());
  CHECK(ev.code == 0);
  CHECK(ev.out.find("cer=") == 0);
  CHECK(ev.out.find("ser=") != std::string::npos);

  // Beam decoding with LM fusion exercises the full scorer path.
  fs::path hyp_beam = dir / "hyp_beam.tsv";
  CmdResult fused = run_tool(dir, "fused",
                             "decode --checkpoint " + (run / "checkpoint.las").string() +
                                 " --vocab " + (data / "vocab.txt").string() + " --manifest " +
                                 (data / "test.tsv").string() + " --beam 2 --tau 2 --gamma 0.1" +
                                 " --max-len 20 --lexicon " + (data / "lexicon.txt").string() +
                                 " --arpa " + (data / "lm.arpa").string() + " --out " +
                                 hyp_beam.string());
  CHECK(fused.code == 0);

  fs::path sweep = dir / "sweep.tsv";
  CmdResult sw = run_tool(dir, "sweep",
                          "sweep --checkpoint " + (run / "checkpoint.las").string() + " --vocab " +
                              (data / "vocab.txt").string() + " --manifest " +
                              (data / "test.tsv").string() + " --beams 1,2 --max-len 20 --out " +
                              sweep.string());
  CHECK(sw.code == 0);
  std::istringstream rows(slurp(sweep));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(rows, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);  // header + one row per beam width
  CHECK(lines[0].find("beam\tcer") == 0);
  CHECK(lines[1].substr(0, 2) == "1\t");
  CHECK(lines[2].substr(0, 2) == "2\t");
}

TEST_CASE("cli eval of references against themselves is exactly zero") {
  fs::path dir = fresh_dir("selfeval");
  fs::path data = dir / "data";
  REQUIRE(run_tool(dir, "gen",
                   "gen-data --out " + data.string() +
                       " --num-chars 4 --feat-dim 3 --max-len 5 --train-utts 8 --valid-utts 2"
                       " --test-utts 4 --num-words 5 --seed 9")
              .code == 0);
  // Hypotheses copied straight from the reference manifest.
  std::ostringstream hyps;
  for (const auto& e : load_manifest((data / "test.tsv").string()))
    hyps << e.id << '\t' << e.transcript << '\n';
  spit(dir / "hyp.tsv", hyps.str());
  CmdResult ev = run_tool(dir, "eval",
                          "eval --hyps " + (dir / "hyp.tsv").string() + " --refs " +
                              (data / "test.tsv").string() + " --vocab " +
                              (data / "vocab.txt").string());
  CHECK(ev.code == 0);
  CHECK(ev.out.find("cer=0.000000") != std::string::npos);
  CHECK(ev.out.find("ser=0.000000") != std::string::npos);
}

TEST_CASE("cli rejects unknown config keys and names the valid ones") {
  fs::path dir = fresh_dir("badconfig");
  spit(dir / "bad.cfg", "no_such_knob = 7\n");
  CmdResult r = run_tool(dir, "badcfg",
                         "train --config " + (dir / "bad.cfg").string() + " --data " +
                             dir.string() + " --out " + (dir / "out").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("valid keys:") != std::string::npos);
  CHECK(r.err.find("--epochs") == std::string::npos);  // keys are listed bare
  CHECK(r.err.find("epochs") != std::string::npos);
}

TEST_CASE("cli config file applies but command line flags win") {
  fs::path dir = fresh_dir("cfgprecedence");
  fs::path data = dir / "data";
  REQUIRE(run_tool(dir, "gen",
                   "gen-data --out " + data.string() +
                       " --num-chars 4 --feat-dim 3 --max-len 5 --train-utts 8 --valid-utts 2"
                       " --test-utts 2 --num-words 5 --seed 9")
              .code == 0);
  spit(dir / "train.cfg",
       "# tiny smoke setup\n"
       "epochs = 1\n"
       "encoder-hidden = 4\n"
       "decoder-hidden = 4\n"
       "embed-dim = 3\n"
       "attn-dim = 4\n"
       "batch-size = 4\n"
       "seed = 3\n");
  auto epochs_trained = [&](const fs::path& run) {
    std::istringstream rows(slurp(run / "metrics.tsv"));
    int lines = 0;
    for (std::string line; std::getline(rows, line);) ++lines;
    return lines - 1;  // header
  };
  CmdResult file_only = run_tool(dir, "fileonly",
                                 "train --config " + (dir / "train.cfg").string() + " --data " +
                                     data.string() + " --out " + (dir / "run1").string());
  CHECK(file_only.code == 0);
  CHECK(epochs_trained(dir / "run1") == 1);
  CmdResult flag_wins = run_tool(dir, "flagwins",
                                 "train --config " + (dir / "train.cfg").string() +
                                     " --epochs 2 --data " + data.string() + " --out " +
                                     (dir / "run2").string());
  CHECK(flag_wins.code == 0);
  CHECK(epochs_trained(dir / "run2") == 2);
}

TEST_CASE("cli flags half of a fusion pair as a configuration error") {
  fs::path dir = fresh_dir("haffusion");
  fs::path data = dir / "data";
  REQUIRE(run_tool(dir, "gen",
                   "gen-data --out " + data.string() +
                       " --num-chars 4 --feat-dim 3 --max-len 5 --train-utts 8 --valid-utts 2"
                       " --test-utts 2 --num-words 5 --seed 9")
              .code == 0);
  fs::path run = dir / "run";
  REQUIRE(run_tool(dir, "train",
                   "train --data " + data.string() + " --out " + run.string() +
                       " --encoder-hidden 4 --decoder-hidden 4 --embed-dim 3 --attn-dim 4"
                       " --frame-skip 1 --epochs 1 --batch-size 4 --seed 1")
              .code == 0);
  CmdResult r = run_tool(dir, "half",
                         "decode --checkpoint " + (run / "checkpoint.las").string() + " --vocab " +
                             (data / "vocab.txt").string() + " --manifest " +
                             (data / "test.tsv").string() + " --lexicon " +
                             (data / "lexicon.txt").string() + " --out " +
                             (dir / "h.tsv").string());
  CHECK(r.code == 1);

  CmdResult missing = run_tool(dir, "missing",
                               "decode --checkpoint " + (dir / "nope.las").string() + " --vocab " +
                                   (data / "vocab.txt").string() + " --manifest " +
                                   (data / "test.tsv").string() + " --out " +
                                   (dir / "h2.tsv").string());
  CHECK(missing.code == 2);
}

TEST_CASE("cli gen-data runs are reproducible per seed") {
  fs::path dir = fresh_dir("genrepro");
  fs::path d1 = dir / "one", d2 = dir / "two", d3 = dir / "three";
  std::string base = " --num-chars 4 --feat-dim 3 --max-len 5 --train-utts 6 --valid-utts 2"
                     " --test-utts 2 --num-words 5";
  REQUIRE(run_tool(dir, "g1", "gen-data --out " + d1.string() + base + " --seed 11").code == 0);
  REQUIRE(run_tool(dir, "g2", "gen-data --out " + d2.string() + base + " --seed 11").code == 0);
  REQUIRE(run_tool(dir, "g3", "gen-data --out " + d3.string() + base + " --seed 12").code == 0);
  CHECK(trees_identical(d1, d2));
  CHECK(slurp(d1 / "stamp.txt") == slurp(d2 / "stamp.txt"));
  CHECK(slurp(d1 / "stamp.txt") != slurp(d3 / "stamp.txt"));
  CHECK(slurp(d1 / "train.tsv") != slurp(d3 / "train.tsv"));
}
