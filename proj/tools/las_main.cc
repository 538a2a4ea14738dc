// Command-line front end: synthetic data generation, LM estimation, training,
// decoding, scoring, and beam sweeps over the same library the tests drive.

#include <chrono>
#include <cstdio>
#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "las/data.h"
#include "las/decoding.h"
#include "las/model.h"
#include "las/training.h"

namespace fs = std::filesystem;

namespace {

struct GenArgs {
  std::string out;
  las::SyntheticTaskSpec spec;
};

void run_gen(const GenArgs& a) {
  las::generate_synthetic(a.spec, a.out);
  std::ostringstream cfg;
  cfg << "num_chars=" << a.spec.num_chars << "\nfeat_dim=" << a.spec.feat_dim
      << "\nframes_per_char=" << a.spec.frames_per_char << "\nframes_jitter=" << a.spec.frames_jitter
      << "\nnoise=" << a.spec.noise << "\nmin_len=" << a.spec.min_len << "\nmax_len=" << a.spec.max_len
      << "\ntrain_utts=" << a.spec.train_utts << "\nvalid_utts=" << a.spec.valid_utts
      << "\ntest_utts=" << a.spec.test_utts << "\nnum_speakers=" << a.spec.num_speakers
      << "\nnum_words=" << a.spec.num_words << "\nmax_word_len=" << a.spec.max_word_len
      << "\nlm_sentences=" << a.spec.lm_sentences << "\nnormalize=" << a.spec.normalize << "\n";
  las::write_stamp((fs::path(a.out) / "stamp.txt").string(), cfg.str(), a.spec.seed);
  std::cerr << "wrote " << a.spec.train_utts << "+" << a.spec.valid_utts << "+" << a.spec.test_utts
            << " utterances to " << a.out << "\n";
}

struct LmArgs {
  std::string corpus, arpa;
};

void run_build_lm(const LmArgs& a) {
  std::ifstream in(a.corpus);
  if (!in) throw las::IoError("cannot read " + a.corpus);
  std::vector<std::vector<std::string>> corpus;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<std::string> sentence;
    std::string w;
    while (ss >> w) sentence.push_back(w);
    if (!sentence.empty()) corpus.push_back(std::move(sentence));
  }
  las::WordNgram lm;
  lm.train(corpus);
  lm.save_arpa(a.arpa);
  std::cerr << "trained trigram on " << corpus.size() << " sentences, " << lm.vocab_size()
            << " words -> " << a.arpa << "\n";
}

struct TrainArgs {
  std::string data, out, config;
  std::string attention = "content";
  std::string attend_with = "new_state";
  int encoder_layers = 1, encoder_hidden = 32, decoder_hidden = 32, embed_dim = 16, attn_dim = 32;
  int frame_skip = 2, attn_filters = 4, attn_filter_width = 5;
  las::TrainConfig tc;
};

// "key = value" per line, keys named like the long flags without the dashes.
// Flags given on the command line keep their values.
void apply_config_file(CLI::App* cmd, TrainArgs& a) {
  std::ifstream in(a.config);
  if (!in) throw las::IoError("cannot read " + a.config);

  auto set_str = [](std::string& dst) {
    return std::function<void(const std::string&)>([&dst](const std::string& v) { dst = v; });
  };
  auto set_int = [](int& dst) {
    return std::function<void(const std::string&)>(
        [&dst](const std::string& v) { dst = std::stoi(v); });
  };
  auto set_double = [](double& dst) {
    return std::function<void(const std::string&)>(
        [&dst](const std::string& v) { dst = std::stod(v); });
  };
  auto set_seed = [](uint64_t& dst) {
    return std::function<void(const std::string&)>(
        [&dst](const std::string& v) { dst = std::stoull(v); });
  };
  std::vector<std::pair<std::string, std::function<void(const std::string&)>>> keys{
      {"attention", set_str(a.attention)},
      {"attend-with", set_str(a.attend_with)},
      {"encoder-layers", set_int(a.encoder_layers)},
      {"encoder-hidden", set_int(a.encoder_hidden)},
      {"decoder-hidden", set_int(a.decoder_hidden)},
      {"embed-dim", set_int(a.embed_dim)},
      {"attn-dim", set_int(a.attn_dim)},
      {"frame-skip", set_int(a.frame_skip)},
      {"attn-filters", set_int(a.attn_filters)},
      {"attn-filter-width", set_int(a.attn_filter_width)},
      {"epochs", set_int(a.tc.max_epochs)},
      {"batch-size", set_int(a.tc.batch_size)},
      {"lr", set_double(a.tc.lr_initial)},
      {"lr-decayed", set_double(a.tc.lr_decayed)},
      {"patience", set_int(a.tc.patience)},
      {"clip", set_double(a.tc.clip_norm)},
      {"l2", set_double(a.tc.l2)},
      {"weight-noise", set_double(a.tc.weight_noise_sigma)},
      {"noise-start-epoch", set_int(a.tc.weight_noise_start_epoch)},
      {"seed", set_seed(a.tc.seed)},
  };

  auto trim = [](std::string s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    std::string key = eq == std::string::npos ? t : trim(t.substr(0, eq));
    std::string value = eq == std::string::npos ? std::string() : trim(t.substr(eq + 1));
    auto it = std::find_if(keys.begin(), keys.end(),
                           [&](const auto& kv) { return kv.first == key; });
    if (it == keys.end() || eq == std::string::npos) {
      std::string valid;
      for (const auto& [k, fn] : keys) valid += " " + k;
      throw las::ConfigError(a.config + ":" + std::to_string(lineno) +
                             ": unknown config key '" + key + "'; valid keys:" + valid);
    }
    if (cmd->count("--" + key) > 0) continue;
    try {
      it->second(value);
    } catch (const std::exception&) {
      throw las::ConfigError(a.config + ":" + std::to_string(lineno) + ": bad value '" +
                             value + "' for " + key);
    }
  }
}

std::string train_config_text(const TrainArgs& a, const las::LasConfig& cfg) {
  std::ostringstream s;
  s << "attention=" << a.attention << "\nattend_with=" << a.attend_with
    << "\nencoder_layers=" << cfg.encoder_layers << "\nencoder_hidden=" << cfg.encoder_hidden
    << "\ndecoder_hidden=" << cfg.decoder_hidden << "\nembed_dim=" << cfg.embed_dim
    << "\nattn_dim=" << cfg.attn_dim << "\nframe_skip=" << cfg.frame_skip
    << "\nfeat_dim=" << cfg.feat_dim << "\nvocab_size=" << cfg.vocab_size
    << "\nlr=" << a.tc.lr_initial << "\nlr_decayed=" << a.tc.lr_decayed << "\nclip=" << a.tc.clip_norm
    << "\nl2=" << a.tc.l2 << "\nweight_noise=" << a.tc.weight_noise_sigma
    << "\nnoise_start_epoch=" << a.tc.weight_noise_start_epoch << "\nbatch_size=" << a.tc.batch_size
    << "\nepochs=" << a.tc.max_epochs << "\npatience=" << a.tc.patience << "\n";
  return s.str();
}

void run_train(const TrainArgs& a) {
  las::Vocabulary vocab = las::Vocabulary::load((fs::path(a.data) / "vocab.txt").string());
  auto train = las::load_dataset((fs::path(a.data) / "train.tsv").string(), vocab);
  auto valid = las::load_dataset((fs::path(a.data) / "valid.tsv").string(), vocab);
  if (train.empty()) throw las::InputError("no training utterances in " + a.data);

  las::LasConfig cfg;
  cfg.feat_dim = train[0].feats.cols();
  cfg.vocab_size = vocab.size();
  cfg.encoder_layers = a.encoder_layers;
  cfg.encoder_hidden = a.encoder_hidden;
  cfg.decoder_hidden = a.decoder_hidden;
  cfg.embed_dim = a.embed_dim;
  cfg.attn_dim = a.attn_dim;
  cfg.frame_skip = a.frame_skip;
  cfg.attn_filters = a.attn_filters;
  cfg.attn_filter_width = a.attn_filter_width;
  cfg.attention = las::attention_variant_from(a.attention);
  cfg.attend_with = las::attend_with_from(a.attend_with);
  cfg.validate();

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw las::IoError("cannot create " + a.out + ": " + ec.message());

  las::Rng rng(a.tc.seed);
  las::LasModel model = las::make_model(cfg, rng);
  std::cerr << "training " << las::param_count(cfg) << " parameters on " << train.size()
            << " utterances\n";
  auto result = las::train_loop(model, train, valid, a.tc,
                                (fs::path(a.out) / "checkpoint.las").string(),
                                (fs::path(a.out) / "metrics.tsv").string());
  las::write_stamp((fs::path(a.out) / "stamp.txt").string(), train_config_text(a, cfg), a.tc.seed);
  std::printf("best_epoch=%d best_valid_loss_per_char=%.6f\n", result.best_epoch,
              result.best_valid_loss);
}

struct DecodeArgs {
  std::string checkpoint, manifest, vocab, out;
  std::string lexicon, arpa;
  las::DecodeConfig dc;
  double unk_penalty = las::CharScorer::kDefaultUnkPenalty;
  bool greedy = false;
};

void run_decode(const DecodeArgs& a) {
  las::Vocabulary vocab = las::Vocabulary::load(a.vocab);
  las::LasModel model = las::load_checkpoint(a.checkpoint);
  if (model.config.vocab_size != vocab.size())
    throw las::VocabError("checkpoint expects " + std::to_string(model.config.vocab_size) +
                          " labels, vocabulary has " + std::to_string(vocab.size()));
  auto data = las::load_dataset(a.manifest, vocab);

  std::unique_ptr<las::WordNgram> lm;
  std::unique_ptr<las::CharScorer> scorer;
  if (!a.arpa.empty() != !a.lexicon.empty())
    throw las::ConfigError("--lexicon and --arpa must be given together");
  if (!a.arpa.empty()) {
    lm = std::make_unique<las::WordNgram>(las::WordNgram::load_arpa(a.arpa));
    las::Lexicon lex = las::Lexicon::load(a.lexicon);
    scorer = std::make_unique<las::CharScorer>(
        lex, *lm, [&](const std::string& ch) { return vocab.id_of(ch); }, a.unk_penalty);
  }

  std::ofstream out(a.out);
  if (!out) throw las::IoError("cannot write " + a.out);
  for (const auto& utt : data) {
    las::Hypothesis best;
    if (a.greedy) {
      best = las::greedy_decode(model, utt.feats, a.dc.max_len);
    } else {
      best = las::beam_search(model, utt.feats, a.dc, scorer.get()).front();
    }
    char nums[64];
    std::snprintf(nums, sizeof(nums), "%.6f\t%.6f", best.model_logprob, best.fused_cost);
    out << utt.id << '\t' << vocab.decode(best.chars) << '\t' << nums << '\n';
  }
  if (!out) throw las::IoError("write failed: " + a.out);
  std::ostringstream cfg;
  cfg << "checkpoint=" << a.checkpoint << "\nbeam=" << a.dc.beam << "\ntau=" << a.dc.tau
      << "\ngamma=" << a.dc.gamma << "\nmax_len=" << a.dc.max_len
      << "\ntemper_scores=" << a.dc.temper_scores << "\ngreedy=" << a.greedy
      << "\nlexicon=" << a.lexicon << "\narpa=" << a.arpa << "\nunk_penalty=" << a.unk_penalty << "\n";
  las::write_stamp(a.out + ".stamp", cfg.str(), 0);
  std::cerr << "decoded " << data.size() << " utterances -> " << a.out << "\n";
}

std::unordered_map<std::string, std::string> read_hyps(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw las::IoError("cannot read " + path);
  std::unordered_map<std::string, std::string> hyps;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    if (t1 == std::string::npos)
      throw las::InputError(path + ":" + std::to_string(lineno) + ": expected 'id<TAB>hyp...'");
    auto t2 = line.find('\t', t1 + 1);
    std::string hyp = t2 == std::string::npos ? line.substr(t1 + 1) : line.substr(t1 + 1, t2 - t1 - 1);
    hyps[line.substr(0, t1)] = hyp;
  }
  return hyps;
}

struct EvalArgs {
  std::string hyps, refs, vocab;
};

void run_eval(const EvalArgs& a) {
  las::Vocabulary vocab = las::Vocabulary::load(a.vocab);
  auto hyps = read_hyps(a.hyps);
  auto refs = las::load_manifest(a.refs);
  std::vector<std::vector<int>> h, r;
  for (const auto& e : refs) {
    auto it = hyps.find(e.id);
    if (it == hyps.end()) throw las::InputError("no hypothesis for utterance " + e.id);
    h.push_back(vocab.encode(it->second));
    r.push_back(vocab.encode(e.transcript));
  }
  auto result = las::evaluate_pairs(h, r, las::Vocabulary::kSos, las::Vocabulary::kEos);
  std::printf("cer=%.6f ser=%.6f edits=%ld ref_chars=%ld sentences=%d\n", result.cer, result.ser,
              result.edits, result.ref_chars, result.sentences);
}

struct SweepArgs {
  DecodeArgs base;
  std::vector<int> beams{1, 2, 4, 8, 16};
  std::string manifest, out;
};

void run_sweep(SweepArgs& a) {
  las::Vocabulary vocab = las::Vocabulary::load(a.base.vocab);
  las::LasModel model = las::load_checkpoint(a.base.checkpoint);
  auto data = las::load_dataset(a.manifest, vocab);
  std::unique_ptr<las::WordNgram> lm;
  std::unique_ptr<las::CharScorer> scorer;
  if (!a.base.arpa.empty()) {
    lm = std::make_unique<las::WordNgram>(las::WordNgram::load_arpa(a.base.arpa));
    las::Lexicon lex = las::Lexicon::load(a.base.lexicon);
    scorer = std::make_unique<las::CharScorer>(
        lex, *lm, [&](const std::string& ch) { return vocab.id_of(ch); }, a.base.unk_penalty);
  }
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw las::IoError("cannot write " + a.out);
    out = &file;
  }
  *out << "beam\tcer\tser\tmean_fused_cost\twall_seconds\n";
  for (int beam : a.beams) {
    las::DecodeConfig dc = a.base.dc;
    dc.beam = beam;
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<int>> h, r;
    double cost = 0;
    for (const auto& utt : data) {
      auto best = las::beam_search(model, utt.feats, dc, scorer.get()).front();
      h.push_back(best.chars);
      r.push_back(utt.targets);
      cost += best.fused_cost;
    }
    auto result = las::evaluate_pairs(h, r, model.config.sos_id, model.config.eos_id);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char row[160];
    std::snprintf(row, sizeof(row), "%d\t%.6f\t%.6f\t%.6f\t%.3f", beam, result.cer, result.ser,
                  cost / static_cast<double>(data.size()), wall);
    *out << row << "\n";
  }
}

void add_decode_flags(CLI::App* cmd, DecodeArgs& a) {
  cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
  cmd->add_option("--vocab", a.vocab, "vocabulary file")->required();
  cmd->add_option("--beam", a.dc.beam, "beam width");
  cmd->add_option("--tau", a.dc.tau, "softmax temperature");
  cmd->add_option("--gamma", a.dc.gamma, "language model weight");
  cmd->add_option("--max-len", a.dc.max_len, "length budget (0: twice the frame count)");
  cmd->add_flag("--temper-scores", a.dc.temper_scores, "divide accumulated scores by tau instead");
  cmd->add_option("--lexicon", a.lexicon, "lexicon for fusion");
  cmd->add_option("--arpa", a.arpa, "ARPA trigram for fusion");
  cmd->add_option("--unk-penalty", a.unk_penalty, "extra log-penalty per unknown character word");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"listen-attend-spell laboratory"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cgen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  cgen->add_option("--out", gen.out, "output directory")->required();
  cgen->add_option("--num-chars", gen.spec.num_chars, "character inventory size");
  cgen->add_option("--feat-dim", gen.spec.feat_dim, "feature dimension");
  cgen->add_option("--frames-per-char", gen.spec.frames_per_char, "frames per character");
  cgen->add_option("--frames-jitter", gen.spec.frames_jitter, "frame count jitter");
  cgen->add_option("--noise", gen.spec.noise, "feature noise stddev");
  cgen->add_option("--min-len", gen.spec.min_len, "minimum transcript length");
  cgen->add_option("--max-len", gen.spec.max_len, "maximum transcript length");
  cgen->add_option("--train-utts", gen.spec.train_utts, "training utterances");
  cgen->add_option("--valid-utts", gen.spec.valid_utts, "validation utterances");
  cgen->add_option("--test-utts", gen.spec.test_utts, "test utterances");
  cgen->add_option("--num-speakers", gen.spec.num_speakers, "speakers");
  cgen->add_option("--num-words", gen.spec.num_words, "lexicon size");
  cgen->add_option("--max-word-len", gen.spec.max_word_len, "maximum word length");
  cgen->add_option("--lm-sentences", gen.spec.lm_sentences, "extra text-only sentences");
  cgen->add_option("--seed", gen.spec.seed, "random seed");
  cgen->add_flag("!--no-normalize", gen.spec.normalize, "skip per-speaker normalization");
  cgen->callback([&gen] { run_gen(gen); });

  LmArgs lm;
  auto* clm = app.add_subcommand("build-lm", "estimate the word trigram");
  clm->add_option("--corpus", lm.corpus, "one sentence of words per line")->required();
  clm->add_option("--arpa", lm.arpa, "output ARPA file")->required();
  clm->callback([&lm] { run_build_lm(lm); });

  TrainArgs tr;
  auto* ctr = app.add_subcommand("train", "train a model");
  ctr->add_option("--config", tr.config, "key = value file; command line flags win");
  ctr->add_option("--data", tr.data, "directory from gen-data")->required();
  ctr->add_option("--out", tr.out, "output directory")->required();
  ctr->add_option("--attention", tr.attention, "content|location|smoothed");
  ctr->add_option("--attend-with", tr.attend_with, "new_state|prev_state");
  ctr->add_option("--encoder-layers", tr.encoder_layers, "BLSTM layers");
  ctr->add_option("--encoder-hidden", tr.encoder_hidden, "BLSTM units per direction");
  ctr->add_option("--decoder-hidden", tr.decoder_hidden, "decoder LSTM units");
  ctr->add_option("--embed-dim", tr.embed_dim, "character embedding size");
  ctr->add_option("--attn-dim", tr.attn_dim, "attention hidden size");
  ctr->add_option("--frame-skip", tr.frame_skip, "training-time frame subsampling");
  ctr->add_option("--attn-filters", tr.attn_filters, "location attention filters");
  ctr->add_option("--attn-filter-width", tr.attn_filter_width, "location filter width (odd)");
  ctr->add_option("--epochs", tr.tc.max_epochs, "maximum epochs");
  ctr->add_option("--batch-size", tr.tc.batch_size, "utterances per batch");
  ctr->add_option("--lr", tr.tc.lr_initial, "initial learning rate");
  ctr->add_option("--lr-decayed", tr.tc.lr_decayed, "learning rate after the decay");
  ctr->add_option("--patience", tr.tc.patience, "non-improving epochs before the decay");
  ctr->add_option("--clip", tr.tc.clip_norm, "gradient norm clip");
  ctr->add_option("--l2", tr.tc.l2, "L2 weight decay");
  ctr->add_option("--weight-noise", tr.tc.weight_noise_sigma, "weight noise stddev");
  ctr->add_option("--noise-start-epoch", tr.tc.weight_noise_start_epoch, "first epoch with noise");
  ctr->add_option("--seed", tr.tc.seed, "random seed");
  ctr->callback([&tr, ctr] {
    if (!tr.config.empty()) apply_config_file(ctr, tr);
    run_train(tr);
  });

  DecodeArgs de;
  auto* cde = app.add_subcommand("decode", "decode a manifest");
  add_decode_flags(cde, de);
  cde->add_option("--manifest", de.manifest, "utterances to decode")->required();
  cde->add_option("--out", de.out, "hypothesis TSV")->required();
  cde->add_flag("--greedy", de.greedy, "greedy decoding instead of beam search");
  cde->callback([&de] { run_decode(de); });

  EvalArgs ev;
  auto* cev = app.add_subcommand("eval", "score hypotheses against references");
  cev->add_option("--hyps", ev.hyps, "decode output TSV")->required();
  cev->add_option("--refs", ev.refs, "reference manifest")->required();
  cev->add_option("--vocab", ev.vocab, "vocabulary file")->required();
  cev->callback([&ev] { run_eval(ev); });

  SweepArgs sw;
  auto* csw = app.add_subcommand("sweep", "report error rates across beam widths");
  add_decode_flags(csw, sw.base);
  csw->add_option("--manifest", sw.manifest, "utterances to decode")->required();
  csw->add_option("--beams", sw.beams, "beam widths to try")->delimiter(',');
  csw->add_option("--out", sw.out, "output TSV (default stdout)");
  csw->callback([&sw] { run_sweep(sw); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const las::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return las::exit_code_for(e);
  }
  return 0;
}
