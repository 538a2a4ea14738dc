#include "las/model.h"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "las/error.h"

namespace las {

AttendWith attend_with_from(const std::string& name) {
  if (name == "new_state") return AttendWith::new_state;
  if (name == "prev_state") return AttendWith::prev_state;
  throw ConfigError("unknown attend_with '" + name + "' (valid: new_state, prev_state)");
}

std::string to_string(AttendWith a) {
  return a == AttendWith::new_state ? "new_state" : "prev_state";
}

void LasConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(feat_dim, "feat_dim");
  positive(encoder_layers, "encoder_layers");
  positive(encoder_hidden, "encoder_hidden");
  positive(decoder_hidden, "decoder_hidden");
  positive(vocab_size, "vocab_size");
  positive(embed_dim, "embed_dim");
  positive(attn_dim, "attn_dim");
  positive(attn_filters, "attn_filters");
  positive(attn_filter_width, "attn_filter_width");
  if (frame_skip < 1) throw ConfigError("frame_skip must be >= 1, got " + std::to_string(frame_skip));
  if (attn_filter_width % 2 == 0) {
    throw ConfigError("attn_filter_width must be odd, got " + std::to_string(attn_filter_width));
  }
  if (sos_id < 0 || sos_id >= vocab_size || eos_id < 0 || eos_id >= vocab_size) {
    throw ConfigError("sos/eos ids must lie in the vocabulary");
  }
}

LasConfig LasConfig::reference_scale() {
  LasConfig c;
  c.feat_dim = 240;  // 80 filterbanks with delta and delta-delta
  c.encoder_layers = 3;
  c.encoder_hidden = 256;
  c.decoder_hidden = 256;
  c.vocab_size = 6925;
  c.embed_dim = 64;
  c.attn_dim = 256;
  return c;
}

std::vector<std::pair<std::string, TensorPtr>> LasModel::named_params() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  for (size_t l = 0; l < listener.layers.size(); ++l) {
    const auto& layer = listener.layers[l];
    const std::string base = "listener.l" + std::to_string(l);
    out.emplace_back(base + ".fwd.w_x", layer.fwd.w_x);
    out.emplace_back(base + ".fwd.w_h", layer.fwd.w_h);
    out.emplace_back(base + ".fwd.bias", layer.fwd.bias);
    out.emplace_back(base + ".bwd.w_x", layer.bwd.w_x);
    out.emplace_back(base + ".bwd.w_h", layer.bwd.w_h);
    out.emplace_back(base + ".bwd.bias", layer.bwd.bias);
  }
  out.emplace_back("embedding.w", embedding.weights);
  out.emplace_back("attn.w", scorer.w);
  out.emplace_back("attn.W", scorer.W);
  out.emplace_back("attn.V", scorer.V);
  out.emplace_back("attn.b", scorer.b);
  if (scorer.variant == AttentionVariant::location) {
    out.emplace_back("attn.U", scorer.U);
    out.emplace_back("attn.F", scorer.F);
  }
  out.emplace_back("speller.w_x", speller.w_x);
  out.emplace_back("speller.w_h", speller.w_h);
  out.emplace_back("speller.bias", speller.bias);
  out.emplace_back("proj.w", proj_w);
  out.emplace_back("proj.b", proj_b);
  return out;
}

std::vector<TensorPtr> LasModel::params() const {
  std::vector<TensorPtr> out;
  for (auto& [name, p] : named_params()) out.push_back(p);
  return out;
}

LasModel make_model(const LasConfig& config, Rng& rng) {
  config.validate();
  LasModel m;
  m.config = config;
  m.listener = make_blstm(config.feat_dim, config.encoder_hidden, config.encoder_layers, rng);
  m.embedding.weights = make_param(glorot_init({config.vocab_size, config.embed_dim}, rng));
  m.scorer = make_attention_scorer(config.attention, config.attn_dim, config.decoder_hidden,
                                   config.encoder_dim(), config.attn_filters,
                                   config.attn_filter_width, rng);
  m.speller = make_lstm_cell(config.embed_dim + config.encoder_dim(), config.decoder_hidden, rng);
  m.proj_w = make_param(
      glorot_init({config.decoder_hidden + config.encoder_dim(), config.vocab_size}, rng));
  m.proj_b = make_param(Tensor({config.vocab_size}));
  return m;
}

long param_count(const LasConfig& config) {
  config.validate();
  const long H = config.encoder_hidden, s = config.decoder_hidden, n = config.vocab_size;
  const long m = config.embed_dim, a = config.attn_dim, d = config.feat_dim;
  long total = 0;
  long in = d;
  for (int l = 0; l < config.encoder_layers; ++l) {
    total += 2 * (in * 4 * H + H * 4 * H + 4 * H);  // both directions
    in = 2 * H;
  }
  total += n * m;                               // embedding
  total += a + a * s + a * 2 * H + a;           // attention w, W, V, b
  if (config.attention == AttentionVariant::location) {
    total += a * config.attn_filters + static_cast<long>(config.attn_filters) * config.attn_filter_width;
  }
  total += (m + 2 * H) * 4 * s + s * 4 * s + 4 * s;  // speller
  total += (s + 2 * H) * n + n;                      // projection
  return total;
}

LasModel clone_model(const LasModel& model) {
  Rng dummy(0);
  LasModel copy = make_model(model.config, dummy);
  auto src = model.named_params();
  auto dst = copy.named_params();
  for (size_t i = 0; i < src.size(); ++i) {
    *dst[i].second = *src[i].second;
    dst[i].second->requires_grad = true;
  }
  return copy;
}

Tensor skip_frames(const Tensor& feats, int skip) {
  if (skip < 1) throw ConfigError("frame skip must be >= 1, got " + std::to_string(skip));
  if (skip == 1) return feats;
  const int T = feats.rows(), d = feats.cols();
  const int kept = (T + skip - 1) / skip;
  Tensor out({kept, d});
  for (int i = 0; i < kept; ++i) {
    const int t = i * skip;
    std::copy(feats.data() + t * d, feats.data() + (t + 1) * d, out.data() + i * d);
  }
  return out;
}

TensorPtr listen(Graph& g, const LasModel& model, const Tensor& feats, ListenMode mode) {
  if (feats.rank() != 2 || feats.rows() == 0) {
    throw InputError("listen: expected non-empty [T x d] features, got " +
                     shape_str(feats.shape()));
  }
  if (feats.cols() != model.config.feat_dim) {
    throw DimensionError("listen: feature dim " + std::to_string(feats.cols()) +
                         " vs configured " + std::to_string(model.config.feat_dim));
  }
  Tensor x = mode == ListenMode::train ? skip_frames(feats, model.config.frame_skip) : feats;
  return blstm_forward(g, model.listener, g.input(std::move(x)));
}

DecodeState initial_decode_state(Graph& g, const LasModel& model, int frames) {
  if (frames <= 0) throw InputError("initial_decode_state: no encoder frames");
  DecodeState st;
  st.s = lstm_zero_state(g, model.speller);
  st.context = g.input(Tensor({1, model.config.encoder_dim()}));
  st.alpha = g.input(Tensor({frames}, Scalar(1) / static_cast<Scalar>(frames)));
  return st;
}

StepResult decode_step(Graph& g, const LasModel& model, const TensorPtr& h, int y_prev,
                       const DecodeState& prev) {
  const int n = model.config.vocab_size;
  if (y_prev < 0 || y_prev >= n) {
    throw VocabError("decode_step: id " + std::to_string(y_prev) + " outside vocabulary of size " +
                     std::to_string(n));
  }
  auto emb = embed(g, model.embedding, y_prev);
  auto inp = g.concat_cols({emb, prev.context});
  LstmState s_i = lstm_step(g, model.speller, inp, prev.s);
  auto attend_state = model.config.attend_with == AttendWith::new_state ? s_i.h : prev.s.h;
  auto e = attention_score(g, model.scorer, attend_state, h, prev.alpha);
  auto alpha = attention_normalize(g, e, normalize_mode_for(model.scorer.variant));
  auto c = attention_context(g, alpha, h);
  auto logits = g.add_bias(g.matmul(g.concat_cols({s_i.h, c}), model.proj_w), model.proj_b);
  return {{s_i, c, alpha}, logits};
}

std::vector<TensorPtr> forward_teacher_forced(Graph& g, const LasModel& model,
                                              const Tensor& feats, const std::vector<int>& y,
                                              ListenMode mode) {
  if (y.empty()) throw InputError("forward_teacher_forced: empty target sequence");
  for (int id : y) {
    if (id < 0 || id >= model.config.vocab_size) {
      throw VocabError("forward_teacher_forced: id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(model.config.vocab_size));
    }
  }
  auto h = listen(g, model, feats, mode);
  DecodeState st = initial_decode_state(g, model, h->rows());
  int y_prev = model.config.sos_id;
  std::vector<TensorPtr> logps;
  logps.reserve(y.size());
  for (int target : y) {
    StepResult step = decode_step(g, model, h, y_prev, st);
    auto lp = g.log_softmax(step.logits);
    logps.push_back(g.reshape(g.slice_cols(lp, target, target + 1), {1}));
    st = step.state;
    y_prev = target;
  }
  return logps;
}

// ---------------------------------------------------------------------------
// Checkpoint io

namespace {

constexpr char kMagic[4] = {'L', 'A', 'S', 'C'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw CheckpointError("checkpoint truncated while reading u32");
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  static_assert(sizeof(u) == sizeof(v));
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw CheckpointError("checkpoint truncated while reading f64");
  }
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void put_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

float get_f32(std::istream& is) {
  uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

std::string config_text(const LasConfig& c) {
  std::ostringstream os;
  os << "feat_dim=" << c.feat_dim << "\n"
     << "encoder_layers=" << c.encoder_layers << "\n"
     << "encoder_hidden=" << c.encoder_hidden << "\n"
     << "decoder_hidden=" << c.decoder_hidden << "\n"
     << "vocab_size=" << c.vocab_size << "\n"
     << "embed_dim=" << c.embed_dim << "\n"
     << "attn_dim=" << c.attn_dim << "\n"
     << "attention=" << to_string(c.attention) << "\n"
     << "attn_filters=" << c.attn_filters << "\n"
     << "attn_filter_width=" << c.attn_filter_width << "\n"
     << "frame_skip=" << c.frame_skip << "\n"
     << "attend_with=" << to_string(c.attend_with) << "\n"
     << "sos_id=" << c.sos_id << "\n"
     << "eos_id=" << c.eos_id << "\n";
  return os.str();
}

LasConfig config_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto want = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError("checkpoint config missing key '" + key + "'");
    return it->second;
  };
  LasConfig c;
  c.feat_dim = std::stoi(want("feat_dim"));
  c.encoder_layers = std::stoi(want("encoder_layers"));
  c.encoder_hidden = std::stoi(want("encoder_hidden"));
  c.decoder_hidden = std::stoi(want("decoder_hidden"));
  c.vocab_size = std::stoi(want("vocab_size"));
  c.embed_dim = std::stoi(want("embed_dim"));
  c.attn_dim = std::stoi(want("attn_dim"));
  c.attention = attention_variant_from(want("attention"));
  c.attn_filters = std::stoi(want("attn_filters"));
  c.attn_filter_width = std::stoi(want("attn_filter_width"));
  c.frame_skip = std::stoi(want("frame_skip"));
  c.attend_with = attend_with_from(want("attend_with"));
  c.sos_id = std::stoi(want("sos_id"));
  c.eos_id = std::stoi(want("eos_id"));
  return c;
}

}  // namespace

void save_checkpoint(const LasModel& model, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open '" + tmp + "' for writing");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    const std::string cfg = config_text(model.config);
    put_u32(os, static_cast<uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    auto named = model.named_params();
    put_u32(os, static_cast<uint32_t>(named.size()));
    for (const auto& [name, p] : named) {
      put_u32(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      os.put(static_cast<char>(sizeof(Scalar) == 8 ? 64 : 32));
      os.put(static_cast<char>(p->rank()));
      for (int e : p->shape()) put_u32(os, static_cast<uint32_t>(e));
      for (int i = 0; i < p->size(); ++i) {
        if (sizeof(Scalar) == 8) {
          put_f64(os, static_cast<double>((*p)[i]));
        } else {
          put_f32(os, static_cast<float>((*p)[i]));
        }
      }
    }
    if (!os) throw IoError("write failure on '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

LasModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("'" + path + "' is not a LASC checkpoint");
  }
  const uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw CheckpointError("checkpoint version mismatch: expected " + std::to_string(kVersion) +
                          ", found " + std::to_string(version));
  }
  const uint32_t cfg_len = get_u32(is);
  std::string cfg(cfg_len, '\0');
  if (!is.read(cfg.data(), cfg_len)) throw CheckpointError("checkpoint truncated in config block");
  const LasConfig config = config_from_text(cfg);
  config.validate();

  // Parse every blob before touching any model structure: a truncated file
  // must not yield a partial model.
  const uint32_t num_blobs = get_u32(is);
  std::map<std::string, Tensor> blobs;
  for (uint32_t bi = 0; bi < num_blobs; ++bi) {
    const uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw CheckpointError("checkpoint truncated in blob name");
    const int dtype = is.get();
    const int rank = is.get();
    if (dtype == EOF || rank == EOF) throw CheckpointError("checkpoint truncated in blob header");
    if (dtype != 32 && dtype != 64) {
      throw CheckpointError("blob '" + name + "': bad dtype flag " + std::to_string(dtype));
    }
    std::vector<int> shape(rank);
    int64_t count = 1;
    for (int r = 0; r < rank; ++r) {
      shape[r] = static_cast<int>(get_u32(is));
      count *= shape[r];
    }
    Tensor t(shape);
    for (int64_t i = 0; i < count; ++i) {
      t[static_cast<int>(i)] =
          dtype == 64 ? static_cast<Scalar>(get_f64(is)) : static_cast<Scalar>(get_f32(is));
    }
    blobs.emplace(name, std::move(t));
  }

  Rng dummy(0);
  LasModel model = make_model(config, dummy);
  for (auto& [name, p] : model.named_params()) {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw CheckpointError("checkpoint missing parameter '" + name + "'");
    if (it->second.shape() != p->shape()) {
      throw CheckpointError("parameter '" + name + "': expected shape " + shape_str(p->shape()) +
                            ", found " + shape_str(it->second.shape()));
    }
    std::copy(it->second.data(), it->second.data() + it->second.size(), p->data());
  }
  return model;
}

void check_config_compatible(const LasConfig& expected, const LasConfig& found) {
  auto diff = [](const char* field, auto a, auto b) {
    std::ostringstream os;
    os << "checkpoint config mismatch on " << field << ": expected " << a << ", found " << b;
    return CheckpointError(os.str());
  };
  if (expected.feat_dim != found.feat_dim) throw diff("feat_dim", expected.feat_dim, found.feat_dim);
  if (expected.vocab_size != found.vocab_size)
    throw diff("vocab_size", expected.vocab_size, found.vocab_size);
  if (expected.encoder_layers != found.encoder_layers)
    throw diff("encoder_layers", expected.encoder_layers, found.encoder_layers);
  if (expected.encoder_hidden != found.encoder_hidden)
    throw diff("encoder_hidden", expected.encoder_hidden, found.encoder_hidden);
  if (expected.decoder_hidden != found.decoder_hidden)
    throw diff("decoder_hidden", expected.decoder_hidden, found.decoder_hidden);
  if (expected.embed_dim != found.embed_dim)
    throw diff("embed_dim", expected.embed_dim, found.embed_dim);
  if (expected.attn_dim != found.attn_dim) throw diff("attn_dim", expected.attn_dim, found.attn_dim);
  if (expected.attention != found.attention)
    throw diff("attention", to_string(expected.attention), to_string(found.attention));
  if (expected.sos_id != found.sos_id) throw diff("sos_id", expected.sos_id, found.sos_id);
  if (expected.eos_id != found.eos_id) throw diff("eos_id", expected.eos_id, found.eos_id);
}

}  // namespace las
