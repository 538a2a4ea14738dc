#pragma once

#include <string>
#include <utility>
#include <vector>

#include "las/attention.h"
#include "las/layers.h"
#include "las/rng.h"
#include "las/tensor.h"

namespace las {

// Which decoder state the attention scorer consumes: the state produced this
// step or the one carried in from the previous step. Both are supported;
// new_state is the default.
enum class AttendWith { new_state, prev_state };

AttendWith attend_with_from(const std::string& name);
std::string to_string(AttendWith a);

struct LasConfig {
  int feat_dim = 8;
  int encoder_layers = 1;
  int encoder_hidden = 32;  // per direction
  int decoder_hidden = 32;
  int vocab_size = 23;
  int embed_dim = 16;
  int attn_dim = 32;
  AttentionVariant attention = AttentionVariant::content;
  int attn_filters = 4;
  int attn_filter_width = 5;
  int frame_skip = 2;  // training-time subsampling; decode always uses all frames
  AttendWith attend_with = AttendWith::new_state;
  int sos_id = 1;
  int eos_id = 2;

  int encoder_dim() const { return 2 * encoder_hidden; }
  void validate() const;

  // Reference configuration at the published scale: 80x3 filterbank features,
  // 3x256-per-direction encoder, 256-unit decoder, 6925 output labels.
  static LasConfig reference_scale();
};

struct LasModel {
  LasConfig config;
  Blstm listener;
  EmbeddingTable embedding;
  AttentionScorer scorer;
  LstmCell speller;
  TensorPtr proj_w;  // [(s + 2H) x n]
  TensorPtr proj_b;  // [n]

  std::vector<std::pair<std::string, TensorPtr>> named_params() const;
  std::vector<TensorPtr> params() const;
};

LasModel make_model(const LasConfig& config, Rng& rng);
long param_count(const LasConfig& config);
// Deep copy: fresh tensors, same values.
LasModel clone_model(const LasModel& model);

enum class ListenMode { train, decode };

// Keep frames 0, skip, 2*skip, ... ; length becomes ceil(T / skip).
Tensor skip_frames(const Tensor& feats, int skip);

// h = Listen(x). Train mode subsamples the input frames by config.frame_skip
// before the BLSTM; decode mode feeds every frame.
TensorPtr listen(Graph& g, const LasModel& model, const Tensor& feats, ListenMode mode);

struct DecodeState {
  LstmState s;
  TensorPtr context;  // [1 x 2H]
  TensorPtr alpha;    // [T]
};

struct StepResult {
  DecodeState state;
  TensorPtr logits;  // [1 x n]
};

// First step: y_prev = <sos>, zero context and LSTM state, uniform alignment.
DecodeState initial_decode_state(Graph& g, const LasModel& model, int frames);

StepResult decode_step(Graph& g, const LasModel& model, const TensorPtr& h, int y_prev,
                       const DecodeState& prev);

// Teacher forcing over the gold sequence y (which ends with <eos>); returns
// log p(y_i | x, y_<i) per step as scalar nodes.
std::vector<TensorPtr> forward_teacher_forced(Graph& g, const LasModel& model,
                                              const Tensor& feats, const std::vector<int>& y,
                                              ListenMode mode = ListenMode::train);

// Binary checkpoint: magic "LASC", version, config text, named parameter blobs
// (32- or 64-bit little-endian row-major data).
void save_checkpoint(const LasModel& model, const std::string& path);
LasModel load_checkpoint(const std::string& path);
// Throws CheckpointError naming the first differing field.
void check_config_compatible(const LasConfig& expected, const LasConfig& found);

}  // namespace las
