#pragma once

#include <optional>
#include <string>
#include <vector>

#include "las/model.h"
#include "las/rng.h"
#include "las/tensor.h"

namespace las {

struct Utterance {
  std::string id;
  Tensor feats;              // [T x d]
  std::vector<int> targets;  // char ids, no <sos>/<eos>
};

// Published recipe: ADAM at 1e-3 decayed once to 1e-4, gradient norm clipped
// to 1, L2 weight decay 1e-5, Gaussian weight noise.
struct TrainConfig {
  double lr_initial = 1e-3;
  double lr_decayed = 1e-4;
  double clip_norm = 1.0;
  double l2 = 1e-5;
  double weight_noise_sigma = 0.01;
  int weight_noise_start_epoch = 2;
  int batch_size = 16;
  int max_epochs = 50;
  int patience = 3;  // non-improving epochs before the one-time lr decay
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool decay_biases = true;
  uint64_t seed = 1;

  void validate() const;
};

// Negative sum of per-step gold log-probabilities (the <eos> step included).
// step_log_probs are the scalars emitted by forward_teacher_forced; y is the
// matching gold sequence and must have the same length.
TensorPtr xent_loss(Graph& g, const std::vector<TensorPtr>& step_log_probs,
                    const std::vector<int>& y);

// If the global L2 norm of the parameter gradients exceeds max_norm, scales
// every gradient by max_norm / norm. Returns the pre-clip norm. Non-finite
// gradients raise NumericError (the step must be aborted, parameters kept).
double clip_gradients(const std::vector<TensorPtr>& params, double max_norm);

// params + N(0, sigma^2) element-wise, as fresh tensors. Used for the
// forward/backward pass only; the optimizer updates the clean parameters.
std::vector<TensorPtr> add_weight_noise(const std::vector<TensorPtr>& params, double sigma,
                                        Rng& rng);
LasModel noisy_clone(const LasModel& model, double sigma, Rng& rng);

struct AdamState {
  std::vector<Tensor> m;  // first moments, shapes mirror params
  std::vector<Tensor> v;  // second moments
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init(const std::vector<TensorPtr>& params);
};

// Standard bias-corrected update consuming params[i]->grad.
void adam_step(AdamState& state, const std::vector<TensorPtr>& params);

struct EpochMetrics {
  int epoch = 0;
  double train_loss_per_char = 0;
  double valid_loss_per_char = 0;
  double lr = 0;
  double wall_seconds = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
  double best_valid_loss = 0;
  LasModel best_model;
};

std::string metrics_line(const EpochMetrics& m);  // tab-separated

// Mean per-character teacher-forced cross entropy over a dataset.
double dataset_loss_per_char(const LasModel& model, const std::vector<Utterance>& data,
                             ListenMode mode = ListenMode::train);

// Epoch loop: shuffle, length-bucketed batches, weight-noise forward, clip,
// adam; validation after each epoch; one lr decay after `patience`
// non-improving epochs; best-validation checkpointing.
// checkpoint_path/metrics_path empty -> keep results in memory only.
TrainResult train_loop(LasModel& model, const std::vector<Utterance>& train,
                       const std::vector<Utterance>& valid, const TrainConfig& config,
                       const std::string& checkpoint_path = "",
                       const std::string& metrics_path = "");

}  // namespace las
