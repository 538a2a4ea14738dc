#include "las/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace las {

void TrainConfig::validate() const {
  if (lr_initial <= 0 || lr_decayed <= 0) throw ConfigError("TrainConfig: learning rates must be positive");
  if (clip_norm <= 0) throw ConfigError("TrainConfig: clip_norm must be positive");
  if (l2 < 0) throw ConfigError("TrainConfig: l2 must be non-negative");
  if (weight_noise_sigma < 0) throw ConfigError("TrainConfig: weight_noise_sigma must be non-negative");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("TrainConfig: max_epochs must be at least 1");
  if (patience < 1) throw ConfigError("TrainConfig: patience must be at least 1");
}

TensorPtr xent_loss(Graph& g, const std::vector<TensorPtr>& step_log_probs,
                    const std::vector<int>& y) {
  if (step_log_probs.size() != y.size())
    throw InputError("xent_loss: " + std::to_string(step_log_probs.size()) + " log-probs for " +
                     std::to_string(y.size()) + " targets");
  if (y.empty()) throw InputError("xent_loss: empty target sequence");
  TensorPtr total = step_log_probs.size() == 1 ? step_log_probs[0]
                                               : g.sum(g.concat_rows(step_log_probs));
  return g.scale(total, -1);
}

double clip_gradients(const std::vector<TensorPtr>& params, double max_norm) {
  if (max_norm <= 0) throw ConfigError("clip_gradients: max_norm must be positive");
  double sq = 0;
  for (const auto& p : params)
    for (Scalar gv : p->grad) sq += static_cast<double>(gv) * gv;
  double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("clip_gradients: non-finite gradient norm");
  if (norm > max_norm) {
    double f = max_norm / norm;
    for (const auto& p : params)
      for (Scalar& gv : p->grad) gv = static_cast<Scalar>(gv * f);
  }
  return norm;
}

std::vector<TensorPtr> add_weight_noise(const std::vector<TensorPtr>& params, double sigma,
                                        Rng& rng) {
  if (sigma < 0) throw ConfigError("add_weight_noise: sigma must be non-negative");
  std::vector<TensorPtr> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    Tensor t(p->shape());
    std::copy(p->data(), p->data() + p->size(), t.data());
    if (sigma != 0)
      for (int i = 0; i < t.size(); ++i) t[i] += static_cast<Scalar>(sigma * rng.gaussian());
    out.push_back(make_param(std::move(t)));
  }
  return out;
}

LasModel noisy_clone(const LasModel& model, double sigma, Rng& rng) {
  LasModel copy = clone_model(model);
  if (sigma != 0)
    for (const auto& p : copy.params())
      for (int i = 0; i < p->size(); ++i) (*p)[i] += static_cast<Scalar>(sigma * rng.gaussian());
  return copy;
}

void AdamState::init(const std::vector<TensorPtr>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p->shape());
    v.emplace_back(p->shape());
  }
  step = 0;
}

void adam_step(AdamState& state, const std::vector<TensorPtr>& params) {
  if (state.m.size() != params.size())
    throw ConfigError("adam_step: state tracks " + std::to_string(state.m.size()) +
                      " tensors, got " + std::to_string(params.size()));
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.grad.empty()) p.ensure_grad();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (int e = 0; e < p.size(); ++e) {
      double gv = p.grad[e];
      double me = state.beta1 * m[e] + (1.0 - state.beta1) * gv;
      double ve = state.beta2 * v[e] + (1.0 - state.beta2) * gv * gv;
      m[e] = static_cast<Scalar>(me);
      v[e] = static_cast<Scalar>(ve);
      p[e] -= static_cast<Scalar>(state.lr * (me / bc1) / (std::sqrt(ve / bc2) + state.eps));
    }
  }
}

std::string metrics_line(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\t%.9g\t%.3f", m.epoch, m.train_loss_per_char,
                m.valid_loss_per_char, m.lr, m.wall_seconds);
  return buf;
}

namespace {

std::vector<int> with_eos(const Utterance& utt, int eos_id) {
  std::vector<int> y = utt.targets;
  y.push_back(eos_id);
  return y;
}

bool is_bias_name(const std::string& name) {
  auto ends_with = [&](const char* s) {
    std::string suf(s);
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  return ends_with(".bias") || ends_with(".b");
}

}  // namespace

double dataset_loss_per_char(const LasModel& model, const std::vector<Utterance>& data,
                             ListenMode mode) {
  if (data.empty()) throw InputError("dataset_loss_per_char: empty dataset");
  double total = 0;
  long chars = 0;
  for (const auto& utt : data) {
    std::vector<int> y = with_eos(utt, model.config.eos_id);
    Graph g;
    for (const auto& lp : forward_teacher_forced(g, model, utt.feats, y, mode))
      total -= (*lp)[0];
    chars += static_cast<long>(y.size());
  }
  return total / static_cast<double>(chars);
}

TrainResult train_loop(LasModel& model, const std::vector<Utterance>& train,
                       const std::vector<Utterance>& valid, const TrainConfig& config,
                       const std::string& checkpoint_path, const std::string& metrics_path) {
  config.validate();
  if (train.empty()) throw InputError("train_loop: empty training set");
  if (valid.empty()) throw InputError("train_loop: empty validation set");

  Rng rng(config.seed);
  std::vector<TensorPtr> params = model.params();
  std::vector<std::string> names;
  for (const auto& [name, p] : model.named_params()) names.push_back(name);

  AdamState adam;
  adam.init(params);
  adam.beta1 = config.adam_beta1;
  adam.beta2 = config.adam_beta2;
  adam.eps = config.adam_eps;

  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path);
    if (!metrics) throw IoError("cannot write " + metrics_path);
    metrics << "epoch\ttrain_loss_per_char\tvalid_loss_per_char\tlr\twall_seconds\n";
  }

  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  result.best_epoch = 0;

  double lr = config.lr_initial;
  bool decayed = false;
  int stale = 0;
  double last_finite_loss = std::numeric_limits<double>::quiet_NaN();

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();

    // Shuffle, then bucket by frame count so batch members have similar
    // lengths; the stable sort keeps the shuffle's order within a length.
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, static_cast<int>(i))]);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return train[static_cast<size_t>(a)].feats.rows() < train[static_cast<size_t>(b)].feats.rows();
    });
    std::vector<std::pair<int, int>> batches;
    for (int b0 = 0; b0 < static_cast<int>(order.size()); b0 += config.batch_size)
      batches.emplace_back(b0, std::min(b0 + config.batch_size, static_cast<int>(order.size())));
    for (size_t i = batches.size() - 1; i > 0; --i)
      std::swap(batches[i], batches[rng.uniform_int(0, static_cast<int>(i))]);

    const bool noise_on =
        config.weight_noise_sigma > 0 && epoch >= config.weight_noise_start_epoch;

    double epoch_loss = 0;
    long epoch_chars = 0;
    for (const auto& [b0, b1] : batches) {
      for (const auto& p : params)
        if (!p->grad.empty()) p->zero_grad();

      // Weight noise perturbs a throwaway copy; the optimizer only ever
      // touches the clean parameters.
      LasModel pass_model =
          noise_on ? noisy_clone(model, config.weight_noise_sigma, rng) : model;

      Graph g;
      std::vector<TensorPtr> utt_losses;
      long batch_chars = 0;
      for (int k = b0; k < b1; ++k) {
        const Utterance& utt = train[static_cast<size_t>(order[static_cast<size_t>(k)])];
        std::vector<int> y = with_eos(utt, model.config.eos_id);
        auto logps = forward_teacher_forced(g, pass_model, utt.feats, y);
        utt_losses.push_back(xent_loss(g, logps, y));
        batch_chars += static_cast<long>(y.size());
      }
      TensorPtr total =
          utt_losses.size() == 1 ? utt_losses[0] : g.sum(g.concat_rows(utt_losses));
      TensorPtr loss = g.scale(total, static_cast<Scalar>(1.0 / static_cast<double>(batch_chars)));
      double loss_v = (*loss)[0];
      if (!std::isfinite(loss_v)) {
        char diag[160];
        std::snprintf(diag, sizeof(diag),
                      "training diverged at epoch %d: loss=%g, last finite loss=%g", epoch,
                      loss_v, last_finite_loss);
        throw NumericError(diag);
      }
      last_finite_loss = loss_v;
      epoch_loss += loss_v * static_cast<double>(batch_chars);
      epoch_chars += batch_chars;

      g.backward(loss);
      if (noise_on) {
        std::vector<TensorPtr> pass_params = pass_model.params();
        for (size_t i = 0; i < params.size(); ++i) {
          params[i]->ensure_grad();
          if (pass_params[i]->grad.empty())
            params[i]->zero_grad();
          else
            params[i]->grad = pass_params[i]->grad;
        }
      }
      if (config.l2 > 0) {
        for (size_t i = 0; i < params.size(); ++i) {
          if (!config.decay_biases && is_bias_name(names[i])) continue;
          Tensor& p = *params[i];
          p.ensure_grad();
          for (int e = 0; e < p.size(); ++e)
            p.grad[e] += static_cast<Scalar>(config.l2) * p[e];
        }
      }
      try {
        clip_gradients(params, config.clip_norm);
      } catch (const NumericError&) {
        continue;  // skip the update, parameters stay at their last good values
      }
      adam.lr = lr;
      adam_step(adam, params);
      for (const auto& p : params)
        if (!p->all_finite())
          throw NumericError("training produced non-finite parameters at epoch " +
                             std::to_string(epoch));
    }

    double valid_loss = dataset_loss_per_char(model, valid);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss_per_char = epoch_loss / static_cast<double>(epoch_chars);
    em.valid_loss_per_char = valid_loss;
    em.lr = lr;
    em.wall_seconds = wall;
    result.epochs.push_back(em);
    if (metrics.is_open()) metrics << metrics_line(em) << "\n" << std::flush;

    if (valid_loss < result.best_valid_loss) {
      result.best_valid_loss = valid_loss;
      result.best_epoch = epoch;
      result.best_model = clone_model(model);
      if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
      stale = 0;
    } else {
      ++stale;
      if (!decayed && stale >= config.patience) {
        lr = config.lr_decayed;  // the schedule decays exactly once
        decayed = true;
        stale = 0;
      }
    }
  }
  return result;
}

}  // namespace las
