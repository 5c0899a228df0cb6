#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "tpt/checkpoint.hpp"
#include "tpt/data.hpp"
#include "tpt/model.hpp"

namespace tpt::train {

struct OptimizerConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int warmup_steps = 100;
  int total_steps = 1000;
  double grad_clip = 1.0;     // <= 0 disables clipping
  double min_lr_ratio = 0.0;  // cosine floor as a fraction of lr
  bool decay_1d = false;      // apply weight decay to norm gains, thetas, horn

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

nlohmann::json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_config_from_json(const nlohmann::json& j);

/// Linear warmup from 0 to lr over warmup_steps, then cosine decay to
/// min_lr_ratio * lr at total_steps. Throws DomainError outside [0, total].
double lr_at(std::int64_t step, const OptimizerConfig& cfg);

/// Global L2 norm over every gradient buffer, accumulated in f64.
template <typename T>
double grad_norm(const model::ParamStore<T>& params);

/// Scales all gradients by max_norm / norm when norm exceeds max_norm.
/// Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(model::ParamStore<T>& params, double max_norm);

/// AdamW with bias correction and decoupled weight decay, applied in the
/// usual order: w *= 1 - lr * wd, then w -= lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
class AdamW {
 public:
  AdamW(const OptimizerConfig& cfg, const model::ParamStore<T>& params);

  /// One update with the given learning rate. In checked mode a non-finite
  /// gradient throws NumericError before anything is modified.
  void step(model::ParamStore<T>& params, double lr);

  std::int64_t steps_taken() const { return t_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_state(std::int64_t t, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);

 private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct Metrics {
  double loss = 0.0;
  double ppl = 0.0;
  double bpb = 0.0;
};

/// ppl = exp(loss), bpb = loss / (ln 2 * bytes_per_token).
/// Throws DomainError unless bytes_per_token > 0.
Metrics metrics_from_loss(double loss, double bytes_per_token);

/// Token-weighted mean cross-entropy over sequential non-overlapping windows
/// of the validation stream. max_windows = 0 uses all of them. Throws
/// DomainError when the stream holds no full window.
template <typename T>
Metrics evaluate(const model::Model<T>& m, std::span<const TokenId> val, std::size_t seq_len,
                 std::size_t batch, double bytes_per_token, std::size_t max_windows = 0);

struct TrainConfig {
  int batch_size = 16;
  int seq_len = 32;
  int grad_accum = 1;
  int eval_every = 50;        // 0: only at the end
  int checkpoint_every = 0;   // 0: only at the end
  int eval_batch = 16;
  int eval_max_windows = 0;   // 0: whole validation stream
  bool checked = false;       // NaN/Inf scanning of every op

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct StepStats {
  std::int64_t step = 0;  // optimizer steps completed, 1-based after the first
  double loss = 0.0;      // cross-entropy + aux, averaged over micro-batches
  double ce = 0.0;
  double aux = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
};

/// Owns model, optimizer and sampler for one f32 training run.
class Trainer {
 public:
  Trainer(const model::ModelConfig& model_cfg, const OptimizerConfig& opt_cfg,
          const TrainConfig& train_cfg, std::uint64_t seed, data::Corpus corpus);

  StepStats train_step();
  Metrics evaluate_now() const;

  std::int64_t step() const { return optimizer_.steps_taken(); }
  model::Model<float>& model() { return model_; }
  const model::Model<float>& model() const { return model_; }
  const AdamW<float>& optimizer() const { return optimizer_; }
  const data::Corpus& corpus() const { return corpus_; }
  const data::WindowSampler& sampler() const { return sampler_; }
  const OptimizerConfig& optimizer_config() const { return opt_cfg_; }
  const TrainConfig& train_config() const { return train_cfg_; }
  std::uint64_t seed() const { return seed_; }

  Checkpoint snapshot() const;
  /// Restores parameters, moments, step and sampler position.
  void restore(const Checkpoint& ckpt);

 private:
  model::ModelConfig model_cfg_;
  OptimizerConfig opt_cfg_;
  TrainConfig train_cfg_;
  std::uint64_t seed_;
  data::Corpus corpus_;
  model::Model<float> model_;
  AdamW<float> optimizer_;
  data::WindowSampler sampler_;
};

}  // namespace tpt::train
