#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tpt/ops.hpp"
#include "tpt/phase.hpp"
#include "tpt/tensor.hpp"

namespace tpt::model {

/// Architecture plus feature flags. The 3PT defaults match the 5.5M canonical
/// model: horn on, hard zero-mean and aux loss off, non-residual rotation.
struct ModelConfig {
  int vocab_size = 10000;
  int d_model = 192;
  int n_layers = 4;
  int n_phases = 3;
  int n_q_heads = 6;
  int n_kv_heads = 3;
  int d_ff = 512;
  int max_seq_len = 128;
  double rope_base = 10000.0;
  double norm_eps = 1e-5;
  double init_std = 0.02;        // projections and LM head
  double embed_init_std = 1.0;   // token embedding
  bool horn_inject = true;
  bool zero_mean_enforce = false;
  bool use_aux_loss = false;
  double aux_coef = 0.01;
  bool residual_pr = false;
  bool learnable_horn = false;
  bool scale_embedding = false;
  bool baseline_mode = false;

  int d_head() const { return d_model / n_q_heads; }
  int d_phase() const { return d_model / n_phases; }
  /// Phase count seen by the norms: 1 in baseline mode.
  int norm_phases() const { return baseline_mode ? 1 : n_phases; }
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  phase::PhaseConfig phase() const;

  /// The matched RoPE-only baseline: same dims, global RMSNorm, no rotation,
  /// no horn, embedding scaled by sqrt(d_model).
  static ModelConfig baseline_of(const ModelConfig& cfg);

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class InitKind { Normal, Ones, DepthLinearTheta, Horn };

struct ParamSpec {
  std::string name;
  Shape shape;
  bool is_matrix = false;  // weight decay applies only to matrices
  InitKind init = InitKind::Normal;
  double init_std = 0.0;
  int layer = -1;
};

/// Every trainable tensor, in creation order, without allocating anything.
std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg);
std::size_t count_parameters(const ModelConfig& cfg);

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool is_matrix = false;
};

template <typename T>
class ParamStore {
 public:
  void add(std::string name, Tensor<T> value, bool is_matrix);
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter<T>>& items() { return items_; }
  const std::vector<Parameter<T>>& items() const { return items_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter<T>> items_;
};

/// cos/sin caches for RoPE, computed in f64 for positions [0, max_positions).
class RopeTable {
 public:
  RopeTable(std::size_t max_positions, std::size_t d_head, double base);

  std::size_t max_positions() const { return max_positions_; }
  std::size_t d_head() const { return d_head_; }
  /// Angle index j in [0, d_head/2).
  double cos(std::size_t pos, std::size_t j) const { return cos_[pos * half_ + j]; }
  double sin(std::size_t pos, std::size_t j) const { return sin_[pos * half_ + j]; }
  double inv_freq(std::size_t j) const { return inv_freq_[j]; }

 private:
  std::size_t max_positions_, d_head_, half_;
  std::vector<double> inv_freq_, cos_, sin_;
};

/// Per-phase RMS normalization over x [..., d]; weight [d]. n_phases = 1 is
/// the ordinary global RMSNorm.
template <typename T>
Tensor<T> phase_aware_rms_norm(const Tensor<T>& x, const Tensor<T>& weight, int n_phases,
                               double eps);

/// Half-split rotary embedding of x [..., T, d_head] at the given positions
/// (one per row along T): x * c + rotate_half(x) * s.
template <typename T>
Tensor<T> rope_rotate(const Tensor<T>& x, const RopeTable& table, std::span<const int> positions);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> rope_apply(const Tensor<T>& q, const Tensor<T>& k,
                                           std::span<const int> positions, const RopeTable& table);

/// [B, H, T, d] -> [B, H * r, T, d]; output head h reads input head h / r.
template <typename T>
Tensor<T> repeat_kv_heads(const Tensor<T>& x, std::size_t r);

template <typename T>
struct AttentionWeights {
  Tensor<T> wq, wk, wv, wo;  // [d, n_q*dh], [d, n_kv*dh], [d, n_kv*dh], [n_q*dh, d]
};

struct AttentionShape {
  int n_q_heads = 0;
  int n_kv_heads = 0;
  int d_head = 0;
};

/// Causal grouped-query attention with RoPE on Q and K. x: [B, T, d].
template <typename T>
Tensor<T> gqa_attention(const Tensor<T>& x, const AttentionWeights<T>& w, const AttentionShape& s,
                        const RopeTable& rope);

/// W_down (silu(W_gate x) * (W_up x)), bias-free.
template <typename T>
Tensor<T> swiglu_ffn(const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up,
                     const Tensor<T>& w_down);

/// Non-residual per-phase Givens rotation, or h + PR(h) when residual is set.
template <typename T>
Tensor<T> phase_rotation_layer(const Tensor<T>& h, const Tensor<T>& theta,
                               const phase::PhaseConfig& cfg, bool residual = false);

template <typename T>
struct BlockParams {
  Tensor<T> norm1;
  AttentionWeights<T> attn;
  std::optional<Tensor<T>> theta;  // absent in baseline mode
  Tensor<T> norm2;
  Tensor<T> w_gate, w_up, w_down;
};

/// h' = h + Attn(N1(h)); h'' = PR(h'); out = h'' + FFN(N2(h'')).
template <typename T>
Tensor<T> block_forward(const Tensor<T>& h, const BlockParams<T>& block, const ModelConfig& cfg,
                        const RopeTable& rope);

/// Token lookup followed by the configured DC handling. `horn` may be null
/// when horn injection is off.
template <typename T>
Tensor<T> embed(const TokenBatch& tokens, const Tensor<T>& table, const Tensor<T>* horn,
                const ModelConfig& cfg);

template <typename T>
struct ForwardResult {
  Tensor<T> logits;    // [B, T, V]
  Tensor<T> aux_loss;  // coefficient-weighted; 0 when disabled
  Tensor<T> embedded;  // residual stream entering block 0
  std::vector<Tensor<T>> block_outputs;
};

template <typename T>
class Model {
 public:
  /// Allocates and initializes every parameter in layout order from `seed`.
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  ForwardResult<T> forward(const TokenBatch& tokens) const;
  Tensor<T> embed(const TokenBatch& tokens) const;
  BlockParams<T> block(int layer) const;

  /// Fixed buffer or trainable parameter; null when horn injection is off.
  const Tensor<T>* horn() const;

  /// Rotation angles now and at init, in f64; empty in baseline mode.
  phase::ThetaBank theta_bank() const;
  const std::vector<std::vector<T>>& theta_init_snapshot() const { return theta_init_; }
  void restore_theta_init_snapshot(std::vector<std::vector<T>> snapshot);

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
  std::optional<Tensor<T>> fixed_horn_;
  std::vector<std::vector<T>> theta_init_;
  RopeTable rope_;
};

std::string block_prefix(int layer);

}  // namespace tpt::model
