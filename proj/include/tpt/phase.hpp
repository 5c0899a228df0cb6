#pragma once

#include <cstddef>
#include <vector>

#include "tpt/tensor.hpp"

namespace tpt::phase {

/// Cyclic Z_N partition of the model width into N contiguous phase blocks.
class PhaseConfig {
 public:
  /// Throws ConfigError unless n_phases divides d_model into even-width blocks.
  PhaseConfig(int n_phases, int d_model);

  int n_phases() const { return n_phases_; }
  int d_model() const { return d_model_; }
  int d_phase() const { return d_model_ / n_phases_; }
  int pairs_per_phase() const { return d_phase() / 2; }

  /// Fixed offset 2*pi*i/N in radians, always derived from N.
  double offset(int i) const;
  std::vector<double> offsets() const;

  bool operator==(const PhaseConfig&) const = default;

 private:
  int n_phases_;
  int d_model_;
};

/// H_T = sum_{k=1..T} 1/k by direct f64 summation.
double harmonic_number(std::size_t T);

/// N * H_T / T: the zero-sum residual forced by the horn at every position.
double analytic_pinned_residual(int n_phases, std::size_t T);

/// Depth-linear initial angle (layer + 1) * pi / (2 * n_layers), repeated d_phase/2 times.
std::vector<double> theta_init(int layer, int n_layers, int d_phase);

/// Gabriel's horn r(t) = 1/(t+1) over max_len positions.
class HornProfile {
 public:
  static HornProfile fixed(std::size_t max_len);
  /// Trainable variant: one entry per position for seq_len + 1 positions.
  static HornProfile learnable(std::size_t seq_len);

  std::size_t max_len() const { return values_.size(); }
  bool learnable() const { return learnable_; }
  const std::vector<double>& values() const { return values_; }

  template <typename T>
  Tensor<T> to_tensor() const;

 private:
  HornProfile(std::size_t max_len, bool learnable);
  std::vector<double> values_;
  bool learnable_;
};

/// Per-layer rotation angles plus the immutable snapshot taken at init.
class ThetaBank {
 public:
  ThetaBank(std::vector<std::vector<double>> init, std::vector<std::vector<double>> current);
  static ThetaBank depth_linear(int n_layers, int d_phase);

  std::size_t n_layers() const { return init_.size(); }
  std::size_t pairs() const { return init_.empty() ? 0 : init_.front().size(); }
  const std::vector<double>& init(std::size_t layer) const { return init_.at(layer); }
  const std::vector<double>& current(std::size_t layer) const { return current_.at(layer); }
  void set_current(std::size_t layer, std::vector<double> values);

 private:
  std::vector<std::vector<double>> init_;
  std::vector<std::vector<double>> current_;
};

enum class Direction { Forward, Inverse };

/// Rotates every consecutive (2k, 2k+1) pair of x [..., d_phase] by
/// theta[k] + offset. Differentiable in x and theta.
template <typename T>
Tensor<T> givens_rotate_pairs(const Tensor<T>& x, const Tensor<T>& theta, double offset);

/// Phase block i of x [..., d_model] rotated pairwise by theta[k] + 2*pi*i/N.
/// Inverse applies the transpose (all angles negated).
template <typename T>
Tensor<T> phase_rotate(const Tensor<T>& x, const Tensor<T>& theta, const PhaseConfig& cfg,
                       Direction dir = Direction::Forward);

/// Cross-phase mean (1/N) sum_i mu_i over the last dim; result drops that dim.
template <typename T>
Tensor<T> cross_phase_mean(const Tensor<T>& x, const PhaseConfig& cfg);

/// Per-phase channel means mu_i: [..., d_model] -> [..., N].
template <typename T>
Tensor<T> per_phase_means(const Tensor<T>& x, const PhaseConfig& cfg);

/// x + (r(t) - mean_t) along the DC direction. x: [B, T, d_model],
/// horn: [max_len]. Throws ShapeError when T > max_len.
template <typename T>
Tensor<T> horn_substitute(const Tensor<T>& x, const Tensor<T>& horn, const PhaseConfig& cfg);

template <typename T>
Tensor<T> horn_substitute(const Tensor<T>& x, const HornProfile& horn, const PhaseConfig& cfg);

/// x minus its cross-phase mean at every position (hard zero-sum).
template <typename T>
Tensor<T> subtract_cross_phase_mean(const Tensor<T>& x, const PhaseConfig& cfg);

/// mean over positions of |sum_i mu_i|, accumulated in f64. Diagnostic only.
template <typename T>
double zero_sum_residual(const Tensor<T>& x, const PhaseConfig& cfg);

/// Per-phase means averaged over every leading position, in f64.
template <typename T>
std::vector<double> mean_phase_means(const Tensor<T>& x, const PhaseConfig& cfg);

/// (1/(B T)) sum_{b,t} (sum_i mu_i)^2, unweighted and differentiable.
template <typename T>
Tensor<T> aux_zero_sum_loss(const Tensor<T>& x, const PhaseConfig& cfg);

}  // namespace tpt::phase
