#include "tpt/phase.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "tpt/error.hpp"
#include "tpt/ops.hpp"

namespace tpt::phase {

using autograd::grad_sink;
using autograd::record;

namespace {

template <typename T>
double row_sum(const T* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += v[k];
  return s;
}

}  // namespace

PhaseConfig::PhaseConfig(int n_phases, int d_model) : n_phases_(n_phases), d_model_(d_model) {
  if (n_phases < 1) throw ConfigError("n_phases must be >= 1, got " + std::to_string(n_phases));
  if (d_model < 1) throw ConfigError("d_model must be >= 1, got " + std::to_string(d_model));
  if (d_model % n_phases != 0) {
    throw ConfigError("n_phases=" + std::to_string(n_phases) + " does not divide d_model=" +
                      std::to_string(d_model));
  }
  if ((d_model / n_phases) % 2 != 0) {
    throw ConfigError("d_phase=" + std::to_string(d_model / n_phases) +
                      " must be even for Givens pairing");
  }
}

double PhaseConfig::offset(int i) const {
  return 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_phases_);
}

std::vector<double> PhaseConfig::offsets() const {
  std::vector<double> out(static_cast<std::size_t>(n_phases_));
  for (int i = 0; i < n_phases_; ++i) out[static_cast<std::size_t>(i)] = offset(i);
  return out;
}

double harmonic_number(std::size_t T) {
  double h = 0.0;
  for (std::size_t k = 1; k <= T; ++k) h += 1.0 / static_cast<double>(k);
  return h;
}

double analytic_pinned_residual(int n_phases, std::size_t T) {
  if (n_phases < 1 || T < 1) throw DomainError("analytic_pinned_residual: N and T must be >= 1");
  return static_cast<double>(n_phases) * harmonic_number(T) / static_cast<double>(T);
}

std::vector<double> theta_init(int layer, int n_layers, int d_phase) {
  if (n_layers < 1 || layer < 0 || layer >= n_layers) {
    throw DomainError("theta_init: layer " + std::to_string(layer) + " outside [0, " +
                      std::to_string(n_layers) + ")");
  }
  if (d_phase < 2 || d_phase % 2 != 0) throw DomainError("theta_init: d_phase must be even");
  const double value = (layer + 1) * std::numbers::pi / (2.0 * n_layers);
  return std::vector<double>(static_cast<std::size_t>(d_phase / 2), value);
}

HornProfile::HornProfile(std::size_t max_len, bool learnable)
    : values_(max_len), learnable_(learnable) {
  if (max_len == 0) throw DomainError("HornProfile: max_len must be positive");
  for (std::size_t t = 0; t < max_len; ++t) values_[t] = 1.0 / static_cast<double>(t + 1);
}

HornProfile HornProfile::fixed(std::size_t max_len) { return HornProfile(max_len, false); }

HornProfile HornProfile::learnable(std::size_t seq_len) { return HornProfile(seq_len + 1, true); }

template <typename T>
Tensor<T> HornProfile::to_tensor() const {
  std::vector<T> v(values_.begin(), values_.end());
  return Tensor<T>({values_.size()}, std::move(v), learnable_);
}

ThetaBank::ThetaBank(std::vector<std::vector<double>> init, std::vector<std::vector<double>> current)
    : init_(std::move(init)), current_(std::move(current)) {
  if (init_.size() != current_.size()) throw ShapeError("ThetaBank: layer count mismatch");
  for (std::size_t l = 0; l < init_.size(); ++l) {
    if (init_[l].size() != init_.front().size() || current_[l].size() != init_[l].size()) {
      throw ShapeError("ThetaBank: every layer needs d_phase/2 angles");
    }
  }
}

ThetaBank ThetaBank::depth_linear(int n_layers, int d_phase) {
  std::vector<std::vector<double>> init;
  for (int l = 0; l < n_layers; ++l) init.push_back(theta_init(l, n_layers, d_phase));
  auto current = init;
  return ThetaBank(std::move(init), std::move(current));
}

void ThetaBank::set_current(std::size_t layer, std::vector<double> values) {
  if (values.size() != pairs()) throw ShapeError("ThetaBank::set_current: wrong length");
  current_.at(layer) = std::move(values);
}

namespace {

// Rotates pairs inside n_blocks contiguous blocks of each row; block b uses
// angle sign * (theta[k] + offsets[b]).
template <typename T>
Tensor<T> rotate_blocks(const char* op, const Tensor<T>& x, const Tensor<T>& theta,
                        const std::vector<double>& offsets, double sign) {
  const std::size_t pairs = theta.numel();
  const std::size_t blocks = offsets.size();
  const std::size_t width = blocks * 2 * pairs;
  if (theta.rank() != 1) throw ShapeError(std::string(op) + ": theta must be 1-D");
  if (x.rank() == 0 || x.dim(-1) != width) {
    throw ShapeError(std::string(op) + ": last extent of " + shape_str(x.shape()) +
                     " must be " + std::to_string(width));
  }
  const std::size_t rows = x.numel() / width;
  const auto th = theta.data();
  auto cs = std::make_shared<std::vector<T>>(2 * blocks * pairs);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t k = 0; k < pairs; ++k) {
      const T angle = static_cast<T>(sign) * (th[k] + static_cast<T>(offsets[b]));
      (*cs)[2 * (b * pairs + k)] = std::cos(angle);
      (*cs)[2 * (b * pairs + k) + 1] = std::sin(angle);
    }
  }
  const auto X = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t b = 0; b < blocks; ++b) {
      for (std::size_t k = 0; k < pairs; ++k) {
        const std::size_t i0 = r * width + b * 2 * pairs + 2 * k;
        const T c = (*cs)[2 * (b * pairs + k)];
        const T s = (*cs)[2 * (b * pairs + k) + 1];
        out[i0] = X[i0] * c - X[i0 + 1] * s;
        out[i0 + 1] = X[i0] * s + X[i0 + 1] * c;
      }
    }
  }
  auto saved = std::make_shared<const std::vector<T>>(out);
  return record<T>(op, x.shape(), std::move(out), {x, theta},
                   [x, theta, cs, saved, rows, blocks, pairs, width, sign](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     auto gt = grad_sink(theta);
                     const auto& Y = *saved;
                     std::vector<double> dtheta(gt.empty() ? 0 : pairs, 0.0);
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t b = 0; b < blocks; ++b) {
                         for (std::size_t k = 0; k < pairs; ++k) {
                           const std::size_t i0 = r * width + b * 2 * pairs + 2 * k;
                           const T c = (*cs)[2 * (b * pairs + k)];
                           const T s = (*cs)[2 * (b * pairs + k) + 1];
                           const T g0 = g[i0], g1 = g[i0 + 1];
                           if (!gx.empty()) {
                             gx[i0] += g0 * c + g1 * s;
                             gx[i0 + 1] += -g0 * s + g1 * c;
                           }
                           if (!gt.empty()) {
                             dtheta[k] += double(g1) * Y[i0] - double(g0) * Y[i0 + 1];
                           }
                         }
                       }
                     }
                     for (std::size_t k = 0; k < dtheta.size(); ++k) {
                       gt[k] += static_cast<T>(sign * dtheta[k]);
                     }
                   });
}

}  // namespace

template <typename T>
Tensor<T> givens_rotate_pairs(const Tensor<T>& x, const Tensor<T>& theta, double offset) {
  if (x.rank() == 0 || x.dim(-1) % 2 != 0) {
    throw DomainError("givens_rotate_pairs: d_phase must be even, got last extent " +
                      std::to_string(x.rank() ? x.dim(-1) : 0));
  }
  return rotate_blocks<T>("givens_rotate_pairs", x, theta, {offset}, 1.0);
}

template <typename T>
Tensor<T> phase_rotate(const Tensor<T>& x, const Tensor<T>& theta, const PhaseConfig& cfg,
                       Direction dir) {
  if (theta.numel() != static_cast<std::size_t>(cfg.pairs_per_phase())) {
    throw ShapeError("phase_rotate: theta needs d_phase/2 = " +
                     std::to_string(cfg.pairs_per_phase()) + " entries");
  }
  return rotate_blocks<T>("phase_rotate", x, theta, cfg.offsets(),
                          dir == Direction::Forward ? 1.0 : -1.0);
}

namespace {

template <typename T>
void check_width(const Tensor<T>& x, const PhaseConfig& cfg, const char* op) {
  if (x.rank() == 0 || x.dim(-1) != static_cast<std::size_t>(cfg.d_model())) {
    throw ShapeError(std::string(op) + ": last extent of " + shape_str(x.shape()) +
                     " does not match d_model=" + std::to_string(cfg.d_model()));
  }
}

}  // namespace

template <typename T>
Tensor<T> cross_phase_mean(const Tensor<T>& x, const PhaseConfig& cfg) {
  check_width(x, cfg, "cross_phase_mean");
  return mean_lastdim(x, false);
}

template <typename T>
Tensor<T> per_phase_means(const Tensor<T>& x, const PhaseConfig& cfg) {
  check_width(x, cfg, "per_phase_means");
  Shape split(x.shape().begin(), x.shape().end() - 1);
  split.push_back(static_cast<std::size_t>(cfg.n_phases()));
  split.push_back(static_cast<std::size_t>(cfg.d_phase()));
  return mean_lastdim(reshape(x, split), false);
}

template <typename T>
Tensor<T> horn_substitute(const Tensor<T>& x, const Tensor<T>& horn, const PhaseConfig& cfg) {
  check_width(x, cfg, "horn_substitute");
  if (x.rank() != 3) throw ShapeError("horn_substitute: expected [B, T, d_model]");
  const std::size_t T_len = x.dim(1);
  if (horn.rank() != 1 || T_len > horn.numel()) {
    throw ShapeError("horn_substitute: sequence length " + std::to_string(T_len) +
                     " exceeds horn max_len " + std::to_string(horn.numel()));
  }
  const auto r = reshape(slice_front(horn, T_len), {1, T_len, 1});
  const auto shift = sub(r, mean_lastdim(x, true));
  return add(x, shift);
}

template <typename T>
Tensor<T> horn_substitute(const Tensor<T>& x, const HornProfile& horn, const PhaseConfig& cfg) {
  return horn_substitute(x, horn.to_tensor<T>(), cfg);
}

template <typename T>
Tensor<T> subtract_cross_phase_mean(const Tensor<T>& x, const PhaseConfig& cfg) {
  check_width(x, cfg, "subtract_cross_phase_mean");
  const std::size_t d = static_cast<std::size_t>(cfg.d_model());
  const std::size_t rows = x.numel() / d;
  const auto X = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = X.data() + r * d;
    T* y = out.data() + r * d;
    double m = 0.0;
    for (std::size_t k = 0; k < d; ++k) m += in[k];
    m /= static_cast<double>(d);
    for (std::size_t k = 0; k < d; ++k) y[k] = static_cast<T>(in[k] - m);
    // Rounding leaves a row sum of a few ulp. Fold it into the smallest entry,
    // whose ulp is finest, until the row sums to exactly zero.
    for (int pass = 0; pass < 4; ++pass) {
      const double rest = row_sum(y, d);
      if (rest == 0.0) break;
      std::size_t k_min = 0;
      for (std::size_t k = 1; k < d; ++k) {
        if (std::abs(y[k]) < std::abs(y[k_min])) k_min = k;
      }
      y[k_min] = static_cast<T>(y[k_min] - rest);
    }
  }
  return record<T>("subtract_cross_phase_mean", x.shape(), std::move(out), {x},
                   [x, rows, d](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const T* gr = g.data() + r * d;
                       const double gm = row_sum(gr, d) / static_cast<double>(d);
                       for (std::size_t k = 0; k < d; ++k) {
                         gx[r * d + k] += static_cast<T>(gr[k] - gm);
                       }
                     }
                   });
}

template <typename T>
double zero_sum_residual(const Tensor<T>& x, const PhaseConfig& cfg) {
  check_width(x, cfg, "zero_sum_residual");
  const std::size_t d = static_cast<std::size_t>(cfg.d_model());
  const std::size_t dp = static_cast<std::size_t>(cfg.d_phase());
  const std::size_t n = static_cast<std::size_t>(cfg.n_phases());
  const std::size_t rows = x.numel() / d;
  if (rows == 0) return 0.0;
  const auto X = x.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double phase_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < dp; ++k) s += X[r * d + i * dp + k];
      phase_sum += s / static_cast<double>(dp);
    }
    total += std::abs(phase_sum);
  }
  return total / static_cast<double>(rows);
}

template <typename T>
std::vector<double> mean_phase_means(const Tensor<T>& x, const PhaseConfig& cfg) {
  check_width(x, cfg, "mean_phase_means");
  const std::size_t d = static_cast<std::size_t>(cfg.d_model());
  const std::size_t dp = static_cast<std::size_t>(cfg.d_phase());
  const std::size_t n = static_cast<std::size_t>(cfg.n_phases());
  const std::size_t rows = x.numel() / d;
  std::vector<double> means(n, 0.0);
  if (rows == 0) return means;
  const auto X = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < dp; ++k) s += X[r * d + i * dp + k];
      means[i] += s / static_cast<double>(dp);
    }
  }
  for (auto& m : means) m /= static_cast<double>(rows);
  return means;
}

template <typename T>
Tensor<T> aux_zero_sum_loss(const Tensor<T>& x, const PhaseConfig& cfg) {
  check_width(x, cfg, "aux_zero_sum_loss");
  // Summing the phase means equals the row sum over d_phase, so one double
  // accumulation per row gives the exact value the projection drove to zero.
  const std::size_t d = static_cast<std::size_t>(cfg.d_model());
  const double dp = static_cast<double>(cfg.d_phase());
  const std::size_t rows = x.numel() / d;
  if (rows == 0) throw ShapeError("aux_zero_sum_loss: empty input");
  const auto X = x.data();
  auto sums = std::make_shared<std::vector<double>>(rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    (*sums)[r] = row_sum(X.data() + r * d, d) / dp;
    loss += (*sums)[r] * (*sums)[r];
  }
  loss /= static_cast<double>(rows);
  return record<T>("aux_zero_sum_loss", {}, {static_cast<T>(loss)}, {x},
                   [x, sums, rows, d, dp](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     const double scale = 2.0 * static_cast<double>(g[0]) / (static_cast<double>(rows) * dp);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const T v = static_cast<T>(scale * (*sums)[r]);
                       for (std::size_t k = 0; k < d; ++k) gx[r * d + k] += v;
                     }
                   });
}

#define TPT_INSTANTIATE(T)                                                                       \
  template Tensor<T> HornProfile::to_tensor<T>() const;                                          \
  template Tensor<T> givens_rotate_pairs(const Tensor<T>&, const Tensor<T>&, double);            \
  template Tensor<T> phase_rotate(const Tensor<T>&, const Tensor<T>&, const PhaseConfig&,        \
                                  Direction);                                                    \
  template Tensor<T> cross_phase_mean(const Tensor<T>&, const PhaseConfig&);                     \
  template Tensor<T> per_phase_means(const Tensor<T>&, const PhaseConfig&);                      \
  template Tensor<T> horn_substitute(const Tensor<T>&, const Tensor<T>&, const PhaseConfig&);    \
  template Tensor<T> horn_substitute(const Tensor<T>&, const HornProfile&, const PhaseConfig&);  \
  template Tensor<T> subtract_cross_phase_mean(const Tensor<T>&, const PhaseConfig&);            \
  template double zero_sum_residual(const Tensor<T>&, const PhaseConfig&);                       \
  template std::vector<double> mean_phase_means(const Tensor<T>&, const PhaseConfig&);           \
  template Tensor<T> aux_zero_sum_loss(const Tensor<T>&, const PhaseConfig&);
TPT_INSTANTIATE(float)
TPT_INSTANTIATE(double)
#undef TPT_INSTANTIATE

}  // namespace tpt::phase
