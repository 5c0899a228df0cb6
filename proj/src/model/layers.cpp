#include <cmath>
#include <numeric>
#include <string>

#include "tpt/error.hpp"
#include "tpt/kernels.hpp"
#include "tpt/model.hpp"

namespace tpt::model {

using autograd::grad_sink;
using autograd::record;

RopeTable::RopeTable(std::size_t max_positions, std::size_t d_head, double base)
    : max_positions_(max_positions), d_head_(d_head), half_(d_head / 2) {
  if (d_head == 0 || d_head % 2 != 0) {
    throw ConfigError("RopeTable: d_head must be even and positive, got " + std::to_string(d_head));
  }
  inv_freq_.resize(half_);
  for (std::size_t j = 0; j < half_; ++j) {
    inv_freq_[j] = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d_head));
  }
  cos_.resize(max_positions * half_);
  sin_.resize(max_positions * half_);
  for (std::size_t p = 0; p < max_positions; ++p) {
    for (std::size_t j = 0; j < half_; ++j) {
      const double a = static_cast<double>(p) * inv_freq_[j];
      cos_[p * half_ + j] = std::cos(a);
      sin_[p * half_ + j] = std::sin(a);
    }
  }
}

template <typename T>
Tensor<T> phase_aware_rms_norm(const Tensor<T>& x, const Tensor<T>& weight, int n_phases,
                               double eps) {
  if (x.rank() == 0) throw ShapeError("phase_aware_rms_norm: input must have rank >= 1");
  const std::size_t d = x.dim(-1);
  if (weight.rank() != 1 || weight.numel() != d) {
    throw ShapeError("phase_aware_rms_norm: weight " + shape_str(weight.shape()) +
                     " does not match width " + std::to_string(d));
  }
  if (n_phases < 1 || d % static_cast<std::size_t>(n_phases) != 0) {
    throw ShapeError("phase_aware_rms_norm: " + std::to_string(n_phases) +
                     " phases do not divide width " + std::to_string(d));
  }
  const auto N = static_cast<std::size_t>(n_phases);
  const std::size_t rows = x.numel() / d;
  std::vector<T> y(x.numel());
  auto inv = std::make_shared<std::vector<T>>(rows * N);
  kernels::phase_rms_norm_rows<T>(x.data(), weight.data(), y, *inv, rows, d, N, eps);

  return record<T>(
      "phase_rms_norm", x.shape(), std::move(y), {x, weight},
      [x, weight, inv, rows, d, N](std::span<const T> g) {
        auto gx = grad_sink(x);
        auto gw = grad_sink(weight);
        const auto X = x.data();
        const auto W = weight.data();
        const std::size_t dp = d / N;
        std::vector<double> gw_acc(gw.empty() ? 0 : d, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t p = 0; p < N; ++p) {
            const std::size_t base = r * d + p * dp;
            const double s = (*inv)[r * N + p];
            if (!gx.empty()) {
              double dot = 0.0;
              for (std::size_t k = 0; k < dp; ++k) {
                dot += double(g[base + k]) * W[p * dp + k] * X[base + k];
              }
              const double c = s * s * s * dot / static_cast<double>(dp);
              for (std::size_t k = 0; k < dp; ++k) {
                gx[base + k] += static_cast<T>(s * double(g[base + k]) * W[p * dp + k] -
                                               c * double(X[base + k]));
              }
            }
            if (!gw.empty()) {
              for (std::size_t k = 0; k < dp; ++k) {
                gw_acc[p * dp + k] += double(g[base + k]) * X[base + k] * s;
              }
            }
          }
        }
        for (std::size_t k = 0; k < gw_acc.size(); ++k) gw[k] += static_cast<T>(gw_acc[k]);
      });
}

template <typename T>
Tensor<T> rope_rotate(const Tensor<T>& x, const RopeTable& table, std::span<const int> positions) {
  if (x.rank() < 2) throw ShapeError("rope_rotate: input must be [..., T, d_head]");
  const std::size_t T_len = x.dim(-2), dh = x.dim(-1);
  if (dh != table.d_head()) {
    throw ShapeError("rope_rotate: head width " + std::to_string(dh) + " but table built for " +
                     std::to_string(table.d_head()));
  }
  if (positions.size() != T_len) throw ShapeError("rope_rotate: need one position per row");
  for (int p : positions) {
    if (p < 0 || static_cast<std::size_t>(p) >= table.max_positions()) {
      throw ShapeError("rope_rotate: position " + std::to_string(p) + " outside table of " +
                       std::to_string(table.max_positions()));
    }
  }
  const std::size_t half = dh / 2;
  const std::size_t outer = x.numel() / (T_len * dh);
  // Angles are copied out of the table so the backward closure owns them.
  auto cs = std::make_shared<std::vector<double>>(2 * T_len * half);
  for (std::size_t t = 0; t < T_len; ++t) {
    for (std::size_t j = 0; j < half; ++j) {
      (*cs)[2 * (t * half + j)] = table.cos(static_cast<std::size_t>(positions[t]), j);
      (*cs)[2 * (t * half + j) + 1] = table.sin(static_cast<std::size_t>(positions[t]), j);
    }
  }

  // Apply R(pos) (sign = +1) or its transpose (sign = -1) to src into dst.
  auto rotate = [cs, outer, T_len, dh, half](std::span<const T> src, std::span<T> dst,
                                             double sign, bool accumulate) {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t t = 0; t < T_len; ++t) {
        const std::size_t base = (o * T_len + t) * dh;
        for (std::size_t j = 0; j < half; ++j) {
          const T c = static_cast<T>((*cs)[2 * (t * half + j)]);
          const T s = static_cast<T>(sign * (*cs)[2 * (t * half + j) + 1]);
          const T a = src[base + j], b = src[base + half + j];
          const T r1 = a * c - b * s;
          const T r2 = b * c + a * s;
          if (accumulate) {
            dst[base + j] += r1;
            dst[base + half + j] += r2;
          } else {
            dst[base + j] = r1;
            dst[base + half + j] = r2;
          }
        }
      }
    }
  };

  std::vector<T> out(x.numel());
  rotate(x.data(), out, 1.0, false);
  return record<T>("rope", x.shape(), std::move(out), {x},
                   [x, rotate](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     if (!gx.empty()) rotate(g, gx, -1.0, true);
                   });
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> rope_apply(const Tensor<T>& q, const Tensor<T>& k,
                                           std::span<const int> positions, const RopeTable& table) {
  return {rope_rotate(q, table, positions), rope_rotate(k, table, positions)};
}

template <typename T>
Tensor<T> repeat_kv_heads(const Tensor<T>& x, std::size_t r) {
  if (x.rank() != 4) throw ShapeError("repeat_kv_heads: input must be [B, H, T, d]");
  if (r == 0) throw ShapeError("repeat_kv_heads: repeat factor must be >= 1");
  if (r == 1) return x;
  const std::size_t B = x.dim(0), H = x.dim(1), inner = x.dim(2) * x.dim(3);
  std::vector<T> out(x.numel() * r);
  const auto X = x.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H * r; ++h) {
      const T* src = X.data() + (b * H + h / r) * inner;
      std::copy(src, src + inner, out.data() + (b * H * r + h) * inner);
    }
  }
  return record<T>("repeat_kv", Shape{B, H * r, x.dim(2), x.dim(3)}, std::move(out), {x},
                   [x, B, H, r, inner](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     for (std::size_t b = 0; b < B; ++b) {
                       for (std::size_t h = 0; h < H * r; ++h) {
                         T* dst = gx.data() + (b * H + h / r) * inner;
                         const T* src = g.data() + (b * H * r + h) * inner;
                         for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                       }
                     }
                   });
}

template <typename T>
Tensor<T> gqa_attention(const Tensor<T>& x, const AttentionWeights<T>& w, const AttentionShape& s,
                        const RopeTable& rope) {
  if (x.rank() != 3) throw ShapeError("gqa_attention: input must be [B, T, d]");
  if (s.n_q_heads < 1 || s.n_kv_heads < 1 || s.n_q_heads % s.n_kv_heads != 0) {
    throw ShapeError("gqa_attention: n_kv_heads must divide n_q_heads");
  }
  const std::size_t B = x.dim(0), T_len = x.dim(1);
  const auto hq = static_cast<std::size_t>(s.n_q_heads);
  const auto hkv = static_cast<std::size_t>(s.n_kv_heads);
  const auto dh = static_cast<std::size_t>(s.d_head);

  const auto heads = [&](const Tensor<T>& proj, std::size_t h) {
    return permute(reshape(proj, {B, T_len, h, dh}), {0, 2, 1, 3});
  };
  auto q = heads(matmul(x, w.wq), hq);
  auto k = heads(matmul(x, w.wk), hkv);
  auto v = heads(matmul(x, w.wv), hkv);

  std::vector<int> positions(T_len);
  std::iota(positions.begin(), positions.end(), 0);
  std::tie(q, k) = rope_apply(q, k, positions, rope);

  k = repeat_kv_heads(k, hq / hkv);
  v = repeat_kv_heads(v, hq / hkv);

  auto scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(double(dh)));
  auto probs = softmax_lastdim(scores, true);
  auto ctx = permute(matmul(probs, v), {0, 2, 1, 3});
  return matmul(reshape(ctx, {B, T_len, hq * dh}), w.wo);
}

template <typename T>
Tensor<T> swiglu_ffn(const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up,
                     const Tensor<T>& w_down) {
  return matmul(mul(silu(matmul(x, w_gate)), matmul(x, w_up)), w_down);
}

template <typename T>
Tensor<T> phase_rotation_layer(const Tensor<T>& h, const Tensor<T>& theta,
                               const phase::PhaseConfig& cfg, bool residual) {
  auto r = phase::phase_rotate(h, theta, cfg);
  return residual ? add(h, r) : r;
}

template <typename T>
Tensor<T> block_forward(const Tensor<T>& h, const BlockParams<T>& p, const ModelConfig& cfg,
                        const RopeTable& rope) {
  const AttentionShape shape{cfg.n_q_heads, cfg.n_kv_heads, cfg.d_head()};
  const int np = cfg.norm_phases();
  auto h1 = add(h, gqa_attention(phase_aware_rms_norm(h, p.norm1, np, cfg.norm_eps), p.attn, shape,
                                 rope));
  auto h2 = p.theta ? phase_rotation_layer(h1, *p.theta, cfg.phase(), cfg.residual_pr) : h1;
  return add(h2, swiglu_ffn(phase_aware_rms_norm(h2, p.norm2, np, cfg.norm_eps), p.w_gate, p.w_up,
                            p.w_down));
}

template <typename T>
Tensor<T> embed(const TokenBatch& tokens, const Tensor<T>& table, const Tensor<T>* horn,
                const ModelConfig& cfg) {
  if (tokens.ids.size() != tokens.batch * tokens.seq) {
    throw ShapeError("embed: token batch holds " + std::to_string(tokens.ids.size()) +
                     " ids for shape " + shape_str(tokens.shape()));
  }
  auto x = embedding(table, tokens.ids, tokens.shape());
  if (cfg.scale_embedding) x = scale(x, std::sqrt(static_cast<double>(cfg.d_model)));
  if (cfg.zero_mean_enforce) x = phase::subtract_cross_phase_mean(x, cfg.phase());
  if (cfg.horn_inject) {
    if (horn == nullptr) throw ConfigError("embed: horn injection is on but no horn was given");
    x = phase::horn_substitute(x, *horn, cfg.phase());
  }
  return x;
}

#define TPT_INSTANTIATE(T)                                                                       \
  template Tensor<T> phase_aware_rms_norm(const Tensor<T>&, const Tensor<T>&, int, double);      \
  template Tensor<T> rope_rotate(const Tensor<T>&, const RopeTable&, std::span<const int>);      \
  template std::pair<Tensor<T>, Tensor<T>> rope_apply(const Tensor<T>&, const Tensor<T>&,        \
                                                      std::span<const int>, const RopeTable&);   \
  template Tensor<T> repeat_kv_heads(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> gqa_attention(const Tensor<T>&, const AttentionWeights<T>&,                 \
                                   const AttentionShape&, const RopeTable&);                     \
  template Tensor<T> swiglu_ffn(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                const Tensor<T>&);                                               \
  template Tensor<T> phase_rotation_layer(const Tensor<T>&, const Tensor<T>&,                    \
                                          const phase::PhaseConfig&, bool);                      \
  template Tensor<T> block_forward(const Tensor<T>&, const BlockParams<T>&, const ModelConfig&,  \
                                   const RopeTable&);                                            \
  template Tensor<T> embed(const TokenBatch&, const Tensor<T>&, const Tensor<T>*,                \
                           const ModelConfig&);
TPT_INSTANTIATE(float)
TPT_INSTANTIATE(double)
#undef TPT_INSTANTIATE

}  // namespace tpt::model
