#pragma once

// Single-row bodies shared by the serial and OpenMP kernels. Keeping one body
// per kernel is what makes the two backends bit-identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "tpt/kernels.hpp"

namespace tpt::kernels::rows {

template <typename T>
inline void gemm_row(const GemmShape& s, std::span<const T> a, std::span<const T> b,
                     std::span<T> c, std::size_t i, bool accumulate, std::span<T> acc) {
  const auto a_at = [&](std::size_t kk) { return s.trans_a ? a[kk * s.m + i] : a[i * s.k + kk]; };
  T* out = c.data() + i * s.n;
  if (!s.trans_b) {
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::size_t kk = 0; kk < s.k; ++kk) {
      const T aik = a_at(kk);
      const T* brow = b.data() + kk * s.n;
      for (std::size_t j = 0; j < s.n; ++j) acc[j] += aik * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < s.n; ++j) {
      const T* brow = b.data() + j * s.k;
      T sum = T(0);
      for (std::size_t kk = 0; kk < s.k; ++kk) sum += a_at(kk) * brow[kk];
      acc[j] = sum;
    }
  }
  if (accumulate) {
    for (std::size_t j = 0; j < s.n; ++j) out[j] += acc[j];
  } else {
    std::copy(acc.begin(), acc.end(), out);
  }
}

template <typename T>
inline void softmax_row(std::span<const T> x, std::span<T> y, std::size_t r, std::size_t cols,
                        std::size_t causal_period) {
  const T* in = x.data() + r * cols;
  T* out = y.data() + r * cols;
  const std::size_t limit = causal_period ? std::min(cols, r % causal_period + 1) : cols;
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < limit; ++j) mx = std::max(mx, in[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < limit; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const T inv = static_cast<T>(1.0 / sum);
  for (std::size_t j = 0; j < limit; ++j) out[j] *= inv;
  for (std::size_t j = limit; j < cols; ++j) out[j] = T(0);
}

template <typename T>
inline void phase_rms_norm_row(std::span<const T> x, std::span<const T> gain, std::span<T> y,
                               std::span<T> inv_rms, std::size_t r, std::size_t d,
                               std::size_t n_phases, double eps) {
  const std::size_t dp = d / n_phases;
  for (std::size_t p = 0; p < n_phases; ++p) {
    const std::size_t base = r * d + p * dp;
    double ss = 0.0;
    for (std::size_t k = 0; k < dp; ++k) {
      const double v = x[base + k];
      ss += v * v;
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(ss / static_cast<double>(dp) + eps));
    inv_rms[r * n_phases + p] = inv;
    for (std::size_t k = 0; k < dp; ++k) y[base + k] = gain[p * dp + k] * (x[base + k] * inv);
  }
}

}  // namespace tpt::kernels::rows
