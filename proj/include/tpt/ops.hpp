#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tpt/tensor.hpp"

namespace tpt {

using TokenId = std::int32_t;

/// Row-major [batch, seq] token ids.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<TokenId> ids;

  Shape shape() const { return {batch, seq}; }
  bool operator==(const TokenBatch&) const = default;
};

// Elementwise binary ops broadcast numpy-style over trailing-aligned extents.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
/// Throws DomainError when any divisor element is zero.
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, double factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, double value);
template <typename T> Tensor<T> square(const Tensor<T>& x);
/// Throws DomainError on negative input.
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
/// Throws DomainError on non-positive input.
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> cos(const Tensor<T>& x);
template <typename T> Tensor<T> sin(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// x * sigmoid(x)
template <typename T> Tensor<T> silu(const Tensor<T>& x);

// Reductions accumulate in double and cast back.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum_lastdim(const Tensor<T>& x, bool keepdim = false);
template <typename T> Tensor<T> mean_lastdim(const Tensor<T>& x, bool keepdim = false);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
/// First `count` entries along dimension 0.
template <typename T> Tensor<T> slice_front(const Tensor<T>& x, std::size_t count);

/// a: [..., m, k], b: [..., k, n] with broadcasting over the leading dims.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Softmax over the last dimension. With causal_mask, row i (index along the
/// second-to-last dim) keeps columns j <= i and assigns 0 to the rest.
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x, bool causal_mask);

/// Mean token negative log-likelihood over positions whose target differs from
/// ignore_index. logits: [..., V]; targets has one id per row of logits.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets,
                        TokenId ignore_index = 0);

/// Rows of table [V, d] gathered by ids; output shape ids_shape + [d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids, const Shape& ids_shape);

}  // namespace tpt
