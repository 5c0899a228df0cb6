#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tpt/error.hpp"
#include "tpt/kernels.hpp"
#include "tpt/ops.hpp"

namespace tpt {

using autograd::grad_sink;
using autograd::record;

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x, bool causal_mask) {
  if (x.rank() == 0 || x.dim(-1) == 0) throw ShapeError("softmax_lastdim: last dim must be >= 1");
  if (causal_mask && x.rank() < 2) throw ShapeError("softmax_lastdim: causal mask needs rank >= 2");
  const std::size_t cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  const std::size_t period = causal_mask ? x.dim(-2) : 0;
  std::vector<T> y(x.numel());
  kernels::softmax_rows<T>(x.data(), y, rows, cols, period);
  auto saved = std::make_shared<const std::vector<T>>(y);
  return record<T>("softmax", x.shape(), std::move(y), {x},
                   [x, saved, rows, cols](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     const auto& Y = *saved;
                     for (std::size_t r = 0; r < rows; ++r) {
                       const std::size_t base = r * cols;
                       double dot = 0.0;
                       for (std::size_t j = 0; j < cols; ++j) dot += double(Y[base + j]) * g[base + j];
                       const T d = static_cast<T>(dot);
                       for (std::size_t j = 0; j < cols; ++j) gx[base + j] += Y[base + j] * (g[base + j] - d);
                     }
                   });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets,
                        TokenId ignore_index) {
  if (logits.rank() == 0) throw ShapeError("cross_entropy: logits need rank >= 1");
  const std::size_t V = logits.dim(-1);
  const std::size_t rows = logits.numel() / V;
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  }
  std::size_t count = 0;
  for (TokenId t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V) {
      throw DomainError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                        std::to_string(V) + ")");
    }
    ++count;
  }
  if (count == 0) throw DomainError("cross_entropy: every position is ignored");

  const auto X = logits.data();
  auto lse = std::make_shared<std::vector<double>>(rows, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_index) continue;
    const T* row = X.data() + r * V;
    const double mx = *std::max_element(row, row + V);
    double s = 0.0;
    for (std::size_t j = 0; j < V; ++j) s += std::exp(double(row[j]) - mx);
    (*lse)[r] = mx + std::log(s);
    total += (*lse)[r] - double(row[targets[r]]);
  }
  const double loss = total / static_cast<double>(count);
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  return record<T>("cross_entropy", Shape{}, {static_cast<T>(loss)}, {logits},
                   [logits, tgt = std::move(tgt), lse, rows, V, count, ignore_index](std::span<const T> g) {
                     auto gx = grad_sink(logits);
                     const auto X = logits.data();
                     const double w = double(g[0]) / static_cast<double>(count);
                     for (std::size_t r = 0; r < rows; ++r) {
                       if (tgt[r] == ignore_index) continue;
                       const std::size_t base = r * V;
                       for (std::size_t j = 0; j < V; ++j) {
                         const double p = std::exp(double(X[base + j]) - (*lse)[r]);
                         gx[base + j] += static_cast<T>(w * p);
                       }
                       gx[base + static_cast<std::size_t>(tgt[r])] -= static_cast<T>(w);
                     }
                   });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids, const Shape& ids_shape) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V, d]");
  if (numel(ids_shape) != ids.size()) throw ShapeError("embedding: ids do not match ids_shape");
  const std::size_t V = table.dim(0), d = table.dim(1);
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw DomainError("embedding: token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(V));
    }
  }
  const auto W = table.data();
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(W.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Shape shape = ids_shape;
  shape.push_back(d);
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return record<T>("embedding", std::move(shape), std::move(out), {table},
                   [table, saved = std::move(saved), d](std::span<const T> g) {
                     auto gw = grad_sink(table);
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       T* row = gw.data() + static_cast<std::size_t>(saved[i]) * d;
                       for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
                     }
                   });
}

#define TPT_INSTANTIATE(T)                                                                   \
  template Tensor<T> softmax_lastdim(const Tensor<T>&, bool);                                \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const TokenId>, TokenId);     \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>, const Shape&);
TPT_INSTANTIATE(float)
TPT_INSTANTIATE(double)
#undef TPT_INSTANTIATE

}  // namespace tpt
