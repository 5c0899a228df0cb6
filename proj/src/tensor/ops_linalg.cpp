#include <numeric>
#include <string>

#include "broadcast.hpp"
#include "tpt/error.hpp"
#include "tpt/kernels.hpp"
#include "tpt/ops.hpp"

namespace tpt {

using autograd::grad_sink;
using autograd::record;

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return record<T>("reshape", std::move(shape), std::move(out), {x}, [x](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw ShapeError("permute: permutation rank mismatch");
  std::vector<bool> used(r, false);
  for (auto p : perm) {
    if (p >= r || used[p]) throw ShapeError("permute: invalid permutation");
    used[p] = true;
  }
  const Shape& in = x.shape();
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];

  // src[i] = flat input index of output element i
  const std::size_t n = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*src)[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += in_strides[perm[d]];
      if (idx[d] < out_shape[d]) break;
      off -= in_strides[perm[d]] * idx[d];
      idx[d] = 0;
    }
  }
  const auto X = x.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = X[(*src)[i]];
  return record<T>("permute", std::move(out_shape), std::move(out), {x},
                   [x, src](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     for (std::size_t i = 0; i < g.size(); ++i) gx[(*src)[i]] += g[i];
                   });
}

template <typename T>
Tensor<T> slice_front(const Tensor<T>& x, std::size_t count) {
  if (x.rank() == 0 || count > x.dim(0)) {
    throw ShapeError("slice_front: cannot take " + std::to_string(count) + " from " +
                     shape_str(x.shape()));
  }
  const std::size_t inner = x.dim(0) == 0 ? 0 : x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<T> out(x.data().begin(), x.data().begin() + static_cast<std::ptrdiff_t>(count * inner));
  return record<T>("slice_front", std::move(shape), std::move(out), {x}, [x](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands need rank >= 2");
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }

  // A 2-D right operand folds all of a's leading dims into rows: one GEMM.
  if (b.rank() == 2) {
    const std::size_t rows = a.numel() / k;
    Shape shape(a.shape().begin(), a.shape().end() - 1);
    shape.push_back(n);
    std::vector<T> out(rows * n);
    kernels::gemm<T>({rows, n, k, false, false}, a.data(), b.data(), out, false);
    return record<T>("matmul", std::move(shape), std::move(out), {a, b},
                     [a, b, rows, n, k](std::span<const T> g) {
                       auto ga = grad_sink(a);
                       auto gb = grad_sink(b);
                       if (!ga.empty()) kernels::gemm<T>({rows, k, n, false, true}, g, b.data(), ga, true);
                       if (!gb.empty()) kernels::gemm<T>({k, n, rows, true, false}, a.data(), g, gb, true);
                     });
  }

  const Shape ab(a.shape().begin(), a.shape().end() - 2);
  const Shape bb(b.shape().begin(), b.shape().end() - 2);
  auto plan = std::make_shared<const detail::BroadcastPlan>(
      detail::BroadcastPlan::make(ab, bb, "matmul"));
  const std::size_t batches = numel(plan->out);
  Shape shape = plan->out;
  shape.push_back(m);
  shape.push_back(n);
  std::vector<T> out(batches * m * n);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t bi = 0; bi < batches; ++bi) {
    kernels::gemm<T>({m, n, k, false, false}, A.subspan(plan->a(bi) * m * k, m * k),
                     B.subspan(plan->b(bi) * k * n, k * n),
                     std::span<T>(out).subspan(bi * m * n, m * n), false);
  }
  return record<T>("matmul", std::move(shape), std::move(out), {a, b},
                   [a, b, plan, batches, m, n, k](std::span<const T> g) {
                     auto ga = grad_sink(a);
                     auto gb = grad_sink(b);
                     const auto A = a.data();
                     const auto B = b.data();
                     for (std::size_t bi = 0; bi < batches; ++bi) {
                       const auto gi = g.subspan(bi * m * n, m * n);
                       if (!ga.empty()) {
                         kernels::gemm<T>({m, k, n, false, true}, gi, B.subspan(plan->b(bi) * k * n, k * n),
                                          ga.subspan(plan->a(bi) * m * k, m * k), true);
                       }
                       if (!gb.empty()) {
                         kernels::gemm<T>({k, n, m, true, false}, A.subspan(plan->a(bi) * m * k, m * k), gi,
                                          gb.subspan(plan->b(bi) * k * n, k * n), true);
                       }
                     }
                   });
}

#define TPT_INSTANTIATE(T)                                                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                              \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);    \
  template Tensor<T> slice_front(const Tensor<T>&, std::size_t);                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);
TPT_INSTANTIATE(float)
TPT_INSTANTIATE(double)
#undef TPT_INSTANTIATE

}  // namespace tpt
