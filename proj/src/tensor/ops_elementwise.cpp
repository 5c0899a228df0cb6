#include <cmath>
#include <string>

#include "broadcast.hpp"
#include "tpt/error.hpp"
#include "tpt/ops.hpp"

namespace tpt {
namespace {

using autograd::grad_sink;
using autograd::record;

// f(a, b) forward; da/db give the local partials from (a, b, out).
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, DA da, DB db) {
  auto plan = std::make_shared<const detail::BroadcastPlan>(
      detail::BroadcastPlan::make(a.shape(), b.shape(), op));
  const std::size_t n = numel(plan->out);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(A[plan->a(i)], B[plan->b(i)]);
  Shape shape = plan->out;
  return record<T>(op, std::move(shape), std::move(out), {a, b},
                   [a, b, plan, da, db](std::span<const T> g) {
                     const auto A = a.data();
                     const auto B = b.data();
                     auto ga = grad_sink(a);
                     auto gb = grad_sink(b);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const T x = A[plan->a(i)];
                       const T y = B[plan->b(i)];
                       if (!ga.empty()) ga[plan->a(i)] += g[i] * da(x, y);
                       if (!gb.empty()) gb[plan->b(i)] += g[i] * db(x, y);
                     }
                   });
}

// f(x) forward; df(x, y) local derivative given input and output.
template <typename T, typename F, typename DF>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, DF df) {
  const auto X = x.data();
  std::vector<T> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = f(X[i]);
  auto saved = std::make_shared<const std::vector<T>>(out);
  return record<T>(op, x.shape(), std::move(out), {x}, [x, saved, df](std::span<const T> g) {
    const auto X = x.data();
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(X[i], (*saved)[i]);
  });
}

template <typename T>
T sigmoid_scalar(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  for (T v : b.data()) {
    if (v == T(0)) throw DomainError("div: division by zero");
  }
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary<T>("neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
  const T f = static_cast<T>(factor);
  return unary<T>("scale", x, [f](T v) { return v * f; }, [f](T, T) { return f; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, double value) {
  const T c = static_cast<T>(value);
  return unary<T>("add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (v < T(0)) throw DomainError("sqrt: negative input");
  }
  return unary<T>("sqrt", x, [](T v) { return std::sqrt(v); },
                  [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (!(v > T(0))) throw DomainError("log: non-positive input");
  }
  return unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& x) {
  return unary<T>("cos", x, [](T v) { return std::cos(v); }, [](T v, T) { return -std::sin(v); });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
  return unary<T>("sin", x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>("sigmoid", x, [](T v) { return sigmoid_scalar(v); },
                  [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary<T>(
      "silu", x, [](T v) { return v * sigmoid_scalar(v); },
      [](T v, T) {
        const T s = sigmoid_scalar(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  return record<T>("sum", Shape{}, {static_cast<T>(acc)}, {x}, [x](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  return record<T>("mean", Shape{}, {static_cast<T>(acc / static_cast<double>(n))}, {x},
                   [x, n](std::span<const T> g) {
                     auto gx = grad_sink(x);
                     const T share = g[0] / static_cast<T>(n);
                     for (auto& v : gx) v += share;
                   });
}

namespace {

template <typename T>
Tensor<T> reduce_lastdim(const char* op, const Tensor<T>& x, bool keepdim, bool average) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": needs rank >= 1");
  const std::size_t d = x.dim(-1);
  if (d == 0) throw ShapeError(std::string(op) + ": empty last dimension");
  const std::size_t rows = x.numel() / d;
  const auto X = x.data();
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += X[r * d + j];
    out[r] = static_cast<T>(average ? acc / static_cast<double>(d) : acc);
  }
  Shape shape = x.shape();
  if (keepdim) {
    shape.back() = 1;
  } else {
    shape.pop_back();
  }
  const T w = average ? T(1) / static_cast<T>(d) : T(1);
  return record<T>(op, std::move(shape), std::move(out), {x}, [x, d, rows, w](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const T share = g[r] * w;
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += share;
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> sum_lastdim(const Tensor<T>& x, bool keepdim) {
  return reduce_lastdim<T>("sum_lastdim", x, keepdim, false);
}

template <typename T>
Tensor<T> mean_lastdim(const Tensor<T>& x, bool keepdim) {
  return reduce_lastdim<T>("mean_lastdim", x, keepdim, true);
}

#define TPT_INSTANTIATE(T)                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> neg(const Tensor<T>&);                      \
  template Tensor<T> scale(const Tensor<T>&, double);            \
  template Tensor<T> add_scalar(const Tensor<T>&, double);       \
  template Tensor<T> square(const Tensor<T>&);                   \
  template Tensor<T> sqrt(const Tensor<T>&);                     \
  template Tensor<T> exp(const Tensor<T>&);                      \
  template Tensor<T> log(const Tensor<T>&);                      \
  template Tensor<T> cos(const Tensor<T>&);                      \
  template Tensor<T> sin(const Tensor<T>&);                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                  \
  template Tensor<T> silu(const Tensor<T>&);                     \
  template Tensor<T> sum(const Tensor<T>&);                      \
  template Tensor<T> mean(const Tensor<T>&);                     \
  template Tensor<T> sum_lastdim(const Tensor<T>&, bool);        \
  template Tensor<T> mean_lastdim(const Tensor<T>&, bool);
TPT_INSTANTIATE(float)
TPT_INSTANTIATE(double)
#undef TPT_INSTANTIATE

}  // namespace tpt
