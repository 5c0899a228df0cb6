#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tpt/rng.hpp"

namespace tpt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class DType { F32, F64 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

const char* dtype_name(DType d);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;  // null for leaves
};

template <typename T>
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(std::span<const T>)> backward;
};

}  // namespace detail

/// Dense row-major tensor handle with an optional gradient slot.
///
/// Copies share storage. Values are never mutated by ops; only leaves may be
/// written through mutable_data(), which is how optimizers update parameters.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  /// Extent of dimension i; negative i counts from the back.
  std::size_t dim(int i) const;

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return impl_->node == nullptr; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; empty span when nothing has been accumulated yet.
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();

  /// Reverse-mode pass from this scalar. The recorded graph is freed afterwards
  /// unless retain_graph is set. Leaf gradients accumulate across calls.
  void backward(bool retain_graph = false) const;

  /// Same values, no history, no gradient tracking.
  Tensor detach() const;
  Tensor clone() const;

  bool shares_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

// Recording switches are thread-local so independent runs on different threads
// never observe each other's modes.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// When on, every op output and every accumulated gradient is scanned for
/// NaN/Inf and a NumericError is thrown naming the op.
bool checked_mode();
void set_checked_mode(bool on);

class CheckedModeGuard {
 public:
  explicit CheckedModeGuard(bool on = true);
  ~CheckedModeGuard();
  CheckedModeGuard(const CheckedModeGuard&) = delete;
  CheckedModeGuard& operator=(const CheckedModeGuard&) = delete;

 private:
  bool prev_;
};

namespace autograd {

template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out)>;

/// Builds an op result. When recording is on and any input needs gradients,
/// the result carries `fn`, which must accumulate into inputs via grad_sink().
template <typename T>
Tensor<T> record(const char* op, Shape shape, std::vector<T> values,
                 std::vector<Tensor<T>> inputs, BackwardFn<T> fn);

/// Gradient buffer of `t`, allocated as zeros on first use. Returns an empty
/// span when `t` does not require gradients.
template <typename T>
std::span<T> grad_sink(const Tensor<T>& t);

template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph);

}  // namespace autograd

template <typename T>
Tensor<T> randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);

}  // namespace tpt
