#include "tpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tpt/error.hpp"

namespace tpt {
namespace {

thread_local bool t_grad_enabled = true;
thread_local bool t_checked = false;

template <typename T>
void check_finite(std::span<const T> values, const char* op, const char* what) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite ") + what + " in op '" + op + "'");
    }
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

bool grad_enabled() { return t_grad_enabled; }
NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

bool checked_mode() { return t_checked; }
void set_checked_mode(bool on) { t_checked = on; }
CheckedModeGuard::CheckedModeGuard(bool on) : prev_(t_checked) { t_checked = on; }
CheckedModeGuard::~CheckedModeGuard() { t_checked = prev_; }

template <typename T>
Tensor<T>::Tensor() : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  impl_->shape = {0};
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  if (tpt::numel(shape) != values.size()) {
    throw ShapeError("Tensor: shape " + shape_str(shape) + " needs " +
                     std::to_string(tpt::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = tpt::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = tpt::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(int i) const {
  const int r = static_cast<int>(rank());
  const int k = i < 0 ? r + i : i;
  if (k < 0 || k >= r) {
    throw ShapeError("Tensor::dim: index " + std::to_string(i) + " out of range for rank " +
                     std::to_string(r));
  }
  return impl_->shape[static_cast<std::size_t>(k)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("Tensor::item on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw Error("set_requires_grad: only leaf tensors can change tracking");
  impl_->requires_grad = on;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward(bool retain_graph) const {
  autograd::backward(*this, retain_graph);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad && is_leaf());
}

namespace autograd {

template <typename T>
Tensor<T> record(const char* op, Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                 BackwardFn<T> fn) {
  if (t_checked) check_finite<T>(values, op, "output");
  Tensor<T> out(std::move(shape), std::move(values), false);
  if (!t_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<detail::Node<T>>();
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (const auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(fn);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
  return out;
}

template <typename T>
std::span<T> grad_sink(const Tensor<T>& t) {
  auto& impl = *t.impl();
  if (!impl.requires_grad) return {};
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), T(0));
  return impl.grad;
}

template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph) {
  using Impl = detail::TensorImpl<T>;
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw Error("backward: loss does not require grad");

  // Iterative post-order DFS; input order fixes the traversal, which fixes the
  // accumulation order.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      Impl* child = impl->node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  Impl* root = loss.impl().get();
  if (root->grad.empty()) root->grad.assign(1, T(0));
  root->grad[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* impl = *it;
    if (!impl->node) continue;
    if (impl->grad.empty()) continue;  // unreachable from the loss numerically
    impl->node->backward(impl->grad);
    if (t_checked) {
      for (const auto& in : impl->node->inputs) {
        if (!in->grad.empty()) check_finite<T>(in->grad, impl->node->op, "gradient");
      }
    }
  }

  if (!retain_graph) {
    for (Impl* impl : order) {
      if (impl->node) {
        impl->node.reset();
        impl->grad.clear();
        impl->grad.shrink_to_fit();
      }
    }
  }
}

}  // namespace autograd

template <typename T>
Tensor<T> randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  if (!(stddev > 0.0)) throw DomainError("randn: std must be positive, got " + std::to_string(stddev));
  const auto n = numel(shape);
  std::vector<T> values(n);
  for (auto& v : values) v = static_cast<T>(rng.normal() * stddev);
  return Tensor<T>(std::move(shape), std::move(values), requires_grad);
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> autograd::record(const char*, Shape, std::vector<float>,
                                        std::vector<Tensor<float>>, autograd::BackwardFn<float>);
template Tensor<double> autograd::record(const char*, Shape, std::vector<double>,
                                         std::vector<Tensor<double>>, autograd::BackwardFn<double>);
template std::span<float> autograd::grad_sink(const Tensor<float>&);
template std::span<double> autograd::grad_sink(const Tensor<double>&);
template void autograd::backward(const Tensor<float>&, bool);
template void autograd::backward(const Tensor<double>&, bool);
template Tensor<float> randn(Shape, double, Rng&, bool);
template Tensor<double> randn(Shape, double, Rng&, bool);

}  // namespace tpt
