#pragma once

#include <cstddef>
#include <span>

// Hot loops of the engine, each in two flavors: a serial reference and an
// OpenMP version. Parallel versions split work across independent output rows
// and keep every per-element reduction in the serial order, so both produce
// bit-identical results.

namespace tpt::kernels {

enum class Backend { Serial, OpenMP };

/// Backend used by the dispatching entry points; thread-local, Serial by default.
Backend backend();
void set_backend(Backend b);
const char* backend_name(Backend b);
int omp_max_threads();

class BackendGuard {
 public:
  explicit BackendGuard(Backend b);
  ~BackendGuard();
  BackendGuard(const BackendGuard&) = delete;
  BackendGuard& operator=(const BackendGuard&) = delete;

 private:
  Backend prev_;
};

/// op(A) is m x k, op(B) is k x n, C is m x n, all row-major.
/// trans_a: A is stored k x m. trans_b: B is stored n x k.
struct GemmShape {
  std::size_t m = 0, n = 0, k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

namespace serial {

/// C = op(A) op(B), or C += op(A) op(B) when accumulate is set.
template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate);

/// Row softmax with max subtraction. With causal_period > 0, row r may only
/// attend to columns <= r % causal_period; masked entries are exactly 0.
template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols,
                  std::size_t causal_period);

/// Per-phase RMS normalization of rows of width d split into n_phases blocks.
/// inv_rms receives rows * n_phases reciprocal RMS values.
template <typename T>
void phase_rms_norm_rows(std::span<const T> x, std::span<const T> gain, std::span<T> y,
                         std::span<T> inv_rms, std::size_t rows, std::size_t d,
                         std::size_t n_phases, double eps);

}  // namespace serial

namespace omp {

template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate);

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols,
                  std::size_t causal_period);

template <typename T>
void phase_rms_norm_rows(std::span<const T> x, std::span<const T> gain, std::span<T> y,
                         std::span<T> inv_rms, std::size_t rows, std::size_t d,
                         std::size_t n_phases, double eps);

}  // namespace omp

// Dispatch on backend().
template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  backend() == Backend::OpenMP ? omp::gemm(s, a, b, c, accumulate)
                               : serial::gemm(s, a, b, c, accumulate);
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols,
                  std::size_t causal_period) {
  backend() == Backend::OpenMP ? omp::softmax_rows(x, y, rows, cols, causal_period)
                               : serial::softmax_rows(x, y, rows, cols, causal_period);
}

template <typename T>
void phase_rms_norm_rows(std::span<const T> x, std::span<const T> gain, std::span<T> y,
                         std::span<T> inv_rms, std::size_t rows, std::size_t d,
                         std::size_t n_phases, double eps) {
  backend() == Backend::OpenMP
      ? omp::phase_rms_norm_rows(x, gain, y, inv_rms, rows, d, n_phases, eps)
      : serial::phase_rms_norm_rows(x, gain, y, inv_rms, rows, d, n_phases, eps);
}

}  // namespace tpt::kernels
