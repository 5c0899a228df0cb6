#include <omp.h>

#include <cstdint>
#include <vector>

#include "rows.hpp"

namespace tpt::kernels {
namespace {
thread_local Backend t_backend = Backend::Serial;
}

Backend backend() { return t_backend; }
void set_backend(Backend b) { t_backend = b; }
const char* backend_name(Backend b) { return b == Backend::Serial ? "serial" : "openmp"; }
int omp_max_threads() { return omp_get_max_threads(); }

BackendGuard::BackendGuard(Backend b) : prev_(t_backend) { t_backend = b; }
BackendGuard::~BackendGuard() { t_backend = prev_; }

namespace omp {

template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  const auto m = static_cast<std::int64_t>(s.m);
#pragma omp parallel
  {
    std::vector<T> acc(s.n);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
      rows::gemm_row<T>(s, a, b, c, static_cast<std::size_t>(i), accumulate, acc);
    }
  }
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols,
                  std::size_t causal_period) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    rows::softmax_row<T>(x, y, static_cast<std::size_t>(r), cols, causal_period);
  }
}

template <typename T>
void phase_rms_norm_rows(std::span<const T> x, std::span<const T> gain, std::span<T> y,
                         std::span<T> inv_rms, std::size_t rows, std::size_t d,
                         std::size_t n_phases, double eps) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    rows::phase_rms_norm_row<T>(x, gain, y, inv_rms, static_cast<std::size_t>(r), d, n_phases,
                                eps);
  }
}

#define TPT_INSTANTIATE(T)                                                                     \
  template void gemm<T>(const GemmShape&, std::span<const T>, std::span<const T>, std::span<T>, \
                        bool);                                                                 \
  template void softmax_rows<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t,    \
                                std::size_t);                                                  \
  template void phase_rms_norm_rows<T>(std::span<const T>, std::span<const T>, std::span<T>,   \
                                       std::span<T>, std::size_t, std::size_t, std::size_t,    \
                                       double);
TPT_INSTANTIATE(float)
TPT_INSTANTIATE(double)
#undef TPT_INSTANTIATE

}  // namespace omp
}  // namespace tpt::kernels
