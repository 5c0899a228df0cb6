#include <vector>

#include "rows.hpp"

namespace tpt::kernels::serial {

template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
  std::vector<T> acc(s.n);
  for (std::size_t i = 0; i < s.m; ++i) rows::gemm_row<T>(s, a, b, c, i, accumulate, acc);
}

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols,
                  std::size_t causal_period) {
  for (std::size_t r = 0; r < rows; ++r) rows::softmax_row<T>(x, y, r, cols, causal_period);
}

template <typename T>
void phase_rms_norm_rows(std::span<const T> x, std::span<const T> gain, std::span<T> y,
                         std::span<T> inv_rms, std::size_t rows, std::size_t d,
                         std::size_t n_phases, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    rows::phase_rms_norm_row<T>(x, gain, y, inv_rms, r, d, n_phases, eps);
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

}  // namespace tpt::kernels::serial
