// Serial reference kernels against their OpenMP versions. Run with
// OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include "tpt/kernels.hpp"
#include "tpt/rng.hpp"

using namespace tpt;
using namespace tpt::kernels;

namespace {

std::vector<float> random_vec(std::size_t n) {
  Rng rng(n);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

template <Backend B>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n), b = random_vec(n * n);
  std::vector<float> c(n * n);
  const GemmShape s{n, n, n, false, false};
  for (auto _ : state) {
    if constexpr (B == Backend::Serial) serial::gemm<float>(s, a, b, c, false);
    else omp::gemm<float>(s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

template <Backend B>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{128};
  const auto x = random_vec(rows * cols);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if constexpr (B == Backend::Serial) serial::softmax_rows<float>(x, y, rows, cols, cols);
    else omp::softmax_rows<float>(x, y, rows, cols, cols);
    benchmark::DoNotOptimize(y.data());
  }
}

template <Backend B>
void BM_PhaseRmsNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), d = std::size_t{192};
  const auto x = random_vec(rows * d), g = random_vec(d);
  std::vector<float> y(x.size()), inv(rows * 3);
  for (auto _ : state) {
    if constexpr (B == Backend::Serial) serial::phase_rms_norm_rows<float>(x, g, y, inv, rows, d, 3, 1e-5);
    else omp::phase_rms_norm_rows<float>(x, g, y, inv, rows, d, 3, 1e-5);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<Backend::Serial>)->Arg(64)->Arg(192)->Arg(384);
BENCHMARK(BM_Gemm<Backend::OpenMP>)->Arg(64)->Arg(192)->Arg(384);
BENCHMARK(BM_Softmax<Backend::Serial>)->Arg(1024)->Arg(8192);
BENCHMARK(BM_Softmax<Backend::OpenMP>)->Arg(1024)->Arg(8192);
BENCHMARK(BM_PhaseRmsNorm<Backend::Serial>)->Arg(1024)->Arg(8192);
BENCHMARK(BM_PhaseRmsNorm<Backend::OpenMP>)->Arg(1024)->Arg(8192);

BENCHMARK_MAIN();
