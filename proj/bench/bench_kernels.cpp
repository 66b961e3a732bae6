#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "deltalag/kernels.hpp"

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      deltalag::kernels::matmul(a.data(), b.data(), c.data(), n, n, n);
    } else {
      deltalag::kernels::reference::matmul(a.data(), b.data(), c.data(), n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Parallel>
void BM_ColumnCorrelation(benchmark::State& state) {
  const std::size_t rows = 250;
  const auto p = static_cast<std::size_t>(state.range(0));
  const auto x = random_values(rows * p, 3);
  const auto y = random_values(rows * p, 4);
  std::vector<double> out(p * p);
  for (auto _ : state) {
    if constexpr (Parallel) {
      deltalag::kernels::column_correlation(x.data(), y.data(), out.data(), rows, p, p);
    } else {
      deltalag::kernels::reference::column_correlation(x.data(), y.data(), out.data(), rows, p, p);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_ColumnCorrelation<false>)->Name("column_correlation/serial")->Arg(30)->Arg(200)->Arg(500);
BENCHMARK(BM_ColumnCorrelation<true>)->Name("column_correlation/parallel")->Arg(30)->Arg(200)->Arg(500);

BENCHMARK_MAIN();
