// Serial vs OpenMP timings of the parallel kernels. Thread count follows
// COBIN_THREADS (or the OpenMP default).

#include <vector>

#include <benchmark/benchmark.h>

#include "cobin/kernels.hpp"

using namespace cobin;
using namespace cobin::kernels;

namespace {

void BM_KgBatch(benchmark::State& state, Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> c(n), out(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = -8.0 + 16.0 * static_cast<double>(i % 101) / 100.0;
  const std::vector<int> b{1};
  const kg::EnvelopeConfig cfg;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    kg_batch(b, c, out, seed++, cfg, exec);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_LogHTable(benchmark::State& state, Exec exec) {
  const auto n = state.range(0);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  for (auto _ : state) {
    Eigen::MatrixXd t = log_h_table(y, 70, exec);
    benchmark::DoNotOptimize(t.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK_CAPTURE(BM_KgBatch, serial, Exec::serial)->Arg(1 << 14)->Arg(1 << 17)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_KgBatch, openmp, Exec::parallel)->Arg(1 << 14)->Arg(1 << 17)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_LogHTable, serial, Exec::serial)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_LogHTable, openmp, Exec::parallel)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
