#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "motorfm/signal.hpp"

namespace {

void BM_Resample(benchmark::State& state) {
  std::vector<double> x(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.157 * static_cast<double>(i));
  const motorfm::Resampler r(2000.0, 512.0);
  for (auto _ : state) benchmark::DoNotOptimize(r(x).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Resample)->Arg(20000)->Arg(200000);

}  // namespace
