#include <random>

#include <benchmark/benchmark.h>

#include "motorfm/extractors.hpp"
#include "motorfm/probes.hpp"

namespace {

motorfm::WindowedDataset noise_windows(std::size_t n) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> g;
  motorfm::WindowedDataset d;
  d.channels = 4;
  d.length = 512;
  d.num_classes = 3;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d.sample_stride(); ++j) d.values.push_back(g(gen));
    d.labels.push_back(static_cast<std::uint32_t>(i % 3));
    d.ids.push_back(i);
  }
  return d;
}

void BM_StatFeatures(benchmark::State& state) {
  const auto d = noise_windows(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(motorfm::extract_all(motorfm::StatFeatures{}, d).features.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StatFeatures)->Arg(300);

void BM_TreeFit(benchmark::State& state) {
  const auto b = motorfm::extract_all(motorfm::StatFeatures{}, noise_windows(static_cast<std::size_t>(state.range(0))));
  const auto params = motorfm::default_params(motorfm::ProbeKind::tree, b.dim());
  for (auto _ : state) benchmark::DoNotOptimize(motorfm::fit_predict(motorfm::ProbeKind::tree, params, b, b.features).data());
}
BENCHMARK(BM_TreeFit)->Arg(300)->Arg(3000);

}  // namespace
