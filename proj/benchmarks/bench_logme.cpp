#include <random>

#include <benchmark/benchmark.h>

#include "motorfm/logme.hpp"

namespace {

motorfm::FeatureBundle blobs(std::size_t n, Eigen::Index d) {
  std::mt19937_64 gen(0);
  std::normal_distribution<double> g;
  motorfm::FeatureBundle b;
  b.num_classes = 4;
  b.features = Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(n), d, [&] { return g(gen); });
  for (std::size_t i = 0; i < n; ++i) {
    b.labels.push_back(static_cast<std::uint32_t>(i % 4));
    b.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i % 4) % d) += 2.0;
  }
  return b;
}

void BM_LogME(benchmark::State& state) {
  const auto b = blobs(static_cast<std::size_t>(state.range(0)), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(motorfm::logme_score(b).score);
}
BENCHMARK(BM_LogME)->Args({200, 16})->Args({2000, 32})->Args({240, 2048});

}  // namespace
