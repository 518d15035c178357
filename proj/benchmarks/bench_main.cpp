#include <benchmark/benchmark.h>

#include "memcap/expressivity.hpp"
#include "memcap/kernel.hpp"
#include "memcap/net.hpp"
#include "memcap/rng.hpp"

namespace {

using namespace memcap;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

void BM_GramRbf(benchmark::State& state) {
  const Matrix X = gaussian(state.range(0), 784, 1);
  const KernelSpec spec{KernelKind::Rbf, 1e-3};
  for (auto _ : state) benchmark::DoNotOptimize(gram(X, spec));
}
BENCHMARK(BM_GramRbf)->Arg(256)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_LossAndGrad(benchmark::State& state) {
  MlpSpec spec{784, {static_cast<std::size_t>(state.range(0))}, 10, 0.0};
  const auto params = init_mlp(spec, 2);
  const Matrix X = gaussian(128, 784, 3);
  std::vector<int> y(128);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(params, X, y, 0.0));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_LossAndGrad)->Arg(32)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_ConstructDepth2(benchmark::State& state) {
  const Matrix X = gaussian(state.range(0), 32, 4);
  const Vector y = gaussian(state.range(0), 1, 5).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(construct_depth2(X, y, 6));
}
BENCHMARK(BM_ConstructDepth2)->Arg(256)->Arg(2048)->Unit(benchmark::kMicrosecond);

}  // namespace

// Own main: the packaged benchmark_main archive carries LTO bytecode from another compiler release.
BENCHMARK_MAIN();
