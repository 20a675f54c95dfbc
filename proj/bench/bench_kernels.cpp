// Serial reference vs OpenMP im2col convolution.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "umafd/kernels.hpp"

using namespace umafd::kernels;

namespace {

Conv3dGeometry geometry(std::size_t cin, std::size_t cout, std::size_t hw) {
  Conv3dGeometry g;
  g.in_channels = cin;
  g.out_channels = cout;
  g.in_dims = {8, hw, hw};
  g.kernel = {3, 3, 3};
  g.stride = {1, 2, 2};
  return g;
}

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void BM_ForwardReference(benchmark::State& state) {
  const auto g = geometry(state.range(0), state.range(1), state.range(2));
  const auto x = random_vec(g.in_channels * 8 * state.range(2) * state.range(2), 1);
  const auto w = random_vec(g.weight_size(), 2);
  const auto b = random_vec(g.out_channels, 3);
  std::vector<double> y(g.out_channels * g.out_volume());
  for (auto _ : state) {
    conv3d_forward_reference(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ForwardParallel(benchmark::State& state) {
  const auto g = geometry(state.range(0), state.range(1), state.range(2));
  const auto x = random_vec(g.in_channels * 8 * state.range(2) * state.range(2), 1);
  const auto w = random_vec(g.weight_size(), 2);
  const auto b = random_vec(g.out_channels, 3);
  std::vector<double> y(g.out_channels * g.out_volume());
  for (auto _ : state) {
    conv3d_forward(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_BackwardReference(benchmark::State& state) {
  const auto g = geometry(state.range(0), state.range(1), state.range(2));
  const auto x = random_vec(g.in_channels * 8 * state.range(2) * state.range(2), 1);
  const auto w = random_vec(g.weight_size(), 2);
  const auto dy = random_vec(g.out_channels * g.out_volume(), 4);
  std::vector<double> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    conv3d_backward_reference(g, x, w, dy, dx, dw, db);
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_BackwardParallel(benchmark::State& state) {
  const auto g = geometry(state.range(0), state.range(1), state.range(2));
  const auto x = random_vec(g.in_channels * 8 * state.range(2) * state.range(2), 1);
  const auto w = random_vec(g.weight_size(), 2);
  const auto b = random_vec(g.out_channels, 3);
  const auto dy = random_vec(g.out_channels * g.out_volume(), 4);
  std::vector<double> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    conv3d_backward(g, x, w, dy, dx, dw, db);
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_Im2col(benchmark::State& state) {
  const auto g = geometry(state.range(0), state.range(1), state.range(2));
  const auto x = random_vec(g.in_channels * 8 * state.range(2) * state.range(2), 1);
  std::vector<double> col(g.patch_size() * g.out_volume());
  for (auto _ : state) {
    im2col(g, x, col);
    benchmark::DoNotOptimize(col.data());
  }
}

}  // namespace

#define SHAPES ->Args({3, 4, 64})->Args({4, 8, 32})->Args({8, 16, 16})->Unit(benchmark::kMicrosecond)
BENCHMARK(BM_Im2col) SHAPES;
BENCHMARK(BM_ForwardReference) SHAPES;
BENCHMARK(BM_ForwardParallel) SHAPES;
BENCHMARK(BM_BackwardReference) SHAPES;
BENCHMARK(BM_BackwardParallel) SHAPES;

BENCHMARK_MAIN();
