// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against the im2col/OpenMP kernels the detector
// uses. Run with OMP_NUM_THREADS to vary the thread count.
#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "metaanchor/kernels.hpp"

namespace {

using namespace metaanchor::kernels;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

ConvShape conv_shape(const benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  return {c, c, hw, hw};
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 16})->Args({16, 32})->Args({32, 32})->Args({32, 64});
}

void BM_ConvForwardReference(benchmark::State& state) {
  const ConvShape s = conv_shape(state);
  const auto x = random_vec(s.in_channels * s.height * s.width, 1);
  const auto w = random_vec(s.out_channels * s.in_channels * 9, 2);
  const auto b = random_vec(s.out_channels, 3);
  std::vector<double> y(s.out_channels * s.height * s.width);
  for (auto _ : state) {
    reference::conv3x3_forward(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvForwardReference)->Apply(conv_args);

void BM_ConvForwardParallel(benchmark::State& state) {
  const ConvShape s = conv_shape(state);
  const auto x = random_vec(s.in_channels * s.height * s.width, 1);
  const auto w = random_vec(s.out_channels * s.in_channels * 9, 2);
  const auto b = random_vec(s.out_channels, 3);
  std::vector<double> y(s.out_channels * s.height * s.width);
  for (auto _ : state) {
    conv3x3_forward(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvForwardParallel)->Apply(conv_args);

void BM_ConvBackwardReference(benchmark::State& state) {
  const ConvShape s = conv_shape(state);
  const auto x = random_vec(s.in_channels * s.height * s.width, 1);
  const auto w = random_vec(s.out_channels * s.in_channels * 9, 2);
  const auto gy = random_vec(s.out_channels * s.height * s.width, 4);
  std::vector<double> gx(x.size()), gw(w.size()), gb(s.out_channels);
  for (auto _ : state) {
    reference::conv3x3_backward(s, x, w, gy, gx, gw, gb);
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_ConvBackwardReference)->Apply(conv_args);

void BM_ConvBackwardParallel(benchmark::State& state) {
  const ConvShape s = conv_shape(state);
  const auto x = random_vec(s.in_channels * s.height * s.width, 1);
  const auto w = random_vec(s.out_channels * s.in_channels * 9, 2);
  const auto gy = random_vec(s.out_channels * s.height * s.width, 4);
  std::vector<double> gx(x.size()), gw(w.size()), gb(s.out_channels);
  for (auto _ : state) {
    conv3x3_backward(s, x, w, gy, gx, gw, gb);
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_ConvBackwardParallel)->Apply(conv_args);

void BM_GemmReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 5), b = random_vec(n * n, 6);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    reference::gemm(n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_GemmReference)->Arg(64)->Arg(128)->Arg(256);

void BM_GemmParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 5), b = random_vec(n * n, 6);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    gemm_nn(n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_GemmParallel)->Arg(64)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
