// Serial reference kernels against their OpenMP counterparts.
// Run with OMP_NUM_THREADS to vary the pool.

#include <benchmark/benchmark.h>

#include <vector>

#include "lrstat/kernels.hpp"
#include "lrstat/rng.hpp"

namespace k = lrstat::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  lrstat::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

k::Conv2dGeometry conv_geometry(const benchmark::State& state) {
  k::Conv2dGeometry g;
  g.in_channels = static_cast<std::size_t>(state.range(0));
  g.out_channels = static_cast<std::size_t>(state.range(1));
  g.in_h = static_cast<std::size_t>(state.range(2));
  g.in_w = g.in_h * 4 / 3;
  g.kernel_h = g.kernel_w = 3;
  g.pad = 1;
  return g;
}

template <auto Fn>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto in = random_buffer(g.in_channels * g.in_h * g.in_w, 1);
  const auto w = random_buffer(g.out_channels * g.in_channels * 9, 2);
  std::vector<double> out(g.out_channels * g.out_h() * g.out_w());
  for (auto _ : state) {
    Fn(g, in, w, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto go = random_buffer(g.out_channels * g.out_h() * g.out_w(), 3);
  const auto w = random_buffer(g.out_channels * g.in_channels * 9, 2);
  std::vector<double> gi(g.in_channels * g.in_h * g.in_w);
  for (auto _ : state) {
    Fn(g, go, w, gi);
    benchmark::DoNotOptimize(gi.data());
  }
}

template <auto Fn>
void BM_ConvBackwardKernel(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto go = random_buffer(g.out_channels * g.out_h() * g.out_w(), 3);
  const auto in = random_buffer(g.in_channels * g.in_h * g.in_w, 1);
  std::vector<double> gw(g.out_channels * g.in_channels * 9);
  for (auto _ : state) {
    Fn(g, go, in, gw);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <auto Fn>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 4), b = random_buffer(n * n, 5);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Fn(false, false, n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
}

template <auto Fn>
void BM_Blur(benchmark::State& state) {
  const std::size_t h = 240, w = 320;
  const auto src = random_buffer(h * w, 6);
  std::vector<double> dst(h * w);
  for (auto _ : state) {
    Fn(src, h, w, 1, 2.0, dst);
    benchmark::DoNotOptimize(dst.data());
  }
}

template <auto Fn>
void BM_AreaResample(benchmark::State& state) {
  const std::size_t h = 240, w = 320;
  const auto src = random_buffer(h * w, 7);
  std::vector<double> dst(12 * 16);
  for (auto _ : state) {
    Fn(src, h, w, 1, dst, 12, 16);
    benchmark::DoNotOptimize(dst.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({1, 8, 48})->Args({8, 16, 24})->Args({16, 32, 12})->Args({32, 64, 12});
}

}  // namespace

BENCHMARK(BM_ConvForward<k::serial::conv2d_forward>)->Name("conv_forward/serial")->Apply(conv_args);
BENCHMARK(BM_ConvForward<k::omp::conv2d_forward>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<k::serial::conv2d_backward_input>)->Name("conv_backward_input/serial")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<k::omp::conv2d_backward_input>)->Name("conv_backward_input/omp")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardKernel<k::serial::conv2d_backward_kernel>)
    ->Name("conv_backward_kernel/serial")
    ->Apply(conv_args);
BENCHMARK(BM_ConvBackwardKernel<k::omp::conv2d_backward_kernel>)->Name("conv_backward_kernel/omp")->Apply(conv_args);
BENCHMARK(BM_Gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<k::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_Blur<k::serial::gaussian_blur>)->Name("gaussian_blur/serial");
BENCHMARK(BM_Blur<k::omp::gaussian_blur>)->Name("gaussian_blur/omp");
BENCHMARK(BM_AreaResample<k::serial::area_resample>)->Name("area_resample/serial");
BENCHMARK(BM_AreaResample<k::omp::area_resample>)->Name("area_resample/omp");

BENCHMARK_MAIN();
