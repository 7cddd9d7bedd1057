// Serial reference vs OpenMP kernels. Thread count comes from
// OMP_NUM_THREADS / UCOLOR_THREADS as usual.

#include <benchmark/benchmark.h>

#include <cstdlib>
#include <vector>

#include "ucolor/kernels.hpp"
#include "ucolor/net.hpp"
#include "ucolor/rng.hpp"

namespace k = ucolor::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  ucolor::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// args: channels in = out, side
template <bool Parallel>
void BM_conv_forward(benchmark::State& st) {
  const std::size_t c = st.range(0), s = st.range(1);
  const k::Dims d{c, s, s};
  const auto in = noise(d.size(), 1), w = noise(c * c * 9, 2), b = noise(c, 3);
  std::vector<double> out(d.size());
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::conv3x3_forward(in, d, w, b, c, out);
    } else {
      k::serial::conv3x3_forward(in, d, w, b, c, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * d.size() * c * 9);
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& st) {
  const std::size_t c = st.range(0), s = st.range(1);
  const k::Dims d{c, s, s};
  const auto in = noise(d.size(), 1), w = noise(c * c * 9, 2), g = noise(d.size(), 4);
  std::vector<double> gi(d.size()), gw(c * c * 9), gb(c);
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::conv3x3_backward_input(g, c, w, d, gi);
      k::conv3x3_backward_params(g, c, in, d, gw, gb);
    } else {
      k::serial::conv3x3_backward_input(g, c, w, d, gi);
      k::serial::conv3x3_backward_params(g, c, in, d, gw, gb);
    }
    benchmark::DoNotOptimize(gi.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_pool_upsample(benchmark::State& st) {
  const std::size_t c = st.range(0), s = st.range(1);
  const k::Dims d{c, s, s};
  const auto in = noise(d.size(), 5);
  std::vector<double> pooled(c * k::pooled(s) * k::pooled(s)), up(c * 4 * s * s);
  std::vector<std::uint32_t> arg(pooled.size());
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::max_pool2_forward(in, d, pooled, arg);
      k::upsample2_forward(in, d, up);
    } else {
      k::serial::max_pool2_forward(in, d, pooled, arg);
      k::serial::upsample2_forward(in, d, up);
    }
    benchmark::DoNotOptimize(up.data());
  }
}

template <bool Parallel>
void BM_window_min(benchmark::State& st) {
  const std::size_t s = st.range(0), patch = st.range(1);
  const auto plane = noise(s * s, 6);
  std::vector<double> out(s * s);
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::window_min(plane, s, s, patch, out);
    } else {
      k::serial::window_min(plane, s, s, patch, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// Whole desk-model inference, parallel kernels only.
void BM_enhance(benchmark::State& st) {
  ucolor::net::ModelConfig cfg;
  cfg.base_width = st.range(0);
  const std::size_t s = st.range(1);
  const auto w = ucolor::net::init_weights(cfg, 1);
  ucolor::Image img(s, s);
  ucolor::Rng rng(7);
  for (double& v : img.pixels) v = rng.uniform();
  for (auto _ : st) benchmark::DoNotOptimize(ucolor::net::enhance(img, cfg, w));
}

}  // namespace

BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/serial")->Args({16, 64})->Args({32, 128})->UseRealTime();
BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/omp")->Args({16, 64})->Args({32, 128})->UseRealTime();
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/serial")->Args({16, 64})->UseRealTime();
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/omp")->Args({16, 64})->UseRealTime();
BENCHMARK(BM_pool_upsample<false>)->Name("pool_upsample/serial")->Args({32, 128})->UseRealTime();
BENCHMARK(BM_pool_upsample<true>)->Name("pool_upsample/omp")->Args({32, 128})->UseRealTime();
BENCHMARK(BM_window_min<false>)->Name("window_min/serial")->Args({256, 15})->UseRealTime();
BENCHMARK(BM_window_min<true>)->Name("window_min/omp")->Args({256, 15})->UseRealTime();
BENCHMARK(BM_enhance)->Name("enhance")->Args({8, 64})->Unit(benchmark::kMillisecond)->UseRealTime();

int main(int argc, char** argv) {
  if (const char* env = std::getenv("UCOLOR_THREADS")) k::set_threads(std::atoi(env));
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
