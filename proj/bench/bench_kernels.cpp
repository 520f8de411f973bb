#include <benchmark/benchmark.h>

#include "diae/kernels.hpp"
#include "diae/rng.hpp"

using namespace diae;

// serial reference vs OpenMP/GEMM conv paths at the UNet's layer shapes
static void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({16, 32, 32, 32})->Args({16, 64, 16, 64})->Args({16, 128, 8, 128});
}

template <bool kSerial>
static void BM_conv2d_fwd(benchmark::State& state) {
    const int n = int(state.range(0)), ci = int(state.range(1)),
              s = int(state.range(2)), co = int(state.range(3));
    const auto d = kern::ConvDims::make(n, ci, s, s, co, 3, 1);
    Rng rng(1);
    Tensor<float> x({n, ci, s, s}), w({co, ci, 3, 3}), b({co}), y({n, co, s, s});
    for (auto& v : x.data) v = float(rng.normal());
    for (auto& v : w.data) v = 0.1f * float(rng.normal());
    exec().serial_reference = kSerial;
    for (auto _ : state) {
        kern::conv2d_fwd(d, x.ptr(), w.ptr(), b.ptr(), y.ptr());
        benchmark::DoNotOptimize(y.data.data());
        benchmark::ClobberMemory();
    }
    exec().serial_reference = false;
    state.SetItemsProcessed(int64_t(state.iterations()) * 2 * n * co * ci * 9 * s * s);
}

BENCHMARK_TEMPLATE(BM_conv2d_fwd, true)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_conv2d_fwd, false)->Apply(conv_args)->Unit(benchmark::kMillisecond);

template <bool kSerial>
static void BM_gemm(benchmark::State& state) {
    const int m = int(state.range(0)), n = int(state.range(1)), k = int(state.range(2));
    Rng rng(2);
    Tensor<float> A({m, k}), B({k, n}), C({m, n});
    for (auto& v : A.data) v = float(rng.normal());
    for (auto& v : B.data) v = float(rng.normal());
    for (auto _ : state) {
        if (kSerial)
            kern::gemm_own(kern::Trans::N, kern::Trans::N, m, n, k, 1.0f, A.ptr(),
                           k, B.ptr(), n, 0.0f, C.ptr(), n, false);
        else
            kern::gemm(kern::Trans::N, kern::Trans::N, m, n, k, 1.0f, A.ptr(), k,
                       B.ptr(), n, 0.0f, C.ptr(), n);
        benchmark::DoNotOptimize(C.data.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * 2 * m * n * k);
}

BENCHMARK_TEMPLATE(BM_gemm, true)->Args({128, 1024, 288})->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_gemm, false)->Args({128, 1024, 288})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
