#include <benchmark/benchmark.h>

#include <random>

#include "fr/losses.hpp"
#include "fr/network.hpp"
#include "fr/ops.hpp"
#include "fr/warp.hpp"

using namespace fr;

namespace {

Tensor rand_tensor(int b, int c, int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(b, c, h, w);
    for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

}  // namespace

static void BM_BackwardWarp(benchmark::State& state) {
    int hw = static_cast<int>(state.range(0));
    Var x = make_const(rand_tensor(1, 3, hw, hw, 1));
    Var phi = make_const(rand_tensor(1, 2, hw, hw, 2, -2.0, 2.0));
    for (auto _ : state) benchmark::DoNotOptimize(backward_warp(x, phi)->value.data());
    state.SetItemsProcessed(state.iterations() * 3L * hw * hw);
}
BENCHMARK(BM_BackwardWarp)->Arg(64)->Arg(128)->Arg(256);

static void BM_Conv3x3(benchmark::State& state) {
    int hw = static_cast<int>(state.range(0));
    Var x = make_const(rand_tensor(1, 8, hw, hw, 3));
    Var w = make_const(rand_tensor(8, 8, 3, 3, 4, -0.3, 0.3));
    Var b = make_const(Tensor(1, 8, 1, 1));
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1)->value.data());
    state.SetItemsProcessed(state.iterations() * 8L * 8 * 9 * hw * hw);
}
BENCHMARK(BM_Conv3x3)->Arg(32)->Arg(64)->Arg(128);

static void BM_Correlation(benchmark::State& state) {
    int hw = static_cast<int>(state.range(0));
    Var f = make_const(rand_tensor(1, 8, hw, hw, 5, -1.0, 1.0));
    Var g = make_const(rand_tensor(1, 8, hw, hw, 6, -1.0, 1.0));
    for (auto _ : state) benchmark::DoNotOptimize(correlation(f, g, 1)->value.data());
}
BENCHMARK(BM_Correlation)->Arg(32)->Arg(64);

static void BM_SpectralAbsMean(benchmark::State& state) {
    int hw = static_cast<int>(state.range(0));
    Var x = make_const(rand_tensor(1, 3, hw, hw, 7, -1.0, 1.0));
    for (auto _ : state) benchmark::DoNotOptimize(spectral_abs_mean(x)->value.data());
}
BENCHMARK(BM_SpectralAbsMean)->Arg(32)->Arg(64);

static void BM_DogExtract(benchmark::State& state) {
    int hw = static_cast<int>(state.range(0));
    Var x = make_const(rand_tensor(1, 3, hw, hw, 8));
    for (auto _ : state) benchmark::DoNotOptimize(dog_extract(x)->value.data());
}
BENCHMARK(BM_DogExtract)->Arg(64)->Arg(128);

static void BM_ForwardDesk(benchmark::State& state) {
    RunConfig cfg = RunConfig::desk_preset();
    Rng prng(9);
    ParamStore ps = init_network_params(cfg, prng);
    Var vi = make_const(rand_tensor(1, 3, 64, 64, 10));
    Var ir = make_const(rand_tensor(1, 3, 64, 64, 11));
    Var f = make_const(rand_tensor(1, 3, 64, 64, 12));
    for (auto _ : state) {
        auto outs = forward(vi, ir, f, ps, cfg);
        benchmark::DoNotOptimize(outs[0].i_out->value.data());
    }
}
BENCHMARK(BM_ForwardDesk)->Unit(benchmark::kMillisecond);

static void BM_ForwardBackwardDesk(benchmark::State& state) {
    RunConfig cfg = RunConfig::desk_preset();
    Rng prng(13);
    ParamStore ps = init_network_params(cfg, prng);
    Var vi = make_const(rand_tensor(1, 3, 64, 64, 14));
    Var ir = make_const(rand_tensor(1, 3, 64, 64, 15));
    Var f = make_const(rand_tensor(1, 3, 64, 64, 16));
    Var gt = make_const(rand_tensor(1, 3, 64, 64, 17));
    auto gts = image_pyramid(gt, cfg.pyramid_depth);
    for (auto _ : state) {
        auto outs = forward(vi, ir, f, ps, cfg);
        LossParts parts = total_loss(outs, gts, cfg.loss_weights);
        backward(parts.total);
        benchmark::DoNotOptimize(parts.total->value.data());
    }
}
BENCHMARK(BM_ForwardBackwardDesk)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
