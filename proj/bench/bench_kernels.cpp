// Copyright Contributors to the rigsplat project
// SPDX-License-Identifier: Apache-2.0

// Parallel kernels against their serial references.

#include "rigsplat/check.hpp"
#include "rigsplat/skinning.hpp"
#include "rigsplat/synthetic.hpp"
#include "rigsplat/trainer.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace rigsplat;

std::vector<SplattedGaussian> scene(int n, int size) {
    std::mt19937_64 rng(42);
    return random_splats(rng, n, size, size);
}

void BM_RenderTiled(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto splats = scene(n, 128);
    const auto cam = pixel_camera(128, 128);
    for (auto _ : state) benchmark::DoNotOptimize(render(splats, cam));
    state.SetItemsProcessed(state.iterations() * n);
}

void BM_RenderBruteForce(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto splats = scene(n, 128);
    const auto cam = pixel_camera(128, 128);
    for (auto _ : state) benchmark::DoNotOptimize(render_brute_force(splats, cam));
    state.SetItemsProcessed(state.iterations() * n);
}

const RiggedTemplate& rig() {
    static const RiggedTemplate t = make_synthetic_rig(0);
    return t;
}

GaussianSet points(int n) {
    std::mt19937_64 rng(3);
    return initialize(rig(), n, rng).gaussians;
}

void BM_SkinFieldGrid(benchmark::State& state) {
    const auto g = points(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(build_skin_field(g, rig(), {}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SkinFieldSerial(benchmark::State& state) {
    const auto g = points(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(build_skin_field_serial(g, rig(), {}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_RenderTiled)->Arg(100)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderBruteForce)->Arg(100)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SkinFieldGrid)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SkinFieldSerial)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
