#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "moecarve/assignment.hpp"
#include "moecarve/carve.hpp"
#include "moecarve/matrix.hpp"
#include "moecarve/profile.hpp"
#include "moecarve/runtime.hpp"

namespace {

using namespace moecarve;

double uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (float& v : m.data()) {
        v = static_cast<float>((uniform(rng) * 2.0 - 1.0) * scale);
    }
    return m;
}

DenseFfn random_ffn(std::mt19937_64& rng, std::size_t d, std::size_t d_h) {
    DenseFfn ffn;
    ffn.w_up = random_matrix(rng, d, d_h, 0.5);
    ffn.w_gate = random_matrix(rng, d, d_h, 0.5);
    ffn.w_down = random_matrix(rng, d_h, d, 0.5);
    return ffn;
}

void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const Matrix a = random_matrix(rng, n, n, 1.0);
    const Matrix b = random_matrix(rng, n, n, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(bm_matmul)->Arg(16)->Arg(64)->Arg(128);

void bm_solve_lap(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(2);
    std::vector<double> costs(n * n);
    for (double& c : costs) {
        c = uniform(rng);
    }
    const CostMatrix cost(n, costs);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_lap(cost));
    }
}
BENCHMARK(bm_solve_lap)->Arg(8)->Arg(32)->Arg(128);

void bm_dense_forward(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const DenseFfn ffn = random_ffn(rng, 64, 256);
    const Matrix x = random_matrix(rng, 1, 64, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dense_forward(ffn, x.row(0)));
    }
}
BENCHMARK(bm_dense_forward);

void bm_moe_forward(benchmark::State& state) {
    std::mt19937_64 rng(3); // same dense network as bm_dense_forward
    const DenseFfn ffn = random_ffn(rng, 64, 256);
    const Matrix x = random_matrix(rng, 1, 64, 1.0);
    const CalibrationBatch batch{random_matrix(rng, 64, 64, 1.0)};
    const ActivationProfile profile = build_profile(batch, ffn, 10, false);
    MoeConfig config;
    config.n_experts = 8;
    config.n_shared = 1;
    config.n_routed = 7;
    config.n_active = 1;
    config.expert_size = 32;
    config.k_a = 10;
    const CarveResult result = carve_moe(ffn, profile, config);
    for (auto _ : state) {
        benchmark::DoNotOptimize(moe_forward(result.moe, x.row(0), GateMode::binary));
    }
}
BENCHMARK(bm_moe_forward);

void bm_carve(benchmark::State& state) {
    std::mt19937_64 rng(4);
    const DenseFfn ffn = random_ffn(rng, 32, 128);
    const CalibrationBatch batch{random_matrix(rng, 128, 32, 1.0)};
    const ActivationProfile profile = build_profile(batch, ffn, 10, false);
    MoeConfig config;
    config.n_experts = 8;
    config.n_shared = 1;
    config.n_routed = 7;
    config.n_active = 2;
    config.expert_size = 16;
    config.k_a = 10;
    for (auto _ : state) {
        benchmark::DoNotOptimize(carve_moe(ffn, profile, config));
    }
}
BENCHMARK(bm_carve);

} // namespace

BENCHMARK_MAIN();
