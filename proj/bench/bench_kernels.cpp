#include <benchmark/benchmark.h>

#include "subslot/report.hpp"

using namespace subslot;

namespace {

BeliefModel bench_belief(int subslots) {
    BeliefModel b;
    b.sigma = 1e-4;
    b.beta_halfspread = 5e-6;
    b.basis_std = 0.4;
    b.basis_persistence = 0.7;
    b.reference_mid = 3000;
    b.subslots = subslots;
    return b;
}

void table_serial(benchmark::State& state) {
    AgentParams p;
    p.n_paths = static_cast<int>(state.range(0));
    const auto b = bench_belief(12);
    for (auto _ : state) benchmark::DoNotOptimize(build_fallback_table_serial(p, b, TradeDirection::buy_dex, 1));
}

void table_omp(benchmark::State& state) {
    AgentParams p;
    p.n_paths = static_cast<int>(state.range(0));
    const auto b = bench_belief(12);
    for (auto _ : state) benchmark::DoNotOptimize(build_fallback_table_omp(p, b, TradeDirection::buy_dex, 1));
}

MatrixConfig bench_matrix() {
    MatrixConfig c;
    c.seeds = {1, 2};
    c.slots = 200;
    return c;
}

void matrix_serial(benchmark::State& state) {
    const auto c = bench_matrix();
    for (auto _ : state) benchmark::DoNotOptimize(run_matrix(c, false));
}

void matrix_omp(benchmark::State& state) {
    const auto c = bench_matrix();
    for (auto _ : state) benchmark::DoNotOptimize(run_matrix(c, true));
}

}  // namespace

BENCHMARK(table_serial)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(table_omp)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(matrix_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(matrix_omp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
