#include <benchmark/benchmark.h>

#include "longfuse/simulation.hpp"

using namespace longfuse;

static void BM_GenerateCase1(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sim::generate(sim::SimCase::by_id(1), 200, 500, ++seed));
  }
}
BENCHMARK(BM_GenerateCase1);

static void BM_MonteCarloReplicate(benchmark::State& state) {
  sim::McConfig cfg;
  cfg.sim_case = sim::SimCase::by_id(1);
  cfg.n1 = 200;
  cfg.n0 = 500;
  cfg.reps = 10;
  cfg.seed = 3;
  cfg.threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim::run_monte_carlo(cfg));
  }
}
BENCHMARK(BM_MonteCarloReplicate);
