#include <benchmark/benchmark.h>

#include "longfuse/estimators.hpp"
#include "longfuse/inference.hpp"
#include "longfuse/simulation.hpp"

using namespace longfuse;

static void BM_NuisanceAssembly(benchmark::State& state) {
  const auto data = sim::generate(sim::SimCase::by_id(1), 200, 500, 30);
  for (auto _ : state) {
    benchmark::DoNotOptimize(assemble(data));
  }
}
BENCHMARK(BM_NuisanceAssembly);

static void BM_DrEstimate(benchmark::State& state) {
  const auto data = sim::generate(sim::SimCase::by_id(1), 200, 500, 30);
  const auto nuis = assemble(data);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_dr(data, nuis));
  }
}
BENCHMARK(BM_DrEstimate);

static void BM_FullSuiteWithPluginSe(benchmark::State& state) {
  const auto data = sim::generate(sim::SimCase::by_id(1), 200, 500, 30);
  SuiteConfig cfg;
  cfg.with_plugin_se = true;
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_points(data, cfg));
  }
}
BENCHMARK(BM_FullSuiteWithPluginSe);

static void BM_Bootstrap200(benchmark::State& state) {
  const auto data = sim::generate(sim::SimCase::by_id(1), 100, 500, 30);
  SuiteConfig cfg;
  cfg.estimators = {EstimatorKind::dr};
  BootstrapConfig bcfg;
  bcfg.b = 200;
  bcfg.seed = 1;
  bcfg.threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_replicates(data, cfg, bcfg));
  }
}
BENCHMARK(BM_Bootstrap200);
