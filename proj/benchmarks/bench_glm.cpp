#include <benchmark/benchmark.h>

#include "longfuse/glm.hpp"
#include "longfuse/rng.hpp"

using namespace longfuse;

namespace {

struct LogisticProblem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

LogisticProblem make_problem(int n, int d) {
  Rng rng(17);
  LogisticProblem p;
  p.x.resize(n, d);
  p.y.resize(n);
  for (int i = 0; i < n; ++i) {
    double eta = 0.2;
    for (int j = 0; j < d; ++j) {
      p.x(i, j) = rng.normal();
      eta += 0.3 * p.x(i, j);
    }
    p.y[i] = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
  }
  return p;
}

}  // namespace

static void BM_LogisticFit(benchmark::State& state) {
  const auto p = make_problem(static_cast<int>(state.range(0)), 4);
  GlmSpec spec;
  spec.family = Family::logistic;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_glm(spec, p.x, p.y));
  }
}
BENCHMARK(BM_LogisticFit)->Arg(500)->Arg(5000);

static void BM_LinearFit(benchmark::State& state) {
  const auto p = make_problem(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_glm(GlmSpec{}, p.x, p.y));
  }
}
BENCHMARK(BM_LinearFit)->Arg(500)->Arg(5000);
