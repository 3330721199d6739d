#include <benchmark/benchmark.h>

#include "frisbi/numeric/rng.hpp"
#include "frisbi/ot/ot.hpp"

using frisbi::numeric::Matrix;
using frisbi::numeric::RngStream;

namespace {

Matrix embedding_cost(std::size_t n, std::size_t m, std::uint64_t seed) {
  RngStream rng(seed, frisbi::numeric::StreamId::kTest);
  Matrix a(n, 16), b(m, 16);
  for (double& v : a.flat()) v = rng.uniform(-2.0, 2.0);
  for (double& v : b.flat()) v = rng.uniform(-2.0, 2.0);
  return frisbi::numeric::pairwise_sqdist(a, b);
}

}  // namespace

static void BM_ClosedFormPlan(benchmark::State& state) {
  const Matrix cost = embedding_cost(328, 1200, 1);
  for (auto _ : state) {
    auto plan = frisbi::ot::closed_form_plan(cost, 0.5);
    benchmark::DoNotOptimize(plan.p.data());
  }
}
BENCHMARK(BM_ClosedFormPlan);

static void BM_SinkhornSingleSampleSolve(benchmark::State& state) {
  // The inner solve of the single-sample RoPE baseline.
  const Matrix cost = embedding_cost(1001, 1000, 2);
  for (auto _ : state) {
    auto plan = frisbi::ot::sinkhorn_balanced(cost, 0.5, 10000, 1e-9);
    benchmark::DoNotOptimize(plan.p.data());
    state.counters["iterations"] = static_cast<double>(plan.iterations);
  }
}
BENCHMARK(BM_SinkhornSingleSampleSolve)->Unit(benchmark::kMillisecond);

static void BM_SemibalancedSolve(benchmark::State& state) {
  const Matrix cost = embedding_cost(16, 32, 3);
  frisbi::ot::OtParams params;
  params.gamma = 0.5;
  params.rho = static_cast<double>(state.range(0));
  for (auto _ : state) {
    auto plan = frisbi::ot::semibalanced_solve(cost, params);
    benchmark::DoNotOptimize(plan.p.data());
  }
}
BENCHMARK(BM_SemibalancedSolve)->Arg(0)->Arg(1)->Arg(1000000);

BENCHMARK_MAIN();
