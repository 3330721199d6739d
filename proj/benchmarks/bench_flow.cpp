#include <benchmark/benchmark.h>

#include "frisbi/nets/flow.hpp"
#include "frisbi/nets/mlp.hpp"
#include "frisbi/numeric/rng.hpp"
#include "frisbi/simulate/pendulum.hpp"

using frisbi::numeric::Matrix;
using frisbi::numeric::RngStream;

namespace {

struct Fixture {
  frisbi::nets::FlowModel flow;
  Matrix thetas, ctx;

  explicit Fixture(std::size_t rows) {
    RngStream rng(7, frisbi::numeric::StreamId::kTest);
    const auto box = frisbi::sim::pendulum_prior_box();
    flow = frisbi::nets::FlowModel::make(box, frisbi::nets::kEmbedDim, rng);
    thetas = Matrix(rows, 2);
    ctx = Matrix(rows, frisbi::nets::kEmbedDim);
    for (std::size_t i = 0; i < rows; ++i) {
      thetas(i, 0) = rng.uniform(box.lo[0] + 0.1, box.hi[0] - 0.1);
      thetas(i, 1) = rng.uniform(box.lo[1] + 0.1, box.hi[1] - 0.1);
      for (std::size_t c = 0; c < frisbi::nets::kEmbedDim; ++c) ctx(i, c) = rng.uniform(-1.0, 1.0);
    }
  }
};

}  // namespace

static void BM_FlowLogProbBatch(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Matrix lp = f.flow.log_prob_rows(f.thetas, f.ctx);
    benchmark::DoNotOptimize(lp.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FlowLogProbBatch)->Arg(1024)->Arg(30000)->Unit(benchmark::kMillisecond);

static void BM_FlowSampleBatch(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  RngStream rng(9, frisbi::numeric::StreamId::kTest);
  for (auto _ : state) {
    Matrix draws = f.flow.sample_rows(f.ctx, rng);
    benchmark::DoNotOptimize(draws.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FlowSampleBatch)->Arg(1024)->Arg(30000)->Unit(benchmark::kMillisecond);

static void BM_EncoderForward(benchmark::State& state) {
  RngStream rng(11, frisbi::numeric::StreamId::kTest);
  auto enc = frisbi::nets::MlpEncoder::make_default(rng);
  Matrix x(static_cast<std::size_t>(state.range(0)), 100);
  for (double& v : x.flat()) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    Matrix z = enc.forward(x);
    benchmark::DoNotOptimize(z.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderForward)->Arg(128)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
