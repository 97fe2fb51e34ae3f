#include <benchmark/benchmark.h>

#include "recur/estimators.hpp"
#include "recur/inference.hpp"
#include "recur/simulation.hpp"

namespace {

const recur::LatticeScenario& scenario() {
  static const auto sc = std::get<recur::LatticeScenario>(recur::load_scenario(RECUR_SCENARIO));
  return sc;
}

recur::EstimationConfig config() {
  recur::EstimationConfig cfg;
  cfg.grid = recur::LandmarkGrid(scenario().landmarks, scenario().tau);
  cfg.seed = 1;
  return cfg;
}

void BM_Simulate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(recur::simulate(scenario(), n, 3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Simulate)->Arg(1000)->Arg(10000);

void BM_CrossFit(benchmark::State& state) {
  const auto sim = recur::simulate(scenario(), static_cast<std::size_t>(state.range(0)), 3);
  const std::vector<int> arms{0, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(recur::CrossFitNuisance::cross_fit(sim.observed, 5, 1, arms,
                                                                scenario().landmarks, {}));
  }
}
BENCHMARK(BM_CrossFit)->Arg(2000)->Arg(20000);

void BM_OneStep(benchmark::State& state) {
  const auto sim = recur::simulate(scenario(), static_cast<std::size_t>(state.range(0)), 3);
  const auto cfg = config();
  for (auto _ : state) benchmark::DoNotOptimize(recur::estimate(sim.observed, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OneStep)->Arg(2000)->Arg(20000);

void BM_Bootstrap(benchmark::State& state) {
  const auto sim = recur::simulate(scenario(), 2000, 3);
  const auto cfg = config();
  const auto base = recur::estimate(sim.observed, cfg);
  recur::BootstrapOptions opts;
  opts.replicates = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(recur::bootstrap_covariance(sim.observed, cfg, base, opts));
}
BENCHMARK(BM_Bootstrap)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_Oracle(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(recur::oracle_truth(scenario(), scenario().grid));
}
BENCHMARK(BM_Oracle);

}  // namespace

BENCHMARK_MAIN();
