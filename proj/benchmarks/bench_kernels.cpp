#include <benchmark/benchmark.h>

#include "hybridct/design_eval.hpp"
#include "hybridct/selection_rules.hpp"
#include "hybridct/sim_engine.hpp"

using namespace hybridct;

namespace {

HistoricalPool synthetic_pool(int k, int n) {
  HistoricalPool pool;
  RngStream rng = RngStream::keyed(7, k, n, 0);
  for (int i = 1; i <= k; ++i) {
    pool.trials.push_back(HistoricalTrial{i, rng.next_binomial(n, 0.2), n});
  }
  return pool;
}

void SuperioritySeries(benchmark::State& state) {
  const int y_t = static_cast<int>(state.range(0));
  const BetaParams x{1.0 + y_t, 1.0 + 2400 - y_t};
  const BetaParams y{130.0, 480.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(beta_superiority(x, y));
  }
}
BENCHMARK(SuperioritySeries)->Arg(24)->Arg(240)->Arg(2400);

void BoundaryLarge(benchmark::State& state) {
  const int n_total = static_cast<int>(state.range(0));
  const int n_c = n_total / 5;
  BetaMixture prior;
  prior.weights = {0.2, 0.8};
  prior.components = {BetaParams{1, 1}, BetaParams{13.7, 41.4}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(boundary(prior, n_total - n_c, n_c, 0.975));
  }
}
BENCHMARK(BoundaryLarge)->Arg(30)->Arg(300)->Arg(3000)->Unit(benchmark::kMillisecond);

void OptimalPowerEnumeration(benchmark::State& state) {
  const HistoricalPool pool = synthetic_pool(static_cast<int>(state.range(0)), 30);
  PlanningAssumptions plan;
  plan.n_t = 30;
  plan.n_c = 30;
  for (auto _ : state) {
    benchmark::DoNotOptimize(optimal_power_select(pool, plan, false));
  }
}
BENCHMARK(OptimalPowerEnumeration)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void MapFitCoarse(benchmark::State& state) {
  const HistoricalPool pool = synthetic_pool(static_cast<int>(state.range(0)), 30);
  const HierarchicalHyperPrior hyper;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_map_prior(pool, hyper, MapFitOptions::coarse()));
  }
}
BENCHMARK(MapFitCoarse)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void ReplicateAnalysis(benchmark::State& state) {
  ScenarioConfig cfg;
  cfg.id = "bench";
  cfg.k = 8;
  cfg.replicates = 1;
  BayesConfig bayes;
  bayes.fit_options = MapFitOptions::coarse();
  int rep = 0;
  for (auto _ : state) {
    const Replicate r = generate_replicate(cfg, rep++);
    benchmark::DoNotOptimize(analyze_bayes(r.pool, r.data, bayes, false));
  }
}
BENCHMARK(ReplicateAnalysis)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
