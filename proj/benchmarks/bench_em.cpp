#include <map>
#include <memory>

#include <benchmark/benchmark.h>

#include "serec/exposure_boost.hpp"
#include "serec/exposure_popularity.hpp"
#include "serec/exposure_regular.hpp"
#include "serec/metrics.hpp"
#include "serec/synthetic.hpp"

using namespace serec;

namespace {

struct Fixture {
  SyntheticData data;
  FactorModel model;
  Posterior posterior = Posterior::dense(Matrix());

  explicit Fixture(Index n) {
    SyntheticSpec spec;
    spec.n_users = spec.n_items = n;
    spec.base_exposure = 0.1;
    spec.social_density = 10.0 / static_cast<double>(n);
    spec.s_coeff = 0.3;
    data = generate(spec);
    TrainConfig cfg;
    cfg.k = 20;
    cfg.max_em_iters = 1;
    cfg.threads = 1;
    auto pop = PopularityExposure::from_popularity(data.clicks);
    model = fit(data.clicks, pop, cfg).model;
    posterior = e_step(data.clicks, model, pop);
  }
};

const Fixture& fixture(Index n) {
  static std::map<Index, std::unique_ptr<Fixture>> cache;
  auto& f = cache[n];
  if (!f) f = std::make_unique<Fixture>(n);
  return *f;
}

void BM_EStep(benchmark::State& state) {
  set_thread_count(1);
  const Fixture& f = fixture(state.range(0));
  auto pop = PopularityExposure::from_popularity(f.data.clicks);
  for (auto _ : state) benchmark::DoNotOptimize(e_step(f.data.clicks, f.model, pop).values().data());
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_UserFactorUpdate(benchmark::State& state) {
  set_thread_count(1);
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(update_user_factors(f.data.clicks, f.posterior, f.model).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BoostUpdate(benchmark::State& state) {
  set_thread_count(1);
  const Fixture& f = fixture(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(boost_update_mu(f.posterior.values(), f.data.graph, 5.0, 1.0, 1.0).data());
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_RegularSgd(benchmark::State& state) {
  set_thread_count(1);
  const Fixture& f = fixture(state.range(0));
  RegularHyper h;
  h.n_sgd_epochs = 1;
  for (auto _ : state) {
    RegularExposure reg(f.data.clicks, f.data.graph, h, 1);
    reg.update(f.data.clicks, f.posterior, f.model, 0);
    benchmark::DoNotOptimize(reg.state().x.data());
  }
}

void BM_Evaluate(benchmark::State& state) {
  set_thread_count(1);
  const Fixture& f = fixture(state.range(0));
  const DatasetSplit parts = split(f.data.clicks, {}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(f.model, parts, EvalTarget::test, {10, 50, 100}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_EStep)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_UserFactorUpdate)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BoostUpdate)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RegularSgd)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
