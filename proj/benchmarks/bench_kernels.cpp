#include <benchmark/benchmark.h>

#include "dosesens/attributable.hpp"
#include "dosesens/design_sensitivity.hpp"
#include "dosesens/sharp_null.hpp"

using namespace dosesens;

namespace {

MatchedDesign synthetic(std::size_t I) {
  DgpSpec dgp;
  dgp.f = ResponseCurve::parse("power:2");
  return sample_dgp(dgp, I, 11);
}

void BM_NormalWorstCase(benchmark::State& state) {
  const auto d = synthetic(static_cast<std::size_t>(state.range(0)));
  const SensitivityParameter gp(0.5);
  for (auto _ : state) benchmark::DoNotOptimize(worst_case_p_normal(d, StatisticSpec::perm_t(), gp).p_worst);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NormalWorstCase)->Arg(500)->Arg(2000)->Arg(10000);

void BM_ExactMc(benchmark::State& state) {
  const auto d = synthetic(500);
  const SensitivityParameter gp(0.5);
  const McOptions mc{static_cast<std::size_t>(state.range(0)), 3};
  for (auto _ : state) benchmark::DoNotOptimize(worst_case_p_exact_mc(d, StatisticSpec::perm_t(), gp, mc).p_worst);
}
BENCHMARK(BM_ExactMc)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_PhiSampler(benchmark::State& state) {
  DgpSpec dgp;
  dgp.f = ResponseCurve::parse("power:0.25");
  const PhiSampler s(dgp, StatisticSpec::perm_t(), static_cast<std::size_t>(state.range(0)), 5);
  double g = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(s.phi(g).estimate);
    g += 1e-6;
  }
}
BENCHMARK(BM_PhiSampler)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_TaeBranchAndBound(benchmark::State& state) {
  const auto d = synthetic(static_cast<std::size_t>(state.range(0)));
  const auto inst = TaeInstance::make(d, 0.5, 0.0, 0.05, SensitivityParameter(0.3));
  const auto prob = build_tae_problem(d, inst);
  for (auto _ : state) benchmark::DoNotOptimize(test_tae_bnb(prob, inst.observed_count / 2, false).decision);
}
BENCHMARK(BM_TaeBranchAndBound)->Arg(20)->Arg(60)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
