#include <benchmark/benchmark.h>

#include "mfl/diagnostics.hpp"
#include "mfl/ensemble.hpp"
#include "mfl/force.hpp"

namespace {

mfl::ParticleEnsemble cloud(std::size_t N, int d)
{
    mfl::InitialDensitySpec spec;
    spec.kind = mfl::DensityKind::ProductGaussianTruncated;
    return mfl::quietStartInit(spec, N, d, 1).ensemble;
}

void BM_FieldsExact(benchmark::State& state)
{
    auto e = cloud(static_cast<std::size_t>(state.range(0)), 2);
    const mfl::ForceKernel k{0.5, 1, 0.0};
    for (auto _ : state)
        benchmark::DoNotOptimize(mfl::fieldsExact(e, k));
    state.SetComplexityN(static_cast<long>(e.size()));
}
BENCHMARK(BM_FieldsExact)->Arg(256)->Arg(1296)->Arg(4096)->Complexity(benchmark::oNSquared);

void BM_DiscreteLinf(benchmark::State& state)
{
    auto e = cloud(static_cast<std::size_t>(state.range(0)), 2);
    const double eps = mfl::epsilonScale(1.0, e.size(), 2);
    for (auto _ : state)
        benchmark::DoNotOptimize(mfl::discreteLinf(e, eps, 8));
}
BENCHMARK(BM_DiscreteLinf)->Arg(256)->Arg(1296)->Arg(4096);

void BM_MinPhaseSeparation(benchmark::State& state)
{
    auto e = cloud(static_cast<std::size_t>(state.range(0)), 2);
    const double eps = mfl::epsilonScale(1.0, e.size(), 2);
    for (auto _ : state)
        benchmark::DoNotOptimize(mfl::minPhaseSeparation(e, eps));
}
BENCHMARK(BM_MinPhaseSeparation)->Arg(256)->Arg(1296)->Arg(4096);

} // namespace
BENCHMARK_MAIN();
