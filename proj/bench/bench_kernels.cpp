#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "aggsched/kernels.hpp"
#include "aggsched/optimizer_rt.hpp"
#include "aggsched/simharness.hpp"

using namespace aggsched;
using kernels::view;

namespace
{

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n);
    for (auto& x : v)
        x = g(rng);
    return v;
}

// Row pattern of a pooled window problem: a handful of entries per row.
CsrMatrix window_like(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> col(0, cols - 1);
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (int k = 0; k < 4; ++k)
            t.emplace_back(static_cast<int>(i), static_cast<int>(col(rng)), 1.0 + k);
    CsrMatrix a(rows, cols);
    a.setFromTriplets(t.begin(), t.end());
    return a;
}

template <Exec E>
void BM_spmv(benchmark::State& state)
{
    const Eigen::Index m = state.range(0);
    const CsrMatrix a = window_like(m, m / 2, 1);
    const Eigen::VectorXd x = random_vector(m / 2, 2);
    Eigen::VectorXd y(m);
    for (auto _ : state)
    {
        kernels::spmv(E, a, view(x), view(y));
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * a.nonZeros());
}

template <Exec E>
void BM_constraint_step(benchmark::State& state)
{
    const Eigen::Index m = state.range(0);
    const Eigen::VectorXd nu = random_vector(m, 3), lo = random_vector(m, 4);
    const Eigen::VectorXd hi = lo.array() + 1.0, rho = Eigen::VectorXd::Constant(m, 0.1);
    Eigen::VectorXd z = random_vector(m, 5), y = random_vector(m, 6), dy(m);
    for (auto _ : state)
    {
        kernels::constraint_step(E, {view(nu), view(lo), view(hi), view(rho), view(z), view(y), view(dy), 1.6});
        benchmark::DoNotOptimize(z.data());
    }
    state.SetItemsProcessed(state.iterations() * m);
}

template <Exec E>
void BM_inf_norm(benchmark::State& state)
{
    const Eigen::VectorXd v = random_vector(state.range(0), 7);
    for (auto _ : state)
        benchmark::DoNotOptimize(kernels::inf_norm(E, view(v)));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Exec E>
void BM_second_moment(benchmark::State& state)
{
    std::vector<Eigen::VectorXd> samples;
    for (int s = 0; s < state.range(0); ++s)
        samples.push_back(random_vector(96, 100 + s));
    for (auto _ : state)
        benchmark::DoNotOptimize(kernels::second_moment(E, samples).data());
}

// One real-time window of the reference day (N prosumers), end to end.
template <Exec E>
void BM_rt_window(benchmark::State& state)
{
    ExperimentConfig cfg;
    cfg.n_prosumers = static_cast<int>(state.range(0));
    const ExperimentBundle b = simulate(cfg);
    const DayInputs in = day_inputs(b);
    MpcState start;
    MpcOptions before;
    before.last_hour = 11;
    run_mpc(in, before, &start);
    MpcOptions opt;
    opt.last_hour = 12;
    opt.warm_start = false;
    opt.settings.exec = E;
    for (auto _ : state)
    {
        MpcState s = start;
        s.warm.reset();
        benchmark::DoNotOptimize(run_mpc(in, opt, &s).iterations.data());
    }
}

} // namespace

BENCHMARK(BM_spmv<Exec::serial>)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);
BENCHMARK(BM_spmv<Exec::parallel>)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);
BENCHMARK(BM_constraint_step<Exec::serial>)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);
BENCHMARK(BM_constraint_step<Exec::parallel>)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);
BENCHMARK(BM_inf_norm<Exec::serial>)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);
BENCHMARK(BM_inf_norm<Exec::parallel>)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);
BENCHMARK(BM_second_moment<Exec::serial>)->Arg(500)->Arg(5000);
BENCHMARK(BM_second_moment<Exec::parallel>)->Arg(500)->Arg(5000);
BENCHMARK(BM_rt_window<Exec::serial>)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rt_window<Exec::parallel>)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
