#include <doctest.h>

#include <cmath>

#include "aggsched/simharness.hpp"
#include "test_util.hpp"

using namespace aggsched;

TEST_CASE("real-time prices without spikes stay within six sigma of the scaled day-ahead price")
{
    const Eigen::VectorXd base = default_price_profile(false);
    PriceNoise noise;
    noise.spike_probability = 0.0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed)
    {
        const SynthPrices p = synth_prices(seed, base, noise);
        REQUIRE(p.p_da.size() == 24);
        REQUIRE(p.p_rt.size() == 96);
        for (int k = 0; k < 96; ++k)
            CHECK(std::abs(p.p_rt[k] - 0.93 * p.p_da[k / 4]) <= 6.0 * noise.rt_sigma);
        CHECK(p.p_da.minCoeff() >= 0.0);
        CHECK(p.p_da.maxCoeff() <= 100.0);
    }
}

TEST_CASE("mean real-time to day-ahead ratio over many days")
{
    const Eigen::VectorXd base = default_price_profile(false);
    double rt = 0.0, da = 0.0;
    for (std::uint64_t seed = 1; seed <= 400; ++seed)
    {
        const SynthPrices p = synth_prices(seed, base);
        rt += p.p_rt.mean();
        da += p.p_da.mean();
    }
    CHECK(std::abs(rt / da - 0.93) <= 0.02);
}

TEST_CASE("synthetic prices are deterministic in the seed")
{
    const Eigen::VectorXd base = default_price_profile(true);
    CHECK(synth_prices(9, base).p_rt == synth_prices(9, base).p_rt);
    CHECK(synth_prices(9, base).p_rt != synth_prices(10, base).p_rt);
}

TEST_CASE("config validation and hashing")
{
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    ExperimentConfig other = c;
    other.out_dir = "elsewhere";
    CHECK(fnv1a64(c.canonical()) == fnv1a64(other.canonical()));
    other.seed = 2;
    CHECK(c.canonical() != other.canonical());

    ExperimentConfig bad = c;
    bad.n_prosumers = 0;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.regime = "uk";
    bad.delta_plus = 1.0;
    bad.delta_minus = 2.0;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.lambda_rt = -1.0;
    CHECK_THROWS(bad.validate());
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
}

TEST_CASE("the day-ahead stage does not depend on the real-time seed")
{
    ExperimentConfig a;
    a.n_prosumers = 6;
    a.seed = 1;
    ExperimentConfig b = a;
    b.seed = 99;
    const ExperimentBundle ra = simulate(a);
    const ExperimentBundle rb = simulate(b);
    CHECK(ra.da.g == rb.da.g);
    CHECK(ra.da_cleared.values == rb.da_cleared.values);
    CHECK(ra.rt_realized.values != rb.rt_realized.values);
}

TEST_CASE("bundle layout")
{
    ExperimentConfig c;
    c.n_prosumers = 4;
    const ExperimentBundle b = simulate(c);
    test::TempDir dir;
    write_bundle(b, dir.path());
    for (const char* f : {"da_schedule.csv", "da_summary.json", "rt_trace.csv", "rt_trace_prosumers.csv",
                          "rt_hours.csv", "ledger.json", "meta.json"})
        CHECK(std::filesystem::exists(dir / f));
    CHECK(std::filesystem::is_directory(dir / "plots"));
    CHECK(std::filesystem::is_directory(dir / "pool"));
    const auto pool = read_pool(dir / "pool", b.grid);
    CHECK(pool.size() == 4);
}

TEST_CASE("real-time risk weight changes the real-time cost")
{
    ExperimentConfig c;
    c.n_prosumers = 10;
    c.lambda_rt = 1.0;
    const ExperimentBundle risk_averse = simulate(c);
    c.lambda_rt = 0.0;
    const ExperimentBundle neutral = simulate(c);
    CHECK(risk_averse.da.g == neutral.da.g);
    CHECK(risk_averse.ledger.rt_total() != neutral.ledger.rt_total());
    MESSAGE("rt total: lambda_rt=1 ", risk_averse.ledger.rt_total(), " $, lambda_rt=0 ", neutral.ledger.rt_total(), " $");
}
