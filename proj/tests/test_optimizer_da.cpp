#include <doctest.h>

#include <random>

#include "aggsched/optimizer_da.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace aggsched;
using test::flat_prosumer;

namespace
{

Eigen::MatrixXd random_cov(int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 5.0);
    Eigen::MatrixXd b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            b(i, j) = g(rng);
    return b * b.transpose() / n;
}

} // namespace

TEST_CASE("one prosumer, one hour: charge exactly the requirement")
{
    const TimeGrid grid(1, 1);
    const Prosumer p = flat_prosumer(grid, 0, 2.0, 0.5, 5.0, 2.7);
    const DaProblem prob(grid, {p}, Eigen::VectorXd::Constant(1, 50.0), Eigen::MatrixXd::Zero(1, 1), 0.0);
    const DaSolution s = solve_da(prob);
    REQUIRE(s.status == QpStatus::optimal);
    CHECK(s.ev(0, 0) == doctest::Approx(3.0).epsilon(1e-7));
    CHECK(s.g(0, 0) == doctest::Approx(4.5).epsilon(1e-7));
    CHECK(s.price_term == doctest::Approx(50.0 * 4.5 * 1e-3).epsilon(1e-7));
    CHECK(s.aggregation_residual < 1e-9);
    CHECK(s.local_violation < 1e-9);
}

TEST_CASE("risk-neutral schedule charges in the cheapest hours")
{
    const TimeGrid grid(4, 1);
    const Prosumer p = flat_prosumer(grid, 0, 1.0, 0.0, 4.0, 0.9 * 6.0);
    Eigen::VectorXd price(4);
    price << 60, 20, 30, 80;
    const DaSolution s = solve_da(DaProblem(grid, {p}, price, Eigen::MatrixXd::Zero(4, 4), 0.0));
    CHECK(s.ev(0, 1) == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(s.ev(0, 2) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(std::abs(s.ev(0, 0)) < 1e-6);
    CHECK(std::abs(s.ev(0, 3)) < 1e-6);
}

TEST_CASE("raising the risk weight trades price for variance")
{
    const TimeGrid grid(24, 3);
    std::vector<Prosumer> pool;
    for (int i = 0; i < 4; ++i)
        pool.push_back(flat_prosumer(grid, i, 1.0 + 0.3 * i, 0.5, 6.6, 10.0 + 3.0 * i));
    const Eigen::VectorXd price = 40.0 + 15.0 * Eigen::VectorXd::LinSpaced(24, 0.0, 6.0).array().cos();
    const Eigen::MatrixXd cov = random_cov(24, 3);
    double last_risk = kInf, last_price = -kInf;
    for (double lambda : {0.0, 10.0, 100.0, 1000.0, 10000.0})
    {
        const DaSolution s = solve_da(DaProblem(grid, pool, price, cov, lambda));
        CAPTURE(lambda);
        CHECK(s.risk_value <= last_risk * (1.0 + 1e-6) + 1e-6);
        CHECK(s.price_term >= last_price - 1e-6);
        last_risk = s.risk_value;
        last_price = s.price_term;
    }
}

TEST_CASE("identical prosumers get identical schedules")
{
    const TimeGrid grid(24, 3);
    std::vector<Prosumer> pool;
    for (int i = 0; i < 3; ++i)
        pool.push_back(flat_prosumer(grid, i, 1.5, 0.2, 7.2, 12.0));
    const Eigen::VectorXd price = Eigen::VectorXd::LinSpaced(24, 30.0, 70.0);
    const DaSolution s = solve_da(DaProblem(grid, pool, price, random_cov(24, 4), 1.0));
    for (int i = 1; i < 3; ++i)
    {
        CHECK((s.g.row(i) - s.g.row(0)).lpNorm<Eigen::Infinity>() < 1e-4);
        CHECK((s.ev.row(i) - s.ev.row(0)).lpNorm<Eigen::Infinity>() < 1e-4);
    }
}

TEST_CASE("an infeasible prosumer is named")
{
    const TimeGrid grid(2, 1);
    std::vector<Prosumer> pool{flat_prosumer(grid, 7, 1.0, 0.0, 3.0, 1.0),
                               flat_prosumer(grid, 9, 1.0, 0.0, 3.0, 100.0)};
    const DaProblem prob(grid, pool, Eigen::Vector2d(10, 20), Eigen::Matrix2d::Identity(), 1.0);
    try
    {
        solve_da(prob);
        FAIL("expected InfeasibleProsumerError");
    }
    catch (const InfeasibleProsumerError& e)
    {
        CHECK(e.prosumer_id() == 9);
    }
}

TEST_CASE("construction rejects bad inputs")
{
    const TimeGrid grid(2, 1);
    const std::vector<Prosumer> pool{flat_prosumer(grid, 0, 1.0, 0.0, 3.0, 1.0)};
    Eigen::Matrix2d indefinite;
    indefinite << 1, 0, 0, -1;
    CHECK_THROWS_AS(DaProblem(grid, pool, Eigen::Vector2d(1, 1), indefinite, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(DaProblem(grid, pool, Eigen::Vector2d(1, 1), Eigen::Matrix2d::Identity(), -1.0),
                    std::invalid_argument);
    CHECK_THROWS(DaProblem(grid, pool, Eigen::Vector3d(1, 1, 1), Eigen::Matrix2d::Identity(), 1.0));
}

TEST_CASE("schedule files round-trip")
{
    const TimeGrid grid(3, 1);
    std::vector<Prosumer> pool{flat_prosumer(grid, 4, 1.0, 0.0, 3.0, 2.0), flat_prosumer(grid, 8, 2.0, 1.0, 3.0, 1.0)};
    const DaSolution s = solve_da(DaProblem(grid, pool, Eigen::Vector3d(30, 10, 50), Eigen::Matrix3d::Identity(), 1.0));
    const ScheduleTable t = schedule_table(s, pool);
    CHECK(t.prosumer_ids == std::vector<int>{4, 8});
    test::TempDir dir;
    write_schedule(dir / "s.csv", t);
    const ScheduleTable back = read_schedule(dir / "s.csv", grid);
    CHECK(back.prosumer_ids == t.prosumer_ids);
    CHECK(back.g == t.g);
    CHECK(back.ev == t.ev);
}

TEST_CASE("cost helpers")
{
    const Eigen::VectorXd g = Eigen::VectorXd::Constant(24, 1000.0);
    CHECK(da_price_term(Eigen::VectorXd::Constant(24, 50.0), g) == doctest::Approx(1200.0));
    const Eigen::Matrix2d c = Eigen::Matrix2d::Identity() * 4.0;
    CHECK(da_risk_term(c, 2.0, Eigen::Vector2d(1000, 0)) == doctest::Approx(4.0));
}
