#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "aggsched/timegrid.hpp"

using namespace aggsched;

TEST_CASE("hour_to_quarters maps 1-based hours to four quarters")
{
    const TimeGrid g(24, 3);
    const SlotRange first = g.hour_to_quarters(1);
    CHECK(first.first() == 1);
    CHECK(first.last() == 4);
    const SlotRange last = g.hour_to_quarters(24);
    CHECK(last.first() == 93);
    CHECK(last.last() == 96);
    CHECK_THROWS_AS(g.hour_to_quarters(25), std::out_of_range);
    CHECK_THROWS_AS(g.hour_to_quarters(0), std::out_of_range);
}

TEST_CASE("hours partition the real-time slots")
{
    for (int T : {1, 2, 5, 24})
    {
        const TimeGrid g(T, 1);
        std::vector<int> hits(static_cast<std::size_t>(g.rt_length()), 0);
        for (int h = 1; h <= T; ++h)
        {
            const SlotRange r = g.hour_to_quarters(h);
            CHECK(r.length == 4);
            for (std::size_t k = r.offset; k < r.end(); ++k)
                ++hits[k];
        }
        for (int v : hits)
            CHECK(v == 1);
    }
}

TEST_CASE("mpc_window truncates at the end of the day")
{
    const TimeGrid g(24, 3);
    CHECK(g.mpc_window(1) == SlotRange{0, 12});
    const SlotRange w23 = g.mpc_window(23);
    CHECK(w23.first() == 89);
    CHECK(w23.last() == 96);
    CHECK(w23.length == 8);
    const SlotRange w24 = g.mpc_window(24);
    CHECK(w24.first() == 93);
    CHECK(w24.length == 4);

    for (int H : {1, 2, 3, 7})
    {
        const TimeGrid gh(24, H);
        for (int h = 1; h <= 24; ++h)
        {
            const SlotRange w = gh.mpc_window(h);
            CHECK(w.length >= 4);
            CHECK(w.length % 4 == 0);
            CHECK(w.offset == static_cast<std::size_t>(4 * (h - 1)));
            CHECK(w.end() <= 96);
        }
    }
}

TEST_CASE("upsample and hourly mean")
{
    const TimeGrid g(2, 1);
    Eigen::VectorXd x(2);
    x << 2.0, 4.0;
    Eigen::VectorXd expected(8);
    expected << 2, 2, 2, 2, 4, 4, 4, 4;
    CHECK(g.upsample_hourly(x) == expected);
    CHECK(g.upsample_hourly(Eigen::VectorXd::Zero(2)).isZero());
    CHECK(g.hourly_mean(expected) == x);
    CHECK_THROWS(g.upsample_hourly(Eigen::VectorXd::Zero(3)));

    const TimeGrid day(24, 3);
    const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(24, -3.0, 11.0);
    CHECK(day.upsample_hourly(r).sum() * 0.25 == doctest::Approx(r.sum() * 1.0));
}

TEST_CASE("invalid grids are rejected")
{
    CHECK_THROWS(TimeGrid(0, 1));
    CHECK_THROWS(TimeGrid(24, 0));
}
