#include <doctest.h>

#include <random>
#include <vector>

#include "aggsched/price_stats.hpp"
#include "test_util.hpp"

using namespace aggsched;

namespace
{

PriceSeries daily(Date start, const std::vector<Eigen::VectorXd>& days)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(days.size()) * 24);
    for (std::size_t d = 0; d < days.size(); ++d)
        v.segment(static_cast<Eigen::Index>(d) * 24, 24) = days[d];
    return make_series(start, Resolution::hourly, v);
}

Eigen::VectorXd ramp(double base) { return Eigen::VectorXd::LinSpaced(24, base, base + 23.0); }

} // namespace

TEST_CASE("constant history forecasts the constant")
{
    const Date start = parse_date("2024-01-01");
    const Eigen::VectorXd c = ramp(40.0);
    const PriceSeries h = daily(start, std::vector<Eigen::VectorXd>(21, c));
    for (int offset : {14, 19, 21}) // weekday and weekend targets
        CHECK(seasonal_baseline_forecast(h, start + std::chrono::days(offset)) == c);
}

TEST_CASE("alternating days average over the two most recent of the class")
{
    const Date start = parse_date("2024-01-01"); // Monday
    const Eigen::VectorXd a = ramp(10.0), b = ramp(30.0);
    std::vector<Eigen::VectorXd> days;
    for (int d = 0; d < 14; ++d)
        days.push_back(d % 2 == 0 ? a : b);
    const PriceSeries h = daily(start, days);
    ForecastConfig cfg;
    cfg.recent_days = 2;
    // Monday 15th: the previous weekdays are Friday 12th (b) and Thursday 11th (a).
    const Eigen::VectorXd f = seasonal_baseline_forecast(h, start + std::chrono::days(14), cfg);
    CHECK((f - 0.5 * (a + b)).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("too little history is an error")
{
    const Date start = parse_date("2024-01-01");
    const PriceSeries h = daily(start, std::vector<Eigen::VectorXd>(6, ramp(1.0)));
    CHECK_THROWS(seasonal_baseline_forecast(h, start + std::chrono::days(6)));
}

TEST_CASE("covariance of hand-computed samples")
{
    const double ridge_tol = 1e-7;
    std::vector<ForecastErrorSample> two{{0, Eigen::Vector2d(1, 0)}, {1, Eigen::Vector2d(-1, 0)}};
    Eigen::Matrix2d expected;
    expected << 1, 0, 0, 0;
    for (Exec e : {Exec::serial, Exec::parallel})
        CHECK((estimate_covariance(two, e) - expected).cwiseAbs().maxCoeff() < ridge_tol);

    const Eigen::Vector3d eps(1.0, -2.0, 0.5);
    std::vector<ForecastErrorSample> repeated(5, {0, eps});
    CHECK((estimate_covariance(repeated) - eps * eps.transpose()).cwiseAbs().maxCoeff() < ridge_tol);

    std::vector<ForecastErrorSample> zeros(3, {0, Eigen::VectorXd::Zero(4)});
    CHECK(estimate_covariance(zeros).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conditioned covariances are PSD and symmetric")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial)
    {
        Eigen::MatrixXd m(6, 6);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                m(i, j) = g(rng);
        const Eigen::MatrixXd c = condition_psd(m);
        CHECK_NOTHROW(check_covariance(c, "conditioned"));
        CHECK(c == c.transpose());
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff() >= 0.0);
    }
    Eigen::Matrix2d indefinite;
    indefinite << 1, 0, 0, -1;
    CHECK_THROWS_AS(check_covariance(indefinite, "x"), std::invalid_argument);
}

TEST_CASE("window covariance is the leading block")
{
    Eigen::MatrixXd t(12, 12);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
            t(i, j) = 1.0 / (1 + i + j);
    CHECK(rt_window_covariance(t, 12) == t);
    CHECK(rt_window_covariance(t, 1)(0, 0) == t(0, 0));
    CHECK(rt_window_covariance(t, 8) == t.topLeftCorner(8, 8));
    CHECK_THROWS(rt_window_covariance(t, 13));
}

TEST_CASE("real-time to day-ahead ratio")
{
    const Date start = parse_date("2024-03-04");
    const PriceSeries da = daily(start, std::vector<Eigen::VectorXd>(2, ramp(20.0)));
    const Eigen::VectorXd da_q = da.values.replicate(1, 4).transpose().reshaped();
    const PriceSeries same = make_series(start, Resolution::quarter_hourly, da_q);
    CHECK(rt_da_ratio(same, da) == doctest::Approx(1.0));
    const PriceSeries scaled = make_series(start, Resolution::quarter_hourly, 0.93 * da_q);
    CHECK(rt_da_ratio(scaled, da) == doctest::Approx(0.93));

    // Means 46.5 and 50 with uncorrelated shapes.
    Eigen::VectorXd dv = Eigen::VectorXd::Constant(48, 50.0);
    dv.head(24).array() += 10.0;
    dv.tail(24).array() -= 10.0;
    Eigen::VectorXd rv(192);
    for (int i = 0; i < 192; ++i)
        rv[i] = 46.5 + (i % 2 == 0 ? 5.0 : -5.0);
    CHECK(rt_da_ratio(make_series(start, Resolution::quarter_hourly, rv), make_series(start, Resolution::hourly, dv)) ==
          doctest::Approx(0.93));
}

TEST_CASE("series validation")
{
    const Date start = parse_date("2024-03-04");
    PriceSeries s = make_series(start, Resolution::hourly, Eigen::VectorXd::Constant(24, 30.0));
    CHECK(validate_series(s, true).empty());
    s.values[3] = 2500.0;
    CHECK(validate_series(s, true).size() == 1);
    CHECK(validate_series(s, false).empty());
    PriceSeries gap = s;
    gap.timestamps[5] += 3600;
    CHECK_THROWS(validate_series(gap, true));
    PriceSeries dup = s;
    dup.timestamps[5] = dup.timestamps[4];
    CHECK_THROWS(validate_series(dup, true));
    PriceSeries short_values = s;
    short_values.values.conservativeResize(23);
    CHECK_THROWS(validate_series(short_values, true));

    CHECK(format_timestamp(parse_timestamp("2024-03-04T05:15:00Z")) == "2024-03-04T05:15:00Z");
    CHECK(format_date(parse_date("2024-02-29")) == "2024-02-29");
}

TEST_CASE("price CSV and model directories round-trip")
{
    test::TempDir dir;
    const Date start = parse_date("2024-03-04");
    const PriceSeries s = make_series(start, Resolution::quarter_hourly, Eigen::VectorXd::LinSpaced(96, -5.0, 90.0));
    write_price_csv(dir / "p.csv", s);
    const PriceSeries back = read_price_csv(dir / "p.csv", Resolution::quarter_hourly, false);
    CHECK(back.timestamps == s.timestamps);
    CHECK(back.values == s.values);
    CHECK(day_values(back, start) == s.values);
    CHECK_THROWS(day_values(back, start + std::chrono::days(1)));
}

TEST_CASE("covariance estimates improve with more samples")
{
    const int d = 6;
    Eigen::MatrixXd truth(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            truth(i, j) = 9.0 * std::pow(0.6, std::abs(i - j));
    const Eigen::MatrixXd l = truth.llt().matrixL();
    int better = 0;
    const int runs = 100;
    for (int run = 0; run < runs; ++run)
    {
        std::mt19937_64 rng(1000 + run);
        std::normal_distribution<double> g;
        std::vector<ForecastErrorSample> s;
        double err50 = 0.0;
        for (int m = 0; m < 2000; ++m)
        {
            s.push_back({m, l * Eigen::VectorXd::NullaryExpr(d, [&] { return g(rng); })});
            if (m == 49)
                err50 = (estimate_covariance(s) - truth).norm();
        }
        better += (estimate_covariance(s) - truth).norm() < err50 ? 1 : 0;
    }
    CHECK(better >= 95);
}

TEST_CASE("the forecaster is deterministic")
{
    const Date start = parse_date("2024-01-01");
    std::vector<Eigen::VectorXd> days;
    for (int d = 0; d < 21; ++d)
        days.push_back(ramp(10.0 + d % 5));
    const PriceSeries h = daily(start, days);
    const Date target = start + std::chrono::days(21);
    CHECK(seasonal_baseline_forecast(h, target) == seasonal_baseline_forecast(h, target));
}
