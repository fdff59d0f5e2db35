#include <doctest.h>

#include <random>

#include "aggsched/prosumer.hpp"
#include "aggsched/qp_builder.hpp"
#include "test_util.hpp"

using namespace aggsched;

namespace
{

WindowContext context(Mode mode, Eigen::Index n, double step)
{
    WindowContext c;
    c.mode = mode;
    c.window = {0, static_cast<std::size_t>(n)};
    c.step_hours = step;
    c.load = Eigen::VectorXd::Constant(n, 2.0);
    c.pv = Eigen::VectorXd::Zero(n);
    c.committed_ev = Eigen::VectorXd::Zero(n);
    c.committed_grid = Eigen::VectorXd::Zero(n);
    c.ev_power_lo = Eigen::VectorXd::Zero(n);
    c.ev_power_hi = Eigen::VectorXd::Constant(n, 7.0);
    c.cum_lo = Eigen::VectorXd::Zero(n);
    c.cum_hi = Eigen::VectorXd::Constant(n, 100.0);
    return c;
}

std::vector<Prosumer> small_pool(std::uint64_t seed, const TimeGrid& grid)
{
    const Eigen::VectorXd load = 30.0 + 10.0 * Eigen::VectorXd::LinSpaced(24, 0.0, 6.28).array().sin();
    Eigen::VectorXd pv = Eigen::VectorXd::Zero(24);
    pv.segment(8, 8).setConstant(12.0);
    return synth_pool(12, load, pv, PoolConfig{}, seed, grid);
}

} // namespace

TEST_CASE("real-time balance forces the grid deviation")
{
    WindowContext c = context(Mode::real_time, 1, 0.25);
    c.committed_grid[0] = 2.0; // DA assumed L - S + EV = 2
    c.load[0] = 3.0;           // realized one kW higher
    const LocalConstraintSet bal = build_power_balance(c);
    REQUIRE(bal.rows.size() == 1);
    CHECK(max_violation(bal, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0)) == 0.0);
    CHECK(max_violation(bal, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.9)) ==
          doctest::Approx(0.1));
}

TEST_CASE("grid limit deviation bounds")
{
    WindowContext c = context(Mode::real_time, 2, 0.25);
    c.committed_grid << 9.0, 10.0;
    const LocalConstraintSet g = build_grid_limits(c);
    REQUIRE(g.rows.size() == 2);
    CHECK(g.rows[0].upper == 1.0);
    CHECK(g.rows[1].upper == 0.0);
    CHECK(g.rows[0].lower == -19.0);
}

TEST_CASE("quarter-hour energy arithmetic")
{
    WindowContext c = context(Mode::day_ahead, 1, 0.25);
    c.cum_lo[0] = c.cum_hi[0] = 0.9;
    const LocalConstraintSet e = build_ev_energy(c);
    REQUIRE(e.rows.size() == 1);
    CHECK(max_violation(e, Eigen::VectorXd::Constant(1, 4.0), Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(0.0).epsilon(1e-15));
    CHECK(max_violation(e, Eigen::VectorXd::Constant(1, 3.9), Eigen::VectorXd::Zero(1)) > 0.02);
}

TEST_CASE("power bounds: unplugged slots are fixed, full charge cannot rise")
{
    WindowContext c = context(Mode::real_time, 3, 0.25);
    c.ev_power_hi[1] = 0.0;
    c.committed_ev << 7.0, 0.0, 3.0;
    const LocalConstraintSet p = build_ev_power(c);
    REQUIRE(p.rows.size() == 3);
    CHECK(p.rows[0].upper == 0.0);
    CHECK(p.rows[1].lower == 0.0);
    CHECK(p.rows[1].upper == 0.0);

    QpBuilder b;
    std::vector<int> ev, grid;
    for (int k = 0; k < 3; ++k)
    {
        ev.push_back(b.add_variable({VarRole::ev, 0, k}));
        grid.push_back(b.add_variable({VarRole::grid, 0, k}));
    }
    append_local_constraints(b, build_local_constraints(c), 0, ev, grid);
    CHECK(b.is_fixed(ev[1]));
    CHECK_FALSE(b.is_fixed(ev[0]));
}

TEST_CASE("cumulation matrix and prefix sums")
{
    const Eigen::MatrixXd a = cumulation_matrix(4);
    Eigen::MatrixXd expected(4, 4);
    expected << 1, 0, 0, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1;
    CHECK(a == expected);
    const Eigen::Vector4d x(1, -2, 3, 0.5);
    CHECK(prefix_sums(x) == a * x);
}

TEST_CASE("feasibility check finds the minimal energy relaxation")
{
    WindowContext c = context(Mode::day_ahead, 4, 1.0);
    c.eta = 1.0;
    c.ev_power_hi.setConstant(2.0);
    CHECK(check_feasibility(c).feasible());
    c.cum_lo[3] = 10.0; // at most 8 kWh reachable
    const LocalFeasibility f = check_feasibility(c);
    CHECK(f.power_feasible);
    CHECK(f.min_relaxation == doctest::Approx(2.0).epsilon(1e-6));
    c.cum_relaxation = f.min_relaxation;
    CHECK(check_feasibility(c).feasible());

    WindowContext tight = context(Mode::day_ahead, 2, 1.0);
    tight.g_hi = 1.0; // load 2 with no PV needs a negative EV
    const LocalFeasibility g = check_feasibility(tight);
    CHECK_FALSE(g.power_feasible);
    CHECK(g.first_bad_slot == 0);
}

TEST_CASE("snap_to_feasible returns a feasible point and keeps feasible ones")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 9.0), cap(0.0, 30.0);
    for (int trial = 0; trial < 200; ++trial)
    {
        WindowContext c = context(Mode::day_ahead, 8, 0.25);
        const double need = cap(rng) * 0.3;
        c.cum_lo.tail(3).setConstant(need);
        c.cum_hi.setConstant(need + 1.0);
        c.ev_power_hi[trial % 8] = 0.0;
        if (!check_feasibility(c).feasible())
            continue;
        Eigen::VectorXd guess(8);
        for (auto& v : guess)
            v = u(rng);
        const Eigen::VectorXd ev = snap_to_feasible(c, guess);
        const Eigen::VectorXd grid = ev + c.load - c.pv;
        CHECK(max_violation(build_local_constraints(c), ev, grid) <= 1e-12);
        CHECK(ev[trial % 8] == 0.0);
        CHECK(snap_to_feasible(c, ev) == ev);
    }
    WindowContext impossible = context(Mode::day_ahead, 2, 1.0);
    impossible.g_hi = 1.0;
    CHECK_THROWS_AS(snap_to_feasible(impossible, Eigen::VectorXd::Zero(2)), std::runtime_error);
}

TEST_CASE("synthetic pools are deterministic and consistent")
{
    const TimeGrid grid(24, 3);
    const auto a = small_pool(42, grid);
    const auto b = small_pool(42, grid);
    const auto c = small_pool(43, grid);
    REQUIRE(a.size() == 12);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        CHECK(a[i].load_rt == b[i].load_rt);
        CHECK(a[i].ev_cum_lo_rt == b[i].ev_cum_lo_rt);
        differs = differs || a[i].load_da != c[i].load_da;
        CHECK_NOTHROW(a[i].validate(grid));
        CHECK(check_feasibility(day_ahead_context(a[i], grid)).feasible());
        for (Eigen::Index k = 0; k < grid.rt_length(); ++k)
            if (!a[i].plugged_rt(k))
                CHECK(a[i].ev_power_hi_rt[k] == 0.0);
    }
    CHECK(differs);

    // Loads spread around L/n, so the pool total stays within the spread.
    Eigen::VectorXd total = Eigen::VectorXd::Zero(24);
    for (const auto& p : a)
        total += p.load_da;
    const Eigen::VectorXd load = 30.0 + 10.0 * Eigen::VectorXd::LinSpaced(24, 0.0, 6.28).array().sin();
    CHECK(((total - load).array().abs() <= 0.2 * load.array() + 1e-9).all());
}

TEST_CASE("hourly bounds are implied by quarter-hourly ones")
{
    const TimeGrid grid(24, 3);
    for (const Prosumer& p : small_pool(7, grid))
        for (int h = 0; h < 24; ++h)
            for (int q = 0; q < 4; ++q)
            {
                CHECK(p.ev_power_lo_da[h] >= p.ev_power_lo_rt[4 * h + q]);
                CHECK(p.ev_power_hi_da[h] <= p.ev_power_hi_rt[4 * h + q]);
            }
}

TEST_CASE("pool bundles round-trip")
{
    const TimeGrid grid(24, 3);
    const auto pool = small_pool(3, grid);
    test::TempDir dir;
    write_pool(dir.path(), pool, grid);
    const auto back = read_pool(dir.path(), grid);
    REQUIRE(back.size() == pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        CHECK(back[i].load_rt == pool[i].load_rt);
        CHECK(back[i].pv_da == pool[i].pv_da);
        CHECK(back[i].ev_cum_hi_rt == pool[i].ev_cum_hi_rt);
        CHECK(back[i].ev_power_lo_da == pool[i].ev_power_lo_da);
    }
}

TEST_CASE("constraint constants are affine in the commitment, coefficients fixed")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    WindowContext c = context(Mode::real_time, 8, 0.25);
    for (Eigen::Index k = 0; k < 8; ++k)
    {
        c.committed_ev[k] = u(rng);
        c.committed_grid[k] = u(rng);
    }
    c.cum_lo.tail(2).setConstant(3.0);
    c.e_past = 0.4;
    WindowContext zero = c, twice = c;
    zero.committed_ev.setZero();
    zero.committed_grid.setZero();
    twice.committed_ev *= 2.0;
    twice.committed_grid *= 2.0;
    const auto s0 = build_local_constraints(zero), s1 = build_local_constraints(c), s2 = build_local_constraints(twice);
    REQUIRE(s0.rows.size() == s1.rows.size());
    REQUIRE(s1.rows.size() == s2.rows.size());
    for (std::size_t r = 0; r < s1.rows.size(); ++r)
    {
        const auto &a = s0.rows[r], &b = s1.rows[r], &d = s2.rows[r];
        CHECK(d.lower - b.lower == doctest::Approx(b.lower - a.lower));
        CHECK(d.upper - b.upper == doctest::Approx(b.upper - a.upper));
        REQUIRE(a.terms.size() == d.terms.size());
        for (std::size_t t = 0; t < a.terms.size(); ++t)
        {
            CHECK(a.terms[t].coef == d.terms[t].coef);
            CHECK(a.terms[t].slot == d.terms[t].slot);
        }
    }
}

TEST_CASE("pool load total stays within the sampling bound")
{
    const TimeGrid grid(24, 3);
    const int n = 100;
    const double a = 0.2;
    const Eigen::VectorXd load = Eigen::VectorXd::Constant(24, 150.0);
    const Eigen::VectorXd pv = Eigen::VectorXd::Zero(24);
    PoolConfig cfg;
    cfg.load_spread = a;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
    {
        Eigen::VectorXd total = Eigen::VectorXd::Zero(24);
        for (const auto& p : synth_pool(n, load, pv, cfg, seed, grid))
            total += p.load_da;
        CHECK(((total - load).cwiseAbs().array() / load.array()).maxCoeff() < 3.0 * a / std::sqrt(n));
    }
}
