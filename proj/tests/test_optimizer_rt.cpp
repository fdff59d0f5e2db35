#include <doctest.h>

#include <cmath>

#include "aggsched/optimizer_da.hpp"
#include "aggsched/optimizer_rt.hpp"
#include "aggsched/simharness.hpp"
#include "fixtures.hpp"

using namespace aggsched;
using test::flat_prosumer;

namespace
{

RtProblem one_hour_problem(const TimeGrid& grid, const std::vector<Prosumer>& pool,
                           const std::vector<Commitment>& schedule, const Eigen::VectorXd& price,
                           const ImbalanceRegime& regime)
{
    RtProblem p;
    p.hour = 1;
    p.window = grid.mpc_window(1);
    const auto L = static_cast<Eigen::Index>(p.window.length);
    p.price = price;
    p.p_da_up = Eigen::VectorXd::Constant(L, 40.0);
    p.cov = Eigen::MatrixXd::Identity(L, L) * 25.0;
    p.regime = regime;
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        p.prosumer_ids.push_back(pool[i].id);
        p.contexts.push_back(real_time_context(pool[i], grid, p.window, schedule[i], 0.0, 4));
    }
    p.implemented = 4;
    return p;
}

Commitment feasible_commitment(const Prosumer& p, const TimeGrid& grid, double ev_kw)
{
    Commitment c;
    c.ev_kw = Eigen::VectorXd::Constant(grid.hours(), ev_kw);
    c.grid_kw = p.load_da - p.pv_da + c.ev_kw;
    return c;
}

} // namespace

TEST_CASE("imbalance regimes")
{
    const Eigen::VectorXd up = Eigen::VectorXd::Constant(1, 4000.0); // 1 MWh in a quarter hour
    const Eigen::VectorXd down = -up;
    const Eigen::VectorXd short_rt = Eigen::VectorXd::Constant(1, 60.0);
    const Eigen::VectorXd long_rt = Eigen::VectorXd::Constant(1, 20.0);
    const Eigen::VectorXd da = Eigen::VectorXd::Constant(1, 40.0);

    const ImbalanceRegime caiso = ImbalanceRegime::make(RegimeMode::caiso, 0.0, 0.0);
    CHECK(imbalance_cost(up, short_rt, da, caiso).total() == 0.0);
    CHECK(imbalance_cost(down, long_rt, da, caiso).total() == 0.0);

    const ImbalanceRegime uk = ImbalanceRegime::make(RegimeMode::uk, 10.0, 10.0);
    const ImbalanceBreakdown worse = imbalance_cost(up, short_rt, da, uk);
    CHECK(worse.cases[0] == doctest::Approx(10.0));
    CHECK(worse.total() == doctest::Approx(10.0));
    const ImbalanceBreakdown helps = imbalance_cost(down, short_rt, da, uk);
    CHECK(helps.cases[1] == doctest::Approx(-10.0));
    CHECK(imbalance_cost(up, long_rt, da, uk).cases[2] == doctest::Approx(-10.0));
    CHECK(imbalance_cost(down, long_rt, da, uk).cases[3] == doctest::Approx(10.0));
    CHECK(imbalance_cost(up, da, da, uk).total() == 0.0); // tie

    const ImbalanceRegime de = ImbalanceRegime::make(RegimeMode::germany, 2.0, 10.0);
    CHECK(imbalance_cost(down, short_rt, da, de).total() == doctest::Approx(-2.0));

    CHECK_THROWS_AS(ImbalanceRegime::make(RegimeMode::caiso, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ImbalanceRegime::make(RegimeMode::uk, 1.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(ImbalanceRegime::make(RegimeMode::germany, 3.0, 2.0), std::invalid_argument);
    CHECK(parse_regime("germany") == RegimeMode::germany);
    CHECK_THROWS(parse_regime("france"));
    CHECK(system_sign(1.0, 1.0) == 0);
    CHECK(system_sign(2.0, 1.0) == 1);
}

TEST_CASE("no news, no price: zero deviation")
{
    const TimeGrid grid(4, 2);
    std::vector<Prosumer> pool{flat_prosumer(grid, 0, 1.0, 0.0, 4.0, 5.0), flat_prosumer(grid, 1, 2.0, 1.0, 4.0, 3.0)};
    const std::vector<Commitment> schedule{feasible_commitment(pool[0], grid, 2.0),
                                           feasible_commitment(pool[1], grid, 1.0)};
    const RtProblem p = one_hour_problem(grid, pool, schedule, Eigen::VectorXd::Zero(8),
                                         ImbalanceRegime::make(RegimeMode::caiso, 0.0, 0.0));
    const RtStepSolution s = solve_rt_step(p);
    REQUIRE(s.status == QpStatus::optimal);
    CHECK(s.dg.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(s.dev.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("a slot with no EV flexibility forces the grid deviation")
{
    const TimeGrid grid(1, 1);
    Prosumer p = flat_prosumer(grid, 0, 2.0, 0.0, 0.0, 0.0);
    p.load_rt.array() += 1.0;
    const Commitment c = feasible_commitment(p, grid, 0.0);
    for (double price : {-100.0, 0.0, 300.0})
    {
        const RtProblem prob = one_hour_problem(grid, {p}, {c}, Eigen::VectorXd::Constant(4, price),
                                                ImbalanceRegime::make(RegimeMode::caiso, 0.0, 0.0));
        const RtStepSolution s = solve_rt_step(prob);
        CHECK((s.dg_total.array() - 1.0).abs().maxCoeff() < 1e-9);
        CHECK(s.dev.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("epigraph variables equal the positive part at the optimum")
{
    const TimeGrid grid(4, 2);
    std::vector<Prosumer> pool{flat_prosumer(grid, 0, 1.0, 0.0, 6.6, 6.0), flat_prosumer(grid, 1, 2.0, 1.0, 6.6, 4.0)};
    pool[0].load_rt.segment(0, 4).array() += 0.7;
    pool[1].pv_rt.segment(4, 4).array() += 0.9;
    const std::vector<Commitment> schedule{feasible_commitment(pool[0], grid, 2.0),
                                           feasible_commitment(pool[1], grid, 1.5)};
    Eigen::VectorXd price(8);
    price << 30, 50, 35, 55, 25, 45, 60, 20;
    const RtProblem p = one_hour_problem(grid, pool, schedule, price, ImbalanceRegime::make(RegimeMode::germany, 2.0, 30.0));
    const RtStepSolution s = solve_rt_step(p);
    REQUIRE(s.status == QpStatus::optimal);
    int present = 0;
    for (Eigen::Index k = 0; k < s.epigraph.size(); ++k)
    {
        if (std::isnan(s.epigraph[k]))
        {
            CHECK(s.signs[k] == 0);
            continue;
        }
        ++present;
        CHECK(std::abs(s.epigraph[k] - std::max(s.dg_total[k], 0.0)) < 1e-6);
    }
    CHECK(present == 8);
    const ImbalanceBreakdown direct = imbalance_cost(s.dg_total, p.price, p.p_da_up, p.regime);
    CHECK(s.imbalance.total() == doctest::Approx(direct.total()).epsilon(1e-9));
    CHECK(s.aggregation_residual < 1e-6);
    CHECK(s.local_violation <= 1e-9);
}

TEST_CASE("the loop resumes from its carried state")
{
    ExperimentConfig cfg;
    cfg.n_prosumers = 8;
    cfg.seed = 4;
    cfg.da_seed = 2;
    const ExperimentBundle b = simulate(cfg);
    const DayInputs in = day_inputs(b);

    const RtTrace full = run_mpc(in);
    MpcState state;
    MpcOptions first;
    first.last_hour = 10;
    const RtTrace head = run_mpc(in, first, &state);
    CHECK(state.next_hour == 11);
    const RtTrace tail = run_mpc(in, {}, &state);

    for (Eigen::Index t = 0; t < in.grid.rt_length(); ++t)
    {
        const bool early = t < 40;
        CHECK(head.implemented[t] == (early ? 1 : 0));
        CHECK(tail.implemented[t] == (early ? 0 : 1));
        CHECK(full.dg[t] == (early ? head.dg[t] : tail.dg[t]));
    }
    CHECK(tail.e_past_end == full.e_past_end);
    CHECK(full.dg == b.rt.dg);
}

TEST_CASE("zero noise and no EV flexibility: nothing to correct")
{
    ExperimentConfig cfg;
    cfg.n_prosumers = 6;
    cfg.ev_share = 0.0;
    cfg.rt_noise = 0.0;
    const ExperimentBundle b = simulate(cfg);
    CHECK(b.rt.dg.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(b.ledger.rt_supplementary) < 1e-9);
}

TEST_CASE("realizations equal to forecasts: zero deviation is feasible and never beaten by a loss")
{
    ExperimentConfig cfg;
    cfg.n_prosumers = 10;
    cfg.rt_noise = 0.0;
    const ExperimentBundle b = simulate(cfg);
    const DayInputs in = day_inputs(b);
    const TimeGrid& grid = in.grid;
    for (int h = 1; h <= grid.hours(); ++h)
    {
        // State as if every earlier hour had followed the day-ahead plan.
        MpcState state;
        state.next_hour = h;
        state.e_past = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(in.pool.size()));
        for (std::size_t i = 0; i < in.pool.size(); ++i)
        {
            const auto ii = static_cast<Eigen::Index>(i);
            state.e_past[ii] = in.pool[i].eta * in.schedule[i].ev_kw.head(h - 1).sum();
            const WindowContext ctx =
                real_time_context(in.pool[i], grid, grid.mpc_window(h), in.schedule[i], state.e_past[ii], 4);
            CHECK(max_violation(build_local_constraints(ctx), Eigen::VectorXd::Zero(ctx.length()),
                                Eigen::VectorXd::Zero(ctx.length())) <= 1e-9);
        }
        MpcOptions opt;
        opt.last_hour = h;
        const RtTrace t = run_mpc(in, opt, &state);
        CAPTURE(h);
        CHECK(t.objective[h - 1] <= 1e-6);
    }
}

TEST_CASE("system short, single price, flat prices: no deviation is chosen")
{
    // The window spans the whole day and the commitments deliver exactly
    // the required energy, so any deviation only moves energy between
    // equally priced slots.
    const TimeGrid grid(2, 2);
    std::vector<Prosumer> pool{flat_prosumer(grid, 0, 1.0, 0.0, 4.0, 0.9 * 4.0),
                               flat_prosumer(grid, 1, 2.0, 1.0, 4.0, 0.9 * 2.0)};
    const std::vector<Commitment> schedule{feasible_commitment(pool[0], grid, 2.0),
                                           feasible_commitment(pool[1], grid, 1.0)};
    RtProblem p = one_hour_problem(grid, pool, schedule, Eigen::VectorXd::Constant(8, 70.0),
                                   ImbalanceRegime::make(RegimeMode::uk, 15.0, 15.0));
    p.lambda = 0.0;
    const RtStepSolution s = solve_rt_step(p);
    REQUIRE(s.status == QpStatus::optimal);
    CHECK((s.signs.array() == 1).all());
    CHECK(s.dg_total.cwiseAbs().maxCoeff() < 1e-6);
}
