#include <doctest.h>

#include "aggsched/ledger.hpp"
#include "aggsched/simharness.hpp"
#include "test_util.hpp"

using namespace aggsched;

namespace
{

SlotTrace trace_of(const Eigen::VectorXd& dg, double p_rt, double p_da)
{
    SlotTrace t;
    t.dg = dg;
    t.dev = Eigen::VectorXd::Zero(dg.size());
    t.p_rt = Eigen::VectorXd::Constant(dg.size(), p_rt);
    t.p_da_up = Eigen::VectorXd::Constant(dg.size(), p_da);
    t.implemented = Eigen::VectorXi::Ones(dg.size());
    return t;
}

} // namespace

TEST_CASE("day-ahead settlement")
{
    const Eigen::VectorXd g = Eigen::VectorXd::Constant(24, 1000.0);
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(24, 50.0);
    const DaSettlement s = settle_da(g, p, p);
    CHECK(s.predicted == doctest::Approx(1200.0));
    CHECK(s.cleared == s.predicted);
    CHECK(settle_da(Eigen::VectorXd::Zero(24), p, 2.0 * p).cleared == 0.0);
    CHECK(settle_da(g, p, 2.0 * p).cleared == doctest::Approx(2400.0));
}

TEST_CASE("real-time settlement")
{
    const ImbalanceRegime caiso;
    Eigen::VectorXd dg = Eigen::VectorXd::Zero(96);
    CHECK(settle_rt(trace_of(dg, 100.0, 40.0), caiso).supplementary == 0.0);
    dg[10] = 4.0;
    const RtSettlement one = settle_rt(trace_of(dg, 100.0, 40.0), caiso);
    CHECK(one.supplementary == doctest::Approx(0.1));
    CHECK(one.implemented_slots == 96);

    // System short, aggregator consumes less: a helpful deviation is paid.
    const ImbalanceRegime uk = ImbalanceRegime::make(RegimeMode::uk, 20.0, 20.0);
    dg[10] = -4.0;
    const RtSettlement helpful = settle_rt(trace_of(dg, 100.0, 40.0), uk);
    CHECK(helpful.imbalance.total() < 0.0);
    CHECK(helpful.imbalance.cases[1] == doctest::Approx(-4.0 * 0.25e-3 * 20.0));

    SlotTrace none = trace_of(dg, 100.0, 40.0);
    none.implemented.setZero();
    CHECK_THROWS(settle_rt(none, caiso));

    SlotTrace partial = trace_of(Eigen::VectorXd::Constant(96, 4.0), 100.0, 40.0);
    partial.implemented.head(48).setZero();
    CHECK(settle_rt(partial, caiso).supplementary == doctest::Approx(48 * 0.1));
}

TEST_CASE("ledger totals")
{
    CostLedger l;
    l.cleared_da_cost = 100.0;
    l.rt_supplementary = 5.0;
    l.imbalance_total = -2.0;
    CHECK(l.rt_total() == 3.0);
    CHECK(l.total_cost() == 103.0);
    const auto j = l.to_json();
    CHECK(j["day_ahead"]["cleared_cost"] == 100.0);
    CHECK(j["real_time"]["total"] == 3.0);
    CHECK(j["total_cost"] == 103.0);
}

TEST_CASE("ledger is recomputed bit for bit from the written bundle")
{
    ExperimentConfig cfg;
    cfg.n_prosumers = 6;
    cfg.regime = "germany";
    cfg.delta_plus = 5.0;
    cfg.delta_minus = 15.0;
    const ExperimentBundle b = simulate(cfg);
    test::TempDir dir;
    write_bundle(b, dir.path());
    const CostLedger again = ledger_from_directory(dir.path());
    CHECK(again.to_json().dump() == b.ledger.to_json().dump());
    CHECK(again.predicted_da_cost == b.ledger.predicted_da_cost);
    CHECK(again.rt_supplementary == b.ledger.rt_supplementary);
    CHECK(again.imbalance_total == b.ledger.imbalance_total);
    CHECK(again.da_risk_term == b.ledger.da_risk_term);

    const SlotTrace t = read_slot_trace(dir / "rt_trace.csv");
    CHECK(t.dg == slot_trace(b.rt).dg);
    const HourTrace h = read_hour_trace(dir / "rt_hours.csv");
    CHECK(h.iterations == b.rt.iterations);
}

TEST_CASE("aggregate schedule sums prosumers")
{
    Eigen::MatrixXd m(3, 2);
    m << 1, 2, 3, 4, 5, 6;
    CHECK(aggregate_schedule(m) == Eigen::Vector2d(9, 12));
}
