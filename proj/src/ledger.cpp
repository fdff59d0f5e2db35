#include "aggsched/ledger.hpp"

#include <fstream>

#include <fmt/format.h>

#include "aggsched/csv.hpp"
#include "aggsched/optimizer_da.hpp"

namespace aggsched
{

namespace
{

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    return out;
}

} // namespace

void SlotTrace::validate() const
{
    const Eigen::Index n = dg.size();
    if (dev.size() != n || p_rt.size() != n || p_da_up.size() != n || implemented.size() != n)
        throw std::invalid_argument("trace columns have different lengths");
    for (Eigen::Index t = 0; t < n; ++t)
        if (implemented[t] != 0 && implemented[t] != 1)
            throw std::invalid_argument(fmt::format("trace slot {}: implemented flag must be 0 or 1", t + 1));
}

SlotTrace slot_trace(const RtTrace& trace)
{
    return {trace.dg, trace.dev, trace.p_rt, trace.p_da_up, trace.implemented};
}

void write_slot_trace(const std::filesystem::path& path, const SlotTrace& t)
{
    t.validate();
    auto out = open_out(path);
    csv::write_row(out, {"slot", "dg_kw", "dev_kw", "p_rt", "implemented", "p_da"});
    for (Eigen::Index s = 0; s < t.size(); ++s)
        csv::write_row(out, {std::to_string(s + 1), csv::format(t.dg[s]), csv::format(t.dev[s]), csv::format(t.p_rt[s]),
                             std::to_string(t.implemented[s]), csv::format(t.p_da_up[s])});
}

SlotTrace read_slot_trace(const std::filesystem::path& path)
{
    const csv::Table table = csv::read(path);
    const std::size_t cs = table.column("slot"), cg = table.column("dg_kw"), ce = table.column("dev_kw"),
                      cp = table.column("p_rt"), ci = table.column("implemented"), cd = table.column("p_da");
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    SlotTrace t{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXi(n)};
    for (Eigen::Index s = 0; s < n; ++s)
    {
        const auto& f = table.rows[static_cast<std::size_t>(s)];
        const std::string ctx = fmt::format("{} row {}", path.string(), s + 2);
        if (csv::to_int(f[cs], ctx) != s + 1)
            throw std::runtime_error(ctx + ": slots must be listed in order starting at 1");
        t.dg[s] = csv::to_double(f[cg], ctx);
        t.dev[s] = csv::to_double(f[ce], ctx);
        t.p_rt[s] = csv::to_double(f[cp], ctx);
        t.implemented[s] = static_cast<int>(csv::to_int(f[ci], ctx));
        t.p_da_up[s] = csv::to_double(f[cd], ctx);
    }
    t.validate();
    return t;
}

HourTrace hour_trace(const RtTrace& trace)
{
    return {trace.objective, trace.risk_value, trace.risk_term, trace.relaxation, trace.iterations};
}

void write_hour_trace(const std::filesystem::path& path, const HourTrace& h)
{
    auto out = open_out(path);
    csv::write_row(out, {"hour", "objective", "risk_value", "risk_term", "relaxation_kwh", "iterations"});
    for (Eigen::Index k = 0; k < h.objective.size(); ++k)
        csv::write_row(out, {std::to_string(k + 1), csv::format(h.objective[k]), csv::format(h.risk_value[k]),
                             csv::format(h.risk_term[k]), csv::format(h.relaxation[k]), std::to_string(h.iterations[k])});
}

HourTrace read_hour_trace(const std::filesystem::path& path)
{
    const csv::Table table = csv::read(path);
    const std::size_t co = table.column("objective"), cv = table.column("risk_value"), ct = table.column("risk_term"),
                      cr = table.column("relaxation_kwh"), ci = table.column("iterations");
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    HourTrace h{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXi(n)};
    for (Eigen::Index k = 0; k < n; ++k)
    {
        const auto& f = table.rows[static_cast<std::size_t>(k)];
        const std::string ctx = fmt::format("{} row {}", path.string(), k + 2);
        h.objective[k] = csv::to_double(f[co], ctx);
        h.risk_value[k] = csv::to_double(f[cv], ctx);
        h.risk_term[k] = csv::to_double(f[ct], ctx);
        h.relaxation[k] = csv::to_double(f[cr], ctx);
        h.iterations[k] = static_cast<int>(csv::to_int(f[ci], ctx));
    }
    return h;
}

Eigen::VectorXd aggregate_schedule(const Eigen::MatrixXd& per_prosumer)
{
    Eigen::VectorXd g = Eigen::VectorXd::Zero(per_prosumer.cols());
    for (Eigen::Index t = 0; t < per_prosumer.cols(); ++t)
        for (Eigen::Index i = 0; i < per_prosumer.rows(); ++i)
            g[t] += per_prosumer(i, t);
    return g;
}

DaSettlement settle_da(const Eigen::VectorXd& g_star, const Eigen::VectorXd& predicted_prices,
                       const Eigen::VectorXd& cleared_prices)
{
    if (predicted_prices.size() != g_star.size() || cleared_prices.size() != g_star.size())
        throw std::invalid_argument(fmt::format("settle_da: schedule has {} hours, prices {} and {}", g_star.size(),
                                                predicted_prices.size(), cleared_prices.size()));
    const double k = cost_factor(kDaStepHours);
    DaSettlement s;
    for (Eigen::Index t = 0; t < g_star.size(); ++t)
    {
        s.predicted += k * predicted_prices[t] * g_star[t];
        s.cleared += k * cleared_prices[t] * g_star[t];
    }
    return s;
}

RtSettlement settle_rt(const SlotTrace& trace, const ImbalanceRegime& regime)
{
    trace.validate();
    RtSettlement s;
    const double k = cost_factor(kRtStepHours);
    std::vector<Eigen::Index> slots;
    for (Eigen::Index t = 0; t < trace.size(); ++t)
        if (trace.implemented[t] == 1)
            slots.push_back(t);
    if (slots.empty())
        throw std::invalid_argument("settle_rt: no slot of the trace is marked implemented");
    Eigen::VectorXd dg(static_cast<Eigen::Index>(slots.size())), p_rt(dg.size()), p_da(dg.size());
    for (std::size_t j = 0; j < slots.size(); ++j)
    {
        const auto t = slots[j];
        const auto jj = static_cast<Eigen::Index>(j);
        dg[jj] = trace.dg[t];
        p_rt[jj] = trace.p_rt[t];
        p_da[jj] = trace.p_da_up[t];
        s.supplementary += k * trace.p_rt[t] * trace.dg[t];
    }
    s.imbalance = imbalance_cost(dg, p_rt, p_da, regime);
    s.implemented_slots = static_cast<int>(slots.size());
    return s;
}

CostLedger build_ledger(const LedgerInputs& in)
{
    const Eigen::VectorXd g = aggregate_schedule(in.g_schedule);
    const DaSettlement da = settle_da(g, in.p_da_forecast, in.p_da_cleared);
    const RtSettlement rt = settle_rt(in.trace, in.regime);
    if (in.da_cov.rows() != g.size() || in.da_cov.cols() != g.size())
        throw std::invalid_argument("build_ledger: day-ahead covariance does not match the schedule");

    CostLedger l;
    l.predicted_da_cost = da.predicted;
    l.cleared_da_cost = da.cleared;
    l.da_energy_mwh = cost_factor(kDaStepHours) * g.sum();
    l.rt_supplementary = rt.supplementary;
    l.imbalance = rt.imbalance;
    l.imbalance_total = rt.imbalance.total();
    l.implemented_slots = rt.implemented_slots;
    l.da_risk_value = g.dot(in.da_cov * g);
    l.da_risk_term = da_risk_term(in.da_cov, in.lambda_da, g);
    l.rt_risk_values.assign(in.hours.risk_value.begin(), in.hours.risk_value.end());
    l.rt_risk_terms.assign(in.hours.risk_term.begin(), in.hours.risk_term.end());
    return l;
}

nlohmann::ordered_json CostLedger::to_json() const
{
    nlohmann::ordered_json j;
    j["sign_convention"] = "positive amounts are paid by the aggregator";
    auto avg = [&](double cost) -> nlohmann::ordered_json {
        if (da_energy_mwh == 0.0)
            return nullptr;
        return cost / da_energy_mwh;
    };
    j["day_ahead"] = {{"predicted_cost", predicted_da_cost},
                      {"cleared_cost", cleared_da_cost},
                      {"energy_mwh", da_energy_mwh},
                      {"average_predicted_price", avg(predicted_da_cost)},
                      {"average_cleared_price", avg(cleared_da_cost)},
                      {"risk_value", da_risk_value},
                      {"risk_term", da_risk_term}};
    j["real_time"] = {{"supplementary_cost", rt_supplementary},
                      {"imbalance",
                       {{"short_up", imbalance.cases[0]},
                        {"short_down", imbalance.cases[1]},
                        {"long_up", imbalance.cases[2]},
                        {"long_down", imbalance.cases[3]},
                        {"total", imbalance_total}}},
                      {"total", rt_total()},
                      {"implemented_slots", implemented_slots},
                      {"risk_values", rt_risk_values},
                      {"risk_terms", rt_risk_terms}};
    j["total_cost"] = total_cost();
    return j;
}

void write_ledger(const std::filesystem::path& path, const CostLedger& ledger)
{
    auto out = open_out(path);
    out << ledger.to_json().dump(2) << '\n';
}

void write_plot_series(const std::filesystem::path& dir, const TimeGrid& grid, const Eigen::MatrixXd& g_schedule,
                       const Eigen::MatrixXd& ev_schedule, const SlotTrace& trace)
{
    std::filesystem::create_directories(dir);
    const Eigen::VectorXd g = grid.upsample_hourly(aggregate_schedule(g_schedule));
    const Eigen::VectorXd ev = grid.upsample_hourly(aggregate_schedule(ev_schedule));
    if (trace.size() != g.size())
        throw std::invalid_argument("write_plot_series: trace length differs from the day");
    {
        auto out = open_out(dir / "aggregate_power.csv");
        csv::write_row(out, {"slot", "g_star_kw", "dg_kw", "g_total_kw", "ev_star_kw", "dev_kw", "ev_total_kw"});
        for (Eigen::Index s = 0; s < g.size(); ++s)
            csv::write_row(out, {std::to_string(s + 1), csv::format(g[s]), csv::format(trace.dg[s]),
                                 csv::format(g[s] + trace.dg[s]), csv::format(ev[s]), csv::format(trace.dev[s]),
                                 csv::format(ev[s] + trace.dev[s])});
    }
    auto out = open_out(dir / "prices.csv");
    csv::write_row(out, {"slot", "p_da", "p_rt"});
    for (Eigen::Index s = 0; s < g.size(); ++s)
        csv::write_row(out, {std::to_string(s + 1), csv::format(trace.p_da_up[s]), csv::format(trace.p_rt[s])});
}

} // namespace aggsched
