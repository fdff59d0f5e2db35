// aggsched command line: schedule-da, run-rt, report, simulate.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "aggsched/ledger.hpp"
#include "aggsched/optimizer_da.hpp"
#include "aggsched/optimizer_rt.hpp"
#include "aggsched/price_stats.hpp"
#include "aggsched/prosumer.hpp"
#include "aggsched/simharness.hpp"

namespace fs = std::filesystem;
using namespace aggsched;

namespace
{

void write_json(const fs::path& path, const nlohmann::ordered_json& j)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

struct ScheduleDaArgs
{
    fs::path pool, price_model, out = ".";
    double lambda = 1.0;
    double tol = 1e-8;
    int hours = 24;
    bool serial = false;
};

int schedule_da(const ScheduleDaArgs& a)
{
    const TimeGrid grid(a.hours, 1);
    auto pool = read_pool(a.pool, grid);
    const PriceModel model = read_price_model(a.price_model, TimeGrid(a.hours, 1));
    const DaProblem problem(grid, pool, model.da_forecast, model.da_cov, a.lambda);
    DaSettings s;
    s.qp.eps_abs = a.tol;
    s.exec = a.serial ? Exec::serial : Exec::parallel;
    const DaSolution sol = solve_da(problem, s);
    fs::create_directories(a.out);
    write_schedule(a.out / "da_schedule.csv", schedule_table(sol, pool));
    write_json(a.out / "da_summary.json", {{"objective", sol.objective},
                                           {"predicted_cost", sol.price_term},
                                           {"risk_term", sol.risk_term},
                                           {"risk_value", sol.risk_value},
                                           {"lambda_da", a.lambda},
                                           {"status", to_string(sol.status)},
                                           {"iterations", sol.iterations},
                                           {"primal_residual", sol.primal_residual},
                                           {"dual_residual", sol.dual_residual},
                                           {"aggregation_residual", sol.aggregation_residual},
                                           {"local_violation", sol.local_violation}});
    fmt::print("day-ahead objective {:.6f} $ (predicted cost {:.6f} $, risk {:.6f} $), {} iterations\n", sol.objective,
               sol.price_term, sol.risk_term, sol.iterations);
    return 0;
}

struct RunRtArgs
{
    fs::path schedule, pool, da_prices, rt_prices, price_model, out = ".";
    double lambda_rt = 1.0, lambda_da = 1.0;
    int horizon = 3;
    double delta_plus = 0.0, delta_minus = 0.0;
    std::string regime = "caiso";
    std::uint64_t seed = 1;
    double rt_noise = 0.0;
    bool serial = false;
    bool cold = false;
};

int run_rt(const RunRtArgs& a)
{
    const int hours = 24;
    const TimeGrid grid(hours, a.horizon);
    auto pool = read_pool(a.pool, grid);
    if (a.rt_noise > 0.0)
        resample_realizations(pool, grid, a.rt_noise, a.seed);
    const ScheduleTable schedule = read_schedule(a.schedule, grid);
    if (schedule.prosumer_ids.size() != pool.size())
        throw std::runtime_error("schedule and pool list different numbers of prosumers");
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (schedule.prosumer_ids[i] != pool[i].id)
            throw std::runtime_error(fmt::format("schedule lists prosumer {} where the pool has {}",
                                                 schedule.prosumer_ids[i], pool[i].id));
    const PriceModel model = read_price_model(a.price_model, grid);
    DayInputs in;
    in.grid = grid;
    in.pool = pool;
    in.schedule = schedule.commitments();
    in.p_da = read_price_csv(a.da_prices, Resolution::hourly, true).values;
    in.p_rt = read_price_csv(a.rt_prices, Resolution::quarter_hourly, false).values;
    in.p_rt_forecast = model.rt_forecast;
    in.rt_cov_template = model.rt_cov_template;
    in.lambda = a.lambda_rt;
    in.regime = ImbalanceRegime::make(parse_regime(a.regime), a.delta_plus, a.delta_minus);
    MpcOptions mo;
    mo.settings.exec = a.serial ? Exec::serial : Exec::parallel;
    mo.warm_start = !a.cold;
    const RtTrace trace = run_mpc(in, mo);

    fs::create_directories(a.out);
    const SlotTrace st = slot_trace(trace);
    write_slot_trace(a.out / "rt_trace.csv", st);
    write_hour_trace(a.out / "rt_hours.csv", hour_trace(trace));
    const CostLedger ledger =
        build_ledger({schedule.g, model.da_forecast, in.p_da, model.da_cov, a.lambda_da, st, hour_trace(trace), in.regime});
    write_ledger(a.out / "ledger.json", ledger);
    fmt::print("real-time supplementary cost {:.6f} $, imbalance {:.6f} $\n", ledger.rt_supplementary,
               ledger.imbalance_total);
    return 0;
}

struct ReportArgs
{
    fs::path run_dir, schedule, trace, hours_csv, price_model, da_prices, out;
    double lambda_da = 1.0;
    std::string regime = "caiso";
    double delta_plus = 0.0, delta_minus = 0.0;
};

int report(const ReportArgs& a)
{
    const TimeGrid grid(24, 1);
    auto require = [](const fs::path& given, const char* name) {
        if (given.empty())
            throw std::invalid_argument(fmt::format("report: --{} is required with explicit input files", name));
    };
    CostLedger ledger;
    ScheduleTable schedule;
    SlotTrace trace;
    const bool explicit_files = !a.schedule.empty() || !a.trace.empty();
    if (!explicit_files)
    {
        if (a.run_dir.empty())
            throw std::invalid_argument("report: give --run-dir or the individual input files");
        ledger = ledger_from_directory(a.run_dir);
        schedule = read_schedule(a.run_dir / "da_schedule.csv", grid);
        trace = read_slot_trace(a.run_dir / "rt_trace.csv");
    }
    else
    {
        require(a.schedule, "schedule");
        require(a.trace, "trace");
        require(a.hours_csv, "hours");
        require(a.price_model, "price-model");
        require(a.da_prices, "da-prices");
        const PriceModel model = read_price_model(a.price_model, grid);
        schedule = read_schedule(a.schedule, grid);
        trace = read_slot_trace(a.trace);
        ledger = build_ledger({schedule.g, model.da_forecast,
                               read_price_csv(a.da_prices, Resolution::hourly, true).values, model.da_cov, a.lambda_da,
                               trace, read_hour_trace(a.hours_csv),
                               ImbalanceRegime::make(parse_regime(a.regime), a.delta_plus, a.delta_minus)});
    }
    const fs::path out = a.out.empty() ? (a.run_dir.empty() ? fs::path(".") : a.run_dir / "report") : a.out;
    fs::create_directories(out);
    write_ledger(out / "ledger.json", ledger);
    write_plot_series(out / "plots", grid, schedule.g, schedule.ev, trace);
    std::cout << ledger.to_json().dump(2) << '\n';
    return 0;
}

int simulate_cmd(const ExperimentConfig& config, bool serial, bool cold)
{
    SimulateOptions o;
    o.exec = serial ? Exec::serial : Exec::parallel;
    o.warm_start = !cold;
    const ExperimentBundle b = simulate(config, o);
    write_bundle(b, config.out_dir);
    fmt::print("simulated {} prosumers on {}: DA predicted {:.4f} $, cleared {:.4f} $, RT supplementary {:.4f} $, "
               "imbalance {:.4f} $ ({:.1f} s)\n",
               b.pool.size(), config.date, b.ledger.predicted_da_cost, b.ledger.cleared_da_cost,
               b.ledger.rt_supplementary, b.ledger.imbalance_total, b.wall_seconds);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Day-ahead and real-time scheduling for a prosumer aggregator"};
    app.set_version_flag("--version", std::string("aggsched ") + kVersion);
    app.require_subcommand(1);

    ScheduleDaArgs da;
    auto* c_da = app.add_subcommand("schedule-da", "Solve the day-ahead mean-variance schedule");
    c_da->add_option("--pool", da.pool, "Pool bundle directory")->required()->check(CLI::ExistingDirectory);
    c_da->add_option("--price-model", da.price_model, "Price model directory")->required()->check(CLI::ExistingDirectory);
    c_da->add_option("--lambda-da", da.lambda, "Day-ahead risk weight")->capture_default_str();
    c_da->add_option("--tol", da.tol, "Absolute solver tolerance")->capture_default_str();
    c_da->add_option("--hours", da.hours, "Horizon in hours")->capture_default_str();
    c_da->add_option("--out", da.out, "Output directory")->capture_default_str();
    c_da->add_flag("--serial", da.serial, "Use the serial reference kernels");

    RunRtArgs rt;
    auto* c_rt = app.add_subcommand("run-rt", "Run the real-time receding-horizon loop over one day");
    c_rt->add_option("--schedule", rt.schedule, "da_schedule.csv")->required()->check(CLI::ExistingFile);
    c_rt->add_option("--pool", rt.pool, "Pool bundle directory")->required()->check(CLI::ExistingDirectory);
    c_rt->add_option("--da-prices", rt.da_prices, "Cleared day-ahead prices CSV")->required()->check(CLI::ExistingFile);
    c_rt->add_option("--rt-prices", rt.rt_prices, "Realized real-time prices CSV")->required()->check(CLI::ExistingFile);
    c_rt->add_option("--price-model", rt.price_model, "Price model directory")->required()->check(CLI::ExistingDirectory);
    c_rt->add_option("--lambda-rt", rt.lambda_rt, "Real-time risk weight")->capture_default_str();
    c_rt->add_option("--lambda-da", rt.lambda_da, "Day-ahead risk weight (ledger risk term)")->capture_default_str();
    c_rt->add_option("--horizon-hours", rt.horizon, "Lookahead in hours")->capture_default_str();
    c_rt->add_option("--delta-plus", rt.delta_plus, "Imbalance price for helpful deviations, $/MWh")->capture_default_str();
    c_rt->add_option("--delta-minus", rt.delta_minus, "Imbalance price for harmful deviations, $/MWh")
        ->capture_default_str();
    c_rt->add_option("--regime", rt.regime, "Imbalance regime")
        ->check(CLI::IsMember({"caiso", "uk", "germany"}))
        ->capture_default_str();
    c_rt->add_option("--seed", rt.seed, "Seed for redrawn realizations")->capture_default_str();
    c_rt->add_option("--rt-noise", rt.rt_noise, "Redraw realizations with this relative sigma (0 keeps the pool's)")
        ->capture_default_str();
    c_rt->add_option("--out", rt.out, "Output directory")->capture_default_str();
    c_rt->add_flag("--serial", rt.serial, "Use the serial reference kernels");
    c_rt->add_flag("--cold", rt.cold, "Disable warm starts between hours");

    ReportArgs rp;
    auto* c_rp = app.add_subcommand("report", "Recompute the cost ledger and plot series from CSV outputs");
    c_rp->add_option("--run-dir", rp.run_dir, "Directory written by simulate")->check(CLI::ExistingDirectory);
    c_rp->add_option("--schedule", rp.schedule, "da_schedule.csv")->check(CLI::ExistingFile);
    c_rp->add_option("--trace", rp.trace, "rt_trace.csv")->check(CLI::ExistingFile);
    c_rp->add_option("--hours", rp.hours_csv, "rt_hours.csv")->check(CLI::ExistingFile);
    c_rp->add_option("--price-model", rp.price_model, "Price model directory")->check(CLI::ExistingDirectory);
    c_rp->add_option("--da-prices", rp.da_prices, "Cleared day-ahead prices CSV")->check(CLI::ExistingFile);
    c_rp->add_option("--lambda-da", rp.lambda_da, "Day-ahead risk weight")->capture_default_str();
    c_rp->add_option("--regime", rp.regime, "Imbalance regime")->check(CLI::IsMember({"caiso", "uk", "germany"}));
    c_rp->add_option("--delta-plus", rp.delta_plus, "Imbalance price, $/MWh");
    c_rp->add_option("--delta-minus", rp.delta_minus, "Imbalance price, $/MWh");
    c_rp->add_option("--out", rp.out, "Output directory");

    ExperimentConfig cfg;
    bool sim_serial = false, sim_cold = false;
    auto* c_sim = app.add_subcommand("simulate", "Run a full single-day experiment");
    c_sim->set_config("--config", "", "key = value configuration file");
    c_sim->add_option("--n-prosumers", cfg.n_prosumers)->capture_default_str();
    c_sim->add_option("--hours", cfg.hours)->capture_default_str();
    c_sim->add_option("--horizon-hours", cfg.horizon_hours)->capture_default_str();
    c_sim->add_option("--lambda-da", cfg.lambda_da)->capture_default_str();
    c_sim->add_option("--lambda-rt", cfg.lambda_rt)->capture_default_str();
    c_sim->add_option("--delta-plus", cfg.delta_plus)->capture_default_str();
    c_sim->add_option("--delta-minus", cfg.delta_minus)->capture_default_str();
    c_sim->add_option("--regime", cfg.regime)->check(CLI::IsMember({"caiso", "uk", "germany"}))->capture_default_str();
    c_sim->add_option("--seed", cfg.seed, "Real-time prices and realizations")->capture_default_str();
    c_sim->add_option("--da-seed", cfg.da_seed, "Pool and day-ahead prices")->capture_default_str();
    c_sim->add_option("--load-spread", cfg.load_spread)->capture_default_str();
    c_sim->add_option("--rt-noise", cfg.rt_noise)->capture_default_str();
    c_sim->add_option("--g-limit", cfg.g_limit_kw)->capture_default_str();
    c_sim->add_option("--eta", cfg.eta)->capture_default_str();
    c_sim->add_option("--ev-share", cfg.ev_share)->capture_default_str();
    c_sim->add_option("--da-price-noise", cfg.da_price_noise)->capture_default_str();
    c_sim->add_option("--rt-price-noise", cfg.rt_price_noise)->capture_default_str();
    c_sim->add_option("--spike-probability", cfg.spike_probability)->capture_default_str();
    c_sim->add_option("--history-days", cfg.history_days)->capture_default_str();
    c_sim->add_option("--date", cfg.date)->capture_default_str();
    c_sim->add_option("--pool-dir", cfg.pool_dir, "Load the pool instead of synthesizing it");
    c_sim->add_option("--da-price-history", cfg.da_price_history, "Hourly day-ahead prices CSV");
    c_sim->add_option("--rt-price-history", cfg.rt_price_history, "Quarter-hourly real-time prices CSV");
    c_sim->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
    c_sim->add_flag("--serial", sim_serial, "Use the serial reference kernels");
    c_sim->add_flag("--cold", sim_cold, "Disable warm starts between hours");

    CLI11_PARSE(app, argc, argv);
    try
    {
        if (c_da->parsed())
            return schedule_da(da);
        if (c_rt->parsed())
            return run_rt(rt);
        if (c_rp->parsed())
            return report(rp);
        if (c_sim->parsed())
            return simulate_cmd(cfg, sim_serial, sim_cold);
    }
    catch (const InfeasibleProsumerError& e)
    {
        fmt::print(stderr, "error: infeasible prosumer {}: {}\n", e.prosumer_id(), e.what());
        return 3;
    }
    catch (const std::exception& e)
    {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
