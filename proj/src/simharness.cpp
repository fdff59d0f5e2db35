#include "aggsched/simharness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "aggsched/csv.hpp"

namespace aggsched
{

namespace
{

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f())
{
    try
    {
        return f();
    }
    catch (const StageError&)
    {
        throw;
    }
    catch (const std::exception& e)
    {
        throw StageError(stage, e.what());
    }
}

bool weekend(Date d)
{
    const std::chrono::weekday wd{d};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

std::mt19937_64 day_rng(std::uint64_t seed, std::int64_t day, std::uint32_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(day), static_cast<std::uint32_t>(static_cast<std::uint64_t>(day) >> 32),
                      stream};
    return std::mt19937_64(seq);
}

constexpr std::uint32_t kDaStream = 0xda;
constexpr std::uint32_t kRtStream = 0x47;

PriceSeries concat(const std::vector<Eigen::VectorXd>& days, Date first, Resolution r)
{
    Eigen::Index n = 0;
    for (const auto& d : days)
        n += d.size();
    Eigen::VectorXd v(n);
    Eigen::Index at = 0;
    for (const auto& d : days)
    {
        v.segment(at, d.size()) = d;
        at += d.size();
    }
    return make_series(first, r, v);
}

/// Slice of `s` covering [from, to) days.
PriceSeries day_range(const PriceSeries& s, Date from, Date to)
{
    PriceSeries out;
    out.resolution = s.resolution;
    const std::int64_t a = to_unix(from), b = to_unix(to);
    std::vector<double> vals;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s.timestamps[i] >= a && s.timestamps[i] < b)
        {
            out.timestamps.push_back(s.timestamps[i]);
            vals.push_back(s.values[static_cast<Eigen::Index>(i)]);
        }
    out.values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return out;
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    return out;
}

nlohmann::ordered_json config_json(const ExperimentConfig& c)
{
    return {{"n_prosumers", c.n_prosumers},
            {"hours", c.hours},
            {"horizon_hours", c.horizon_hours},
            {"lambda_da", c.lambda_da},
            {"lambda_rt", c.lambda_rt},
            {"delta_plus", c.delta_plus},
            {"delta_minus", c.delta_minus},
            {"regime", c.regime},
            {"da_seed", c.da_seed},
            {"seed", c.seed},
            {"load_spread", c.load_spread},
            {"rt_noise", c.rt_noise},
            {"g_limit_kw", c.g_limit_kw},
            {"eta", c.eta},
            {"ev_share", c.ev_share},
            {"da_price_noise", c.da_price_noise},
            {"rt_price_noise", c.rt_price_noise},
            {"spike_probability", c.spike_probability},
            {"history_days", c.history_days},
            {"date", c.date},
            {"pool_dir", c.pool_dir.string()},
            {"da_price_history", c.da_price_history.string()},
            {"rt_price_history", c.rt_price_history.string()}};
}

} // namespace

void ExperimentConfig::validate() const
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok)
            throw std::invalid_argument("config: " + what);
    };
    require(n_prosumers >= 1, "n_prosumers must be >= 1");
    require(hours == 24, "hours must be 24 (single-day experiments)");
    require(horizon_hours >= 1 && horizon_hours <= hours, "horizon_hours must be in 1..hours");
    require(lambda_da >= 0.0 && lambda_rt >= 0.0, "risk weights must be >= 0");
    require(load_spread >= 0.0 && load_spread < 1.0, "load_spread must be in [0, 1)");
    require(rt_noise >= 0.0, "rt_noise must be >= 0");
    require(g_limit_kw > 0.0, "g_limit_kw must be > 0");
    require(eta > 0.0 && eta <= 1.0, "eta must be in (0, 1]");
    require(ev_share >= 0.0 && ev_share <= 1.0, "ev_share must be in [0, 1]");
    require(da_price_noise >= 0.0 && rt_price_noise >= 0.0, "price noise levels must be >= 0");
    require(spike_probability >= 0.0 && spike_probability <= 1.0, "spike_probability must be in [0, 1]");
    require(history_days >= 9, "history_days must be >= 9 (7 days of forecaster history plus 2 backtest days)");
    parse_date(date);
    imbalance_regime();
}

ImbalanceRegime ExperimentConfig::imbalance_regime() const
{
    return ImbalanceRegime::make(parse_regime(regime), delta_plus, delta_minus);
}

std::string ExperimentConfig::canonical() const { return config_json(*this).dump(); }

std::uint64_t fnv1a64(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Eigen::VectorXd default_aggregate_load(int n)
{
    Eigen::VectorXd l(24);
    for (int h = 0; h < 24; ++h)
    {
        const double t = h + 0.5;
        l[h] = 0.45 + 0.35 * std::exp(-std::pow((t - 8.0) / 1.5, 2)) + 0.75 * std::exp(-std::pow((t - 19.5) / 2.0, 2)) +
               0.1 * std::exp(-std::pow((t - 13.0) / 3.0, 2));
    }
    return l * n;
}

Eigen::VectorXd default_aggregate_pv(int n)
{
    Eigen::VectorXd s = Eigen::VectorXd::Zero(24);
    for (int h = 6; h < 19; ++h)
        s[h] = 1.6 * std::sin(std::numbers::pi * (h + 0.5 - 6.0) / 13.0);
    return s * n;
}

Eigen::VectorXd default_price_profile(bool is_weekend)
{
    Eigen::VectorXd p(24);
    for (int h = 0; h < 24; ++h)
    {
        const double t = h + 0.5;
        p[h] = 38.0 - 14.0 * std::exp(-std::pow((t - 12.5) / 3.0, 2)) + 22.0 * std::exp(-std::pow((t - 19.0) / 2.0, 2)) +
               6.0 * std::exp(-std::pow((t - 7.5) / 1.5, 2));
    }
    return is_weekend ? Eigen::VectorXd(0.9 * p) : p;
}

Eigen::VectorXd synth_da_prices(std::mt19937_64& rng, const Eigen::VectorXd& base, const PriceNoise& noise)
{
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd p(base.size());
    const double stationary = noise.da_sigma / std::sqrt(1.0 - noise.da_phi * noise.da_phi);
    double e = stationary * z(rng);
    for (Eigen::Index t = 0; t < base.size(); ++t)
    {
        if (t > 0)
            e = noise.da_phi * e + noise.da_sigma * z(rng);
        p[t] = std::clamp(base[t] + e, 0.0, 100.0);
    }
    return p;
}

Eigen::VectorXd synth_rt_prices(std::mt19937_64& rng, const Eigen::VectorXd& p_da, const PriceNoise& noise)
{
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd p(kQuartersPerHour * p_da.size());
    for (Eigen::Index t = 0; t < p.size(); ++t)
    {
        const double base = p_da[t / kQuartersPerHour];
        double v = noise.rt_ratio * base + noise.rt_sigma * z(rng);
        const double draw = u(rng);
        const double magnitude = u(rng) * noise.spike_max;
        const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
        if (draw < noise.spike_probability)
            v += sign * magnitude * base;
        p[t] = v;
    }
    return p;
}

SynthPrices synth_prices(std::uint64_t seed, const Eigen::VectorXd& base_da_profile, const PriceNoise& noise)
{
    if (base_da_profile.size() != 24)
        throw std::invalid_argument("synth_prices: base profile must have 24 hourly values");
    std::mt19937_64 rng(seed);
    SynthPrices out;
    out.p_da = synth_da_prices(rng, base_da_profile, noise);
    out.p_rt = synth_rt_prices(rng, out.p_da, noise);
    return out;
}

ExperimentBundle simulate(const ExperimentConfig& config, const SimulateOptions& options)
{
    const auto started = std::chrono::steady_clock::now();
    run_stage("config", [&] { config.validate(); });

    ExperimentBundle b;
    b.config = config;
    b.config_hash = fnv1a64(config.canonical());
    b.grid = TimeGrid(config.hours, config.horizon_hours);
    const Date date = parse_date(config.date);
    const Date first = date - std::chrono::days{config.history_days};
    const ImbalanceRegime regime = config.imbalance_regime();

    b.pool = run_stage("pool", [&] {
        std::vector<Prosumer> pool;
        if (!config.pool_dir.empty())
            return read_pool(config.pool_dir, b.grid);
        PoolConfig pc;
        pc.load_spread = config.load_spread;
        pc.rt_noise = config.rt_noise;
        pc.g_lo = -config.g_limit_kw;
        pc.g_hi = config.g_limit_kw;
        pc.fleet.ev_share = config.ev_share;
        pc.fleet.eta = config.eta;
        pool = synth_pool(config.n_prosumers, default_aggregate_load(config.n_prosumers),
                          default_aggregate_pv(config.n_prosumers), pc, config.da_seed, b.grid);
        if (config.rt_noise > 0.0)
            resample_realizations(pool, b.grid, config.rt_noise, config.seed);
        else
            clear_realization_noise(pool, b.grid);
        return pool;
    });

    run_stage("prices", [&] {
        PriceSeries da_all, rt_all;
        if (!config.da_price_history.empty() || !config.rt_price_history.empty())
        {
            if (config.da_price_history.empty() || config.rt_price_history.empty())
                throw std::invalid_argument("give both day-ahead and real-time price files, or neither");
            da_all = read_price_csv(config.da_price_history, Resolution::hourly, true);
            rt_all = read_price_csv(config.rt_price_history, Resolution::quarter_hourly, false);
        }
        else
        {
            PriceNoise noise;
            noise.da_sigma = config.da_price_noise;
            noise.rt_sigma = config.rt_price_noise;
            noise.spike_probability = config.spike_probability;
            std::vector<Eigen::VectorXd> da_days, rt_days;
            for (Date d = first; d <= date; d += std::chrono::days{1})
            {
                const std::int64_t day = d.time_since_epoch().count();
                auto rng_da = day_rng(config.da_seed, day, kDaStream);
                da_days.push_back(synth_da_prices(rng_da, default_price_profile(weekend(d)), noise));
                auto rng_rt = day_rng(config.seed, day, kRtStream);
                rt_days.push_back(synth_rt_prices(rng_rt, da_days.back(), noise));
            }
            da_all = concat(da_days, first, Resolution::hourly);
            rt_all = concat(rt_days, first, Resolution::quarter_hourly);
        }
        b.da_history = day_range(da_all, first, date);
        b.rt_history = day_range(rt_all, first, date);
        b.da_cleared = day_range(da_all, date, date + std::chrono::days{1});
        b.rt_realized = day_range(rt_all, date, date + std::chrono::days{1});
        if (b.da_cleared.values.size() != 24 || b.rt_realized.values.size() != 96)
            throw std::runtime_error("price data does not cover " + config.date + " completely");
    });

    b.price_model = run_stage("price_model", [&] {
        return build_price_model(b.da_history, b.rt_history, date, b.grid);
    });

    b.da = run_stage("day_ahead", [&] {
        const DaProblem problem(b.grid, b.pool, b.price_model.da_forecast, b.price_model.da_cov, config.lambda_da);
        DaSettings s;
        s.exec = options.exec;
        return solve_da(problem, s);
    });
    b.schedule = schedule_table(b.da, b.pool);

    b.rt = run_stage("real_time", [&] {
        const DayInputs in = day_inputs(b);
        MpcOptions mo;
        mo.settings.exec = options.exec;
        mo.warm_start = options.warm_start;
        return run_mpc(in, mo);
    });

    b.ledger = run_stage("settlement", [&] {
        return build_ledger({b.schedule.g, b.price_model.da_forecast, b.da_cleared.values, b.price_model.da_cov,
                             config.lambda_da, slot_trace(b.rt), hour_trace(b.rt), regime});
    });
    b.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return b;
}

DayInputs day_inputs(const ExperimentBundle& b)
{
    DayInputs in;
    in.grid = b.grid;
    in.pool = b.pool;
    in.schedule = b.schedule.commitments();
    in.p_da = b.da_cleared.values;
    in.p_rt = b.rt_realized.values;
    in.p_rt_forecast = b.price_model.rt_forecast;
    in.rt_cov_template = b.price_model.rt_cov_template;
    in.lambda = b.config.lambda_rt;
    in.regime = b.config.imbalance_regime();
    return in;
}

void write_bundle(const ExperimentBundle& b, const std::filesystem::path& dir)
{
    run_stage("output", [&] {
        std::filesystem::create_directories(dir);
        write_schedule(dir / "da_schedule.csv", b.schedule);
        {
            nlohmann::ordered_json j{{"objective", b.da.objective},
                                     {"predicted_cost", b.da.price_term},
                                     {"risk_term", b.da.risk_term},
                                     {"risk_value", b.da.risk_value},
                                     {"lambda_da", b.config.lambda_da},
                                     {"status", to_string(b.da.status)},
                                     {"iterations", b.da.iterations},
                                     {"primal_residual", b.da.primal_residual},
                                     {"dual_residual", b.da.dual_residual},
                                     {"aggregation_residual", b.da.aggregation_residual},
                                     {"local_violation", b.da.local_violation}};
            open_out(dir / "da_summary.json") << j.dump(2) << '\n';
        }
        const SlotTrace st = slot_trace(b.rt);
        write_slot_trace(dir / "rt_trace.csv", st);
        write_hour_trace(dir / "rt_hours.csv", hour_trace(b.rt));
        {
            auto out = open_out(dir / "rt_trace_prosumers.csv");
            csv::write_row(out, {"prosumer", "slot", "dg_kw", "dev_kw"});
            for (Eigen::Index i = 0; i < b.rt.dg_i.rows(); ++i)
                for (Eigen::Index s = 0; s < b.rt.dg_i.cols(); ++s)
                    csv::write_row(out, {std::to_string(b.pool[static_cast<std::size_t>(i)].id), std::to_string(s + 1),
                                         csv::format(b.rt.dg_i(i, s)), csv::format(b.rt.dev_i(i, s))});
        }
        write_ledger(dir / "ledger.json", b.ledger);
        write_plot_series(dir / "plots", b.grid, b.schedule.g, b.schedule.ev, st);
        write_price_model(dir / "price_model", b.price_model, parse_date(b.config.date));
        std::filesystem::create_directories(dir / "prices");
        write_price_csv(dir / "prices" / "p_da.csv", b.da_cleared);
        write_price_csv(dir / "prices" / "p_rt.csv", b.rt_realized);
        write_price_csv(dir / "prices" / "p_da_history.csv", b.da_history);
        write_price_csv(dir / "prices" / "p_rt_history.csv", b.rt_history);
        write_pool(dir / "pool", b.pool, b.grid);

        nlohmann::ordered_json meta{{"tool", "aggsched"},
                                    {"version", kVersion},
                                    {"config_hash", fmt::format("{:016x}", b.config_hash)},
                                    {"wall_seconds", b.wall_seconds},
                                    {"config", config_json(b.config)}};
        open_out(dir / "meta.json") << meta.dump(2) << '\n';
    });
}

CostLedger ledger_from_directory(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "meta.json");
    if (!in)
        throw std::runtime_error("cannot read " + (dir / "meta.json").string());
    const auto meta = nlohmann::json::parse(in);
    const auto& c = meta.at("config");
    const TimeGrid grid(c.at("hours").get<int>(), c.at("horizon_hours").get<int>());
    const ImbalanceRegime regime = ImbalanceRegime::make(parse_regime(c.at("regime").get<std::string>()),
                                                         c.at("delta_plus").get<double>(),
                                                         c.at("delta_minus").get<double>());
    const PriceModel model = read_price_model(dir / "price_model", grid);
    const ScheduleTable schedule = read_schedule(dir / "da_schedule.csv", grid);
    return build_ledger({schedule.g, model.da_forecast,
                         read_price_csv(dir / "prices" / "p_da.csv", Resolution::hourly, true).values, model.da_cov,
                         c.at("lambda_da").get<double>(), read_slot_trace(dir / "rt_trace.csv"),
                         read_hour_trace(dir / "rt_hours.csv"), regime});
}

} // namespace aggsched
