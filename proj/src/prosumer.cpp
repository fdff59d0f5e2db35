#include "aggsched/prosumer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <string>

#include <fmt/format.h>

#include "aggsched/csv.hpp"

namespace aggsched
{

namespace
{

constexpr double kFeasTol = 1e-9;

void require_size(const Eigen::VectorXd& v, Eigen::Index n, const char* name, int id)
{
    if (v.size() != n)
        throw std::invalid_argument("prosumer " + std::to_string(id) + ": " + name + " has length " +
                                    std::to_string(v.size()) + ", expected " + std::to_string(n));
}

Eigen::VectorXd slice(const Eigen::VectorXd& v, SlotRange w)
{
    return v.segment(static_cast<Eigen::Index>(w.offset), static_cast<Eigen::Index>(w.length));
}

struct Interval
{
    double lo, hi;
};

// Per-slot interval of total EV power compatible with the EV and grid limits.
Interval power_interval(const WindowContext& ctx, Eigen::Index k)
{
    const double net = ctx.load[k] - ctx.pv[k];
    return {std::max(ctx.ev_power_lo[k], ctx.g_lo - net), std::min(ctx.ev_power_hi[k], ctx.g_hi - net)};
}

bool energy_reachable(const WindowContext& ctx, double relax)
{
    const double gain = ctx.eta * ctx.step_hours;
    Interval reach{ctx.e_past, ctx.e_past};
    for (Eigen::Index k = 0; k < ctx.length(); ++k)
    {
        const Interval p = power_interval(ctx, k);
        reach.lo = std::max(reach.lo + gain * p.lo, ctx.cum_lo[k] - ctx.cum_relaxation - relax);
        reach.hi = std::min(reach.hi + gain * p.hi, ctx.cum_hi[k] + ctx.cum_relaxation + relax);
        if (reach.lo > reach.hi + kFeasTol)
            return false;
    }
    return true;
}

void add_realization_noise(Prosumer& p, const TimeGrid& grid, double sigma, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    p.load_rt = grid.upsample_hourly(p.load_da);
    p.pv_rt = grid.upsample_hourly(p.pv_da);
    for (Eigen::Index k = 0; k < p.load_rt.size(); ++k)
    {
        p.load_rt[k] = std::max(0.0, p.load_rt[k] * (1.0 + sigma * normal(rng)));
        p.pv_rt[k] = std::max(0.0, p.pv_rt[k] * (1.0 + sigma * normal(rng)));
    }
}

} // namespace

void Prosumer::validate(const TimeGrid& grid) const
{
    const Eigen::Index T = grid.hours();
    const Eigen::Index R = grid.rt_length();
    require_size(load_da, T, "load_da", id);
    require_size(pv_da, T, "pv_da", id);
    require_size(load_rt, R, "load_rt", id);
    require_size(pv_rt, R, "pv_rt", id);
    require_size(ev_power_lo_rt, R, "ev_power_lo_rt", id);
    require_size(ev_power_hi_rt, R, "ev_power_hi_rt", id);
    require_size(ev_cum_lo_rt, R, "ev_cum_lo_rt", id);
    require_size(ev_cum_hi_rt, R, "ev_cum_hi_rt", id);
    require_size(ev_power_lo_da, T, "ev_power_lo_da", id);
    require_size(ev_power_hi_da, T, "ev_power_hi_da", id);
    require_size(ev_cum_lo_da, T, "ev_cum_lo_da", id);
    require_size(ev_cum_hi_da, T, "ev_cum_hi_da", id);
    const std::string who = "prosumer " + std::to_string(id) + ": ";
    if (!(eta > 0.0 && eta <= 1.0))
        throw std::invalid_argument(who + "eta must lie in (0, 1]");
    if (!(g_lo <= g_hi))
        throw std::invalid_argument(who + "g_lo > g_hi");
    if ((ev_power_lo_rt.array() > ev_power_hi_rt.array()).any())
        throw std::invalid_argument(who + "EV power lower bound exceeds upper bound");
    if ((ev_cum_lo_rt.array() > ev_cum_hi_rt.array()).any())
        throw std::invalid_argument(who + "EV energy lower bound exceeds upper bound");
}

void derive_day_ahead_bounds(Prosumer& p, const TimeGrid& grid)
{
    const int T = grid.hours();
    p.ev_power_lo_da.resize(T);
    p.ev_power_hi_da.resize(T);
    p.ev_cum_lo_da.resize(T);
    p.ev_cum_hi_da.resize(T);
    for (int h = 1; h <= T; ++h)
    {
        const SlotRange q = grid.hour_to_quarters(h);
        const double lo = slice(p.ev_power_lo_rt, q).maxCoeff();
        const double hi = slice(p.ev_power_hi_rt, q).minCoeff();
        p.ev_power_lo_da[h - 1] = std::min(lo, hi);
        p.ev_power_hi_da[h - 1] = hi;
        p.ev_cum_lo_da[h - 1] = p.ev_cum_lo_rt[static_cast<Eigen::Index>(q.end() - 1)];
        p.ev_cum_hi_da[h - 1] = p.ev_cum_hi_rt[static_cast<Eigen::Index>(q.end() - 1)];
    }
}

Eigen::MatrixXd cumulation_matrix(Eigen::Index n)
{
    return Eigen::MatrixXd::Ones(n, n).triangularView<Eigen::Lower>();
}

Eigen::VectorXd prefix_sums(const Eigen::VectorXd& x)
{
    Eigen::VectorXd out(x.size());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k)
        out[k] = acc += x[k];
    return out;
}

WindowContext day_ahead_context(const Prosumer& p, const TimeGrid& grid)
{
    WindowContext c;
    c.mode = Mode::day_ahead;
    c.window = {0, static_cast<std::size_t>(grid.hours())};
    c.step_hours = kDaStepHours;
    c.eta = p.eta;
    c.g_lo = p.g_lo;
    c.g_hi = p.g_hi;
    c.load = p.load_da;
    c.pv = p.pv_da;
    c.committed_ev = Eigen::VectorXd::Zero(grid.hours());
    c.committed_grid = Eigen::VectorXd::Zero(grid.hours());
    c.ev_power_lo = p.ev_power_lo_da;
    c.ev_power_hi = p.ev_power_hi_da;
    c.cum_lo = p.ev_cum_lo_da;
    c.cum_hi = p.ev_cum_hi_da;
    return c;
}

WindowContext real_time_context(const Prosumer& p, const TimeGrid& grid, SlotRange window,
                                const Commitment& commitment, double e_past, std::size_t observed_slots)
{
    if (window.end() > static_cast<std::size_t>(grid.rt_length()) || window.length == 0)
        throw std::out_of_range("real_time_context: window outside the day");
    if (commitment.ev_kw.size() != grid.hours() || commitment.grid_kw.size() != grid.hours())
        throw std::invalid_argument("real_time_context: day-ahead schedule does not cover the day");
    WindowContext c;
    c.mode = Mode::real_time;
    c.window = window;
    c.step_hours = grid.rt_step_hours();
    c.eta = p.eta;
    c.g_lo = p.g_lo;
    c.g_hi = p.g_hi;
    const Eigen::VectorXd load_fc = grid.upsample_hourly(p.load_da);
    const Eigen::VectorXd pv_fc = grid.upsample_hourly(p.pv_da);
    c.load = slice(load_fc, window);
    c.pv = slice(pv_fc, window);
    const auto observed = static_cast<Eigen::Index>(std::min(observed_slots, window.length));
    c.load.head(observed) = slice(p.load_rt, window).head(observed);
    c.pv.head(observed) = slice(p.pv_rt, window).head(observed);
    c.committed_ev = slice(grid.upsample_hourly(commitment.ev_kw), window);
    c.committed_grid = slice(grid.upsample_hourly(commitment.grid_kw), window);
    c.ev_power_lo = slice(p.ev_power_lo_rt, window);
    c.ev_power_hi = slice(p.ev_power_hi_rt, window);
    c.cum_lo = slice(p.ev_cum_lo_rt, window);
    c.cum_hi = slice(p.ev_cum_hi_rt, window);
    c.e_past = e_past;
    return c;
}

LocalConstraintSet build_power_balance(const WindowContext& ctx)
{
    // L + EV* + dEV = S + G* + dG   <=>   dEV - dG = S + G* - L - EV*
    LocalConstraintSet set{ctx.mode, ctx.window, {}};
    for (Eigen::Index k = 0; k < ctx.length(); ++k)
    {
        const double rhs = ctx.pv[k] + ctx.committed_grid[k] - ctx.load[k] - ctx.committed_ev[k];
        set.rows.push_back({ConstraintFamily::power_balance, k, rhs, rhs,
                            {{VarKind::ev, k, 1.0}, {VarKind::grid, k, -1.0}}});
    }
    return set;
}

LocalConstraintSet build_grid_limits(const WindowContext& ctx)
{
    LocalConstraintSet set{ctx.mode, ctx.window, {}};
    for (Eigen::Index k = 0; k < ctx.length(); ++k)
        set.rows.push_back({ConstraintFamily::grid_limit, k, ctx.g_lo - ctx.committed_grid[k],
                            ctx.g_hi - ctx.committed_grid[k], {{VarKind::grid, k, 1.0}}});
    return set;
}

LocalConstraintSet build_ev_energy(const WindowContext& ctx)
{
    if ((ctx.cum_lo.array() > ctx.cum_hi.array()).any())
        throw std::invalid_argument("build_ev_energy: energy lower bound exceeds upper bound");
    LocalConstraintSet set{ctx.mode, ctx.window, {}};
    const double gain = ctx.eta * ctx.step_hours;
    const Eigen::MatrixXd A = cumulation_matrix(ctx.length());
    const Eigen::VectorXd committed = gain * (A * ctx.committed_ev);
    for (Eigen::Index j = 0; j < ctx.length(); ++j)
    {
        ConstraintRow row{ConstraintFamily::ev_energy, j,
                          ctx.cum_lo[j] - ctx.cum_relaxation - ctx.e_past - committed[j],
                          ctx.cum_hi[j] + ctx.cum_relaxation - ctx.e_past - committed[j],
                          {}};
        for (Eigen::Index k = 0; k <= j; ++k)
            row.terms.push_back({VarKind::ev, k, gain * A(j, k)});
        set.rows.push_back(std::move(row));
    }
    return set;
}

LocalConstraintSet build_ev_power(const WindowContext& ctx)
{
    LocalConstraintSet set{ctx.mode, ctx.window, {}};
    for (Eigen::Index k = 0; k < ctx.length(); ++k)
        set.rows.push_back({ConstraintFamily::ev_power, k, ctx.ev_power_lo[k] - ctx.committed_ev[k],
                            ctx.ev_power_hi[k] - ctx.committed_ev[k], {{VarKind::ev, k, 1.0}}});
    return set;
}

LocalConstraintSet build_local_constraints(const WindowContext& ctx)
{
    LocalConstraintSet all{ctx.mode, ctx.window, {}};
    for (auto* build : {&build_power_balance, &build_grid_limits, &build_ev_energy, &build_ev_power})
    {
        auto part = build(ctx);
        std::move(part.rows.begin(), part.rows.end(), std::back_inserter(all.rows));
    }
    return all;
}

std::vector<LocalConstraintSet> build_pool_constraints(std::span<const WindowContext> contexts, Exec exec)
{
    std::vector<LocalConstraintSet> out(contexts.size());
    const auto n = static_cast<std::ptrdiff_t>(contexts.size());
    if (exec == Exec::parallel)
    {
#pragma omp parallel for schedule(dynamic, 4)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = build_local_constraints(contexts[static_cast<std::size_t>(i)]);
    }
    else
    {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = build_local_constraints(contexts[static_cast<std::size_t>(i)]);
    }
    return out;
}

double max_violation(const LocalConstraintSet& set, const Eigen::VectorXd& ev, const Eigen::VectorXd& grid)
{
    double worst = 0.0;
    for (const auto& row : set.rows)
    {
        double v = 0.0;
        for (const auto& t : row.terms)
            v += t.coef * (t.kind == VarKind::ev ? ev[t.slot] : grid[t.slot]);
        worst = std::max({worst, row.lower - v, v - row.upper});
    }
    return worst;
}

LocalFeasibility check_feasibility(const WindowContext& ctx)
{
    LocalFeasibility f;
    for (Eigen::Index k = 0; k < ctx.length(); ++k)
    {
        const Interval p = power_interval(ctx, k);
        if (p.lo > p.hi + kFeasTol)
        {
            f.power_feasible = false;
            f.first_bad_slot = k;
            return f;
        }
    }
    if (energy_reachable(ctx, 0.0))
        return f;
    double lo = 0.0, hi = 1.0;
    while (!energy_reachable(ctx, hi))
    {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e9)
            throw std::runtime_error("check_feasibility: energy bounds cannot be repaired");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it)
    {
        const double mid = 0.5 * (lo + hi);
        (energy_reachable(ctx, mid) ? hi : lo) = mid;
    }
    f.min_relaxation = hi <= kFeasTol ? 0.0 : hi + 1e-7;
    return f;
}

Eigen::VectorXd snap_to_feasible(const WindowContext& ctx, const Eigen::VectorXd& ev)
{
    const Eigen::Index L = ctx.length();
    if (ev.size() != L)
        throw std::invalid_argument("snap_to_feasible: trajectory length does not match the window");
    const double gain = ctx.eta * ctx.step_hours;
    const double r = ctx.cum_relaxation;
    std::vector<Interval> reach(static_cast<std::size_t>(L));
    for (Eigen::Index k = L - 1; k >= 0; --k)
    {
        Interval c{ctx.cum_lo[k] - r, ctx.cum_hi[k] + r};
        if (k + 1 < L)
        {
            const Interval next = reach[static_cast<std::size_t>(k + 1)];
            const Interval p = power_interval(ctx, k + 1);
            c.lo = std::max(c.lo, next.lo - gain * p.hi);
            c.hi = std::min(c.hi, next.hi - gain * p.lo);
        }
        reach[static_cast<std::size_t>(k)] = c;
    }
    Eigen::VectorXd out(L);
    double cum = ctx.e_past;
    for (Eigen::Index k = 0; k < L; ++k)
    {
        const Interval p = power_interval(ctx, k);
        const Interval c = reach[static_cast<std::size_t>(k)];
        double lo = p.lo, hi = p.hi;
        if (gain > 0.0)
        {
            lo = std::max(lo, (c.lo - cum) / gain);
            hi = std::min(hi, (c.hi - cum) / gain);
        }
        if (lo > hi + kFeasTol)
            throw std::runtime_error(fmt::format("snap_to_feasible: no feasible power at window slot {} ([{}, {}])", k,
                                                 lo, hi));
        // Exact bounds win over the reachability margin when both are hit.
        out[k] = std::clamp(ev[k], std::min(lo, hi), hi);
        if (p.lo == p.hi)
            out[k] = p.lo;
        cum += gain * out[k];
    }
    return out;
}

std::vector<Prosumer> synth_pool(int n, const Eigen::VectorXd& aggregate_load_kw, const Eigen::VectorXd& aggregate_pv_kw,
                                 const PoolConfig& config, std::uint64_t seed, const TimeGrid& grid)
{
    if (n < 1)
        throw std::invalid_argument("synth_pool: need at least one prosumer");
    if (aggregate_load_kw.size() != grid.hours() || aggregate_pv_kw.size() != grid.hours())
        throw std::invalid_argument("synth_pool: profiles must have one value per hour");
    if ((aggregate_load_kw.array() < 0.0).any() || (aggregate_pv_kw.array() < 0.0).any())
        throw std::invalid_argument("synth_pool: profiles must be non-negative");
    if (config.fleet.power_options_kw.empty())
        throw std::invalid_argument("synth_pool: fleet spec needs at least one charger power");

    const int T = grid.hours();
    const int R = grid.rt_length();
    const auto& fleet = config.fleet;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> spread(-config.load_spread, config.load_spread);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> arrival(fleet.arrival_earliest_hour, fleet.arrival_latest_hour);
    std::uniform_int_distribution<int> duration(fleet.min_duration_hours, fleet.max_duration_hours);
    std::uniform_int_distribution<std::size_t> charger(0, fleet.power_options_kw.size() - 1);
    std::uniform_real_distribution<double> fraction(fleet.energy_fraction_lo, fleet.energy_fraction_hi);

    std::vector<Prosumer> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
    {
        Prosumer& p = pool[static_cast<std::size_t>(i)];
        p.id = i + 1;
        p.g_lo = config.g_lo;
        p.g_hi = config.g_hi;
        p.eta = fleet.eta;
        p.load_da.resize(T);
        p.pv_da.resize(T);
        for (int t = 0; t < T; ++t)
        {
            p.load_da[t] = aggregate_load_kw[t] / n * (1.0 + spread(rng));
            p.pv_da[t] = aggregate_pv_kw[t] / n * (1.0 + spread(rng));
        }

        p.ev_power_lo_rt = Eigen::VectorXd::Zero(R);
        p.ev_power_hi_rt = Eigen::VectorXd::Zero(R);
        p.ev_cum_lo_rt = Eigen::VectorXd::Zero(R);
        p.ev_cum_hi_rt = Eigen::VectorXd::Zero(R);
        // Draw every EV attribute even when this prosumer has no EV so that the
        // stream stays aligned across ev_share settings.
        const bool has_ev = unit(rng) < fleet.ev_share;
        const int a = std::min(arrival(rng), T - 1);
        const int dep = std::min(a + duration(rng), T);
        const double power = fleet.power_options_kw[charger(rng)];
        const double frac = fraction(rng);
        if (has_ev)
        {
            const double e_req = frac * fleet.eta * power * (dep - a);
            const int first = kQuartersPerHour * a;
            const int last = kQuartersPerHour * dep; // exclusive
            for (int k = 0; k < R; ++k)
            {
                if (k >= first && k < last)
                    p.ev_power_hi_rt[k] = power;
                const double end_time = (k + 1) * kRtStepHours;
                const double remaining = std::max(0.0, dep - std::max(end_time, static_cast<double>(a)));
                p.ev_cum_lo_rt[k] = std::max(0.0, e_req - fleet.eta * power * remaining);
                p.ev_cum_hi_rt[k] = k >= first ? e_req : 0.0;
            }
        }
        derive_day_ahead_bounds(p, grid);
    }

    std::mt19937_64 noise_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto& p : pool)
        add_realization_noise(p, grid, config.rt_noise, noise_rng);
    return pool;
}

void clear_realization_noise(std::vector<Prosumer>& pool, const TimeGrid& grid)
{
    for (auto& p : pool)
    {
        p.load_rt = grid.upsample_hourly(p.load_da);
        p.pv_rt = grid.upsample_hourly(p.pv_da);
    }
}

void resample_realizations(std::vector<Prosumer>& pool, const TimeGrid& grid, double sigma, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (auto& p : pool)
        add_realization_noise(p, grid, sigma, rng);
}

void write_pool(const std::filesystem::path& dir, std::span<const Prosumer> pool, const TimeGrid& grid)
{
    std::filesystem::create_directories(dir);
    std::ofstream meta(dir / "prosumers.csv"), da(dir / "profiles_da.csv"), rt(dir / "profiles_rt.csv"),
        ev(dir / "ev_windows.csv");
    if (!meta || !da || !rt || !ev)
        throw std::runtime_error("write_pool: cannot write into " + dir.string());
    using csv::format;
    csv::write_row(meta, {"id", "g_lo_kw", "g_hi_kw", "eta"});
    csv::write_row(da, {"id", "slot", "load_kw", "pv_kw"});
    csv::write_row(rt, {"id", "slot", "load_kw", "pv_kw"});
    csv::write_row(ev, {"id", "slot", "ev_lo_kw", "ev_hi_kw", "ev_cum_lo_kwh", "ev_cum_hi_kwh"});
    for (const auto& p : pool)
    {
        const std::string id = std::to_string(p.id);
        csv::write_row(meta, {id, format(p.g_lo), format(p.g_hi), format(p.eta)});
        for (int t = 0; t < grid.hours(); ++t)
            csv::write_row(da, {id, std::to_string(t + 1), format(p.load_da[t]), format(p.pv_da[t])});
        for (int k = 0; k < grid.rt_length(); ++k)
        {
            csv::write_row(rt, {id, std::to_string(k + 1), format(p.load_rt[k]), format(p.pv_rt[k])});
            csv::write_row(ev, {id, std::to_string(k + 1), format(p.ev_power_lo_rt[k]), format(p.ev_power_hi_rt[k]),
                                format(p.ev_cum_lo_rt[k]), format(p.ev_cum_hi_rt[k])});
        }
    }
}

std::vector<Prosumer> read_pool(const std::filesystem::path& dir, const TimeGrid& grid)
{
    const int T = grid.hours();
    const int R = grid.rt_length();
    const csv::Table meta = csv::read(dir / "prosumers.csv");
    std::map<long long, Prosumer> by_id;
    std::vector<long long> order;
    for (const auto& r : meta.rows)
    {
        const std::string ctx = (dir / "prosumers.csv").string();
        Prosumer p;
        const long long id = csv::to_int(r[meta.column("id")], ctx);
        if (by_id.count(id))
            throw std::runtime_error(ctx + ": duplicate prosumer id " + std::to_string(id));
        p.id = static_cast<int>(id);
        p.g_lo = csv::to_double(r[meta.column("g_lo_kw")], ctx);
        p.g_hi = csv::to_double(r[meta.column("g_hi_kw")], ctx);
        p.eta = csv::to_double(r[meta.column("eta")], ctx);
        p.load_da = Eigen::VectorXd::Constant(T, std::nan(""));
        p.pv_da = p.load_da;
        p.load_rt = Eigen::VectorXd::Constant(R, std::nan(""));
        p.pv_rt = p.load_rt;
        p.ev_power_lo_rt = p.load_rt;
        p.ev_power_hi_rt = p.load_rt;
        p.ev_cum_lo_rt = p.load_rt;
        p.ev_cum_hi_rt = p.load_rt;
        by_id.emplace(id, std::move(p));
        order.push_back(id);
    }

    auto for_rows = [&](const std::filesystem::path& file, int slots, auto&& assign) {
        const csv::Table t = csv::read(file);
        const std::string ctx = file.string();
        const auto c_id = t.column("id"), c_slot = t.column("slot");
        for (const auto& r : t.rows)
        {
            const long long id = csv::to_int(r[c_id], ctx);
            const long long slot = csv::to_int(r[c_slot], ctx);
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw std::runtime_error(ctx + ": unknown prosumer id " + std::to_string(id));
            if (slot < 1 || slot > slots)
                throw std::runtime_error(ctx + ": slot " + std::to_string(slot) + " out of range");
            assign(it->second, static_cast<Eigen::Index>(slot - 1), t, r, ctx);
        }
    };

    for_rows(dir / "profiles_da.csv", T, [](Prosumer& p, Eigen::Index k, const csv::Table& t, const auto& r, auto& ctx) {
        p.load_da[k] = csv::to_double(r[t.column("load_kw")], ctx);
        p.pv_da[k] = csv::to_double(r[t.column("pv_kw")], ctx);
    });
    const bool have_rt = std::filesystem::exists(dir / "profiles_rt.csv");
    if (have_rt)
        for_rows(dir / "profiles_rt.csv", R,
                 [](Prosumer& p, Eigen::Index k, const csv::Table& t, const auto& r, auto& ctx) {
                     p.load_rt[k] = csv::to_double(r[t.column("load_kw")], ctx);
                     p.pv_rt[k] = csv::to_double(r[t.column("pv_kw")], ctx);
                 });
    for_rows(dir / "ev_windows.csv", R, [](Prosumer& p, Eigen::Index k, const csv::Table& t, const auto& r, auto& ctx) {
        p.ev_power_lo_rt[k] = csv::to_double(r[t.column("ev_lo_kw")], ctx);
        p.ev_power_hi_rt[k] = csv::to_double(r[t.column("ev_hi_kw")], ctx);
        p.ev_cum_lo_rt[k] = csv::to_double(r[t.column("ev_cum_lo_kwh")], ctx);
        p.ev_cum_hi_rt[k] = csv::to_double(r[t.column("ev_cum_hi_kwh")], ctx);
    });

    std::vector<Prosumer> pool;
    for (long long id : order)
    {
        Prosumer p = std::move(by_id.at(id));
        if (!have_rt)
        {
            p.load_rt = grid.upsample_hourly(p.load_da);
            p.pv_rt = grid.upsample_hourly(p.pv_da);
        }
        if (!p.load_da.allFinite() || !p.pv_da.allFinite() || !p.load_rt.allFinite() || !p.pv_rt.allFinite() ||
            !p.ev_power_lo_rt.allFinite() || !p.ev_cum_lo_rt.allFinite())
            throw std::runtime_error("read_pool: incomplete profile or EV data for prosumer " + std::to_string(id));
        derive_day_ahead_bounds(p, grid);
        p.validate(grid);
        pool.push_back(std::move(p));
    }
    return pool;
}

} // namespace aggsched
