#include "aggsched/optimizer_da.hpp"

#include <fstream>
#include <map>

#include <fmt/format.h>

#include "aggsched/csv.hpp"
#include "aggsched/price_stats.hpp"
#include "aggsched/qp_builder.hpp"

namespace aggsched
{

DaProblem::DaProblem(TimeGrid grid, std::vector<Prosumer> pool, Eigen::VectorXd price, Eigen::MatrixXd covariance,
                     double lambda)
    : grid_(grid), pool_(std::move(pool)), price_(std::move(price)), cov_(std::move(covariance)), lambda_(lambda)
{
    const Eigen::Index T = grid_.hours();
    if (!(lambda_ >= 0.0) || !std::isfinite(lambda_))
        throw std::invalid_argument(fmt::format("day-ahead risk weight must be finite and >= 0, got {}", lambda_));
    if (price_.size() != T || !price_.allFinite())
        throw std::invalid_argument(fmt::format("day-ahead price needs {} finite entries, got {}", T, price_.size()));
    if (cov_.rows() != T)
        throw std::invalid_argument(fmt::format("day-ahead covariance must be {}x{}", T, T));
    check_covariance(cov_, "day-ahead problem");
    if (pool_.empty())
        throw std::invalid_argument("day-ahead problem: empty pool");
    for (const Prosumer& p : pool_)
        p.validate(grid_);
}

std::vector<Commitment> DaSolution::commitments() const
{
    std::vector<Commitment> out;
    out.reserve(static_cast<std::size_t>(g.rows()));
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        out.push_back(commitment(i));
    return out;
}

std::vector<Commitment> ScheduleTable::commitments() const
{
    std::vector<Commitment> out;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        out.push_back({ev.row(i).transpose(), g.row(i).transpose()});
    return out;
}

ScheduleTable schedule_table(const DaSolution& sol, std::span<const Prosumer> pool)
{
    if (static_cast<Eigen::Index>(pool.size()) != sol.g.rows())
        throw std::invalid_argument("schedule_table: pool size differs from the solution");
    ScheduleTable s;
    for (const Prosumer& p : pool)
        s.prosumer_ids.push_back(p.id);
    s.g = sol.g;
    s.ev = sol.ev;
    return s;
}

void write_schedule(const std::filesystem::path& path, const ScheduleTable& s)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    csv::write_row(out, {"prosumer", "hour", "g_kw", "ev_kw"});
    for (Eigen::Index i = 0; i < s.g.rows(); ++i)
        for (Eigen::Index t = 0; t < s.g.cols(); ++t)
            csv::write_row(out, {std::to_string(s.prosumer_ids[static_cast<std::size_t>(i)]), std::to_string(t + 1),
                                 csv::format(s.g(i, t)), csv::format(s.ev(i, t))});
}

ScheduleTable read_schedule(const std::filesystem::path& path, const TimeGrid& grid)
{
    const csv::Table table = csv::read(path);
    const std::size_t cp = table.column("prosumer"), ch = table.column("hour"), cg = table.column("g_kw"),
                      ce = table.column("ev_kw");
    const int T = grid.hours();
    std::map<int, std::vector<std::pair<double, double>>> rows;
    std::map<int, std::vector<bool>> seen;
    std::vector<int> order;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
    {
        const std::string ctx = fmt::format("{} row {}", path.string(), r + 2);
        const auto& f = table.rows[r];
        const int id = static_cast<int>(csv::to_int(f[cp], ctx));
        const auto hour = csv::to_int(f[ch], ctx);
        if (hour < 1 || hour > T)
            throw std::runtime_error(fmt::format("{}: hour {} outside 1..{}", ctx, hour, T));
        if (!rows.contains(id))
        {
            rows[id].assign(static_cast<std::size_t>(T), {0.0, 0.0});
            seen[id].assign(static_cast<std::size_t>(T), false);
            order.push_back(id);
        }
        const auto h = static_cast<std::size_t>(hour - 1);
        if (seen[id][h])
            throw std::runtime_error(fmt::format("{}: duplicate entry for prosumer {} hour {}", ctx, id, hour));
        seen[id][h] = true;
        rows[id][h] = {csv::to_double(f[cg], ctx), csv::to_double(f[ce], ctx)};
    }
    ScheduleTable s;
    s.prosumer_ids = order;
    s.g.resize(static_cast<Eigen::Index>(order.size()), T);
    s.ev.resize(static_cast<Eigen::Index>(order.size()), T);
    for (std::size_t i = 0; i < order.size(); ++i)
        for (int t = 0; t < T; ++t)
        {
            if (!seen[order[i]][static_cast<std::size_t>(t)])
                throw std::runtime_error(
                    fmt::format("{}: prosumer {} has no entry for hour {}", path.string(), order[i], t + 1));
            s.g(static_cast<Eigen::Index>(i), t) = rows[order[i]][static_cast<std::size_t>(t)].first;
            s.ev(static_cast<Eigen::Index>(i), t) = rows[order[i]][static_cast<std::size_t>(t)].second;
        }
    return s;
}

double da_price_term(const Eigen::VectorXd& price, const Eigen::VectorXd& g)
{
    return cost_factor(kDaStepHours) * price.dot(g);
}

double da_risk_term(const Eigen::MatrixXd& cov, double lambda, const Eigen::VectorXd& g)
{
    const double k = cost_factor(kDaStepHours);
    return 0.5 * lambda * k * k * g.dot(cov * g);
}

DaSolution solve_da(const DaProblem& problem, const DaSettings& settings)
{
    const TimeGrid& grid = problem.grid();
    const auto& pool = problem.pool();
    const int T = grid.hours();
    const auto N = static_cast<Eigen::Index>(pool.size());

    std::vector<WindowContext> contexts;
    contexts.reserve(pool.size());
    for (const Prosumer& p : pool)
    {
        contexts.push_back(day_ahead_context(p, grid));
        const LocalFeasibility f = check_feasibility(contexts.back());
        if (!f.power_feasible)
            throw InfeasibleProsumerError(
                p.id, fmt::format("prosumer {}: day-ahead constraints infeasible at hour {} (power and grid limits "
                                  "cannot balance load)",
                                  p.id, f.first_bad_slot + 1));
        if (!f.feasible())
            throw InfeasibleProsumerError(
                p.id, fmt::format("prosumer {}: day-ahead EV energy bounds unreachable (needs {:.6g} kWh relaxation)",
                                  p.id, f.min_relaxation));
    }
    const auto sets = build_pool_constraints(contexts, settings.exec);

    const double k = cost_factor(kDaStepHours);
    QpBuilder b;
    std::vector<std::vector<int>> ev_vars(pool.size()), g_vars(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        for (int t = 0; t < T; ++t)
            ev_vars[i].push_back(b.add_variable({VarRole::ev, static_cast<int>(i), t}));
        for (int t = 0; t < T; ++t)
        {
            const int v = b.add_variable({VarRole::grid, static_cast<int>(i), t});
            g_vars[i].push_back(v);
            b.add_quadratic(v, v, 2.0 * settings.epsilon);
        }
        append_local_constraints(b, sets[i], static_cast<int>(i), ev_vars[i], g_vars[i]);
    }
    std::vector<int> agg(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
    {
        agg[static_cast<std::size_t>(t)] = b.add_variable({VarRole::aggregate_grid, -1, t});
        b.add_linear(agg[static_cast<std::size_t>(t)], k * problem.price()[t]);
    }
    const double wq = problem.lambda() * k * k;
    if (wq > 0.0)
        for (int s = 0; s < T; ++s)
            for (int t = s; t < T; ++t)
            {
                const double c = wq * problem.covariance()(s, t);
                if (c != 0.0)
                    b.add_quadratic(agg[static_cast<std::size_t>(s)], agg[static_cast<std::size_t>(t)], c);
            }
    for (int t = 0; t < T; ++t)
    {
        std::vector<std::pair<int, double>> terms{{agg[static_cast<std::size_t>(t)], 1.0}};
        for (std::size_t i = 0; i < pool.size(); ++i)
            terms.emplace_back(g_vars[i][static_cast<std::size_t>(t)], -1.0);
        b.add_row({RowRole::aggregation, -1, t}, std::move(terms), 0.0, 0.0);
    }

    const AssembledQp qp = b.build();
    QpSettings qs = settings.qp;
    qs.exec = settings.exec;
    const QpResult r = solve_qp(qp.qp, qs);
    if (r.status != QpStatus::optimal)
    {
        dump_qp_if_requested(qp.qp, "day_ahead");
        throw QpError(fmt::format("day-ahead solve ended with status {} after {} iterations (primal residual {:.3g}, "
                                  "dual residual {:.3g})",
                                  to_string(r.status), r.iterations, r.primal_residual, r.dual_residual));
    }
    const Eigen::VectorXd v = qp.expand(r.x);

    DaSolution sol;
    sol.g.resize(N, T);
    sol.ev.resize(N, T);
    sol.g_total.resize(T);
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (int t = 0; t < T; ++t)
        {
            sol.ev(static_cast<Eigen::Index>(i), t) = v[ev_vars[i][static_cast<std::size_t>(t)]];
            sol.g(static_cast<Eigen::Index>(i), t) = v[g_vars[i][static_cast<std::size_t>(t)]];
        }
    // Snap onto the exact feasible set; the solver meets the bounds only to
    // tolerance. Aggregates are then the plain sums.
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        const auto row = static_cast<Eigen::Index>(i);
        const WindowContext& ctx = contexts[i];
        const Eigen::VectorXd ev = snap_to_feasible(ctx, sol.ev.row(row).transpose());
        sol.ev.row(row) = ev.transpose();
        sol.g.row(row) = (ev + ctx.load - ctx.pv).transpose();
    }
    sol.g_total = sol.g.colwise().sum().transpose();
    sol.ev_total = sol.ev.colwise().sum().transpose();

    sol.price_term = da_price_term(problem.price(), sol.g_total);
    sol.risk_value = sol.g_total.dot(problem.covariance() * sol.g_total);
    sol.risk_term = da_risk_term(problem.covariance(), problem.lambda(), sol.g_total);
    sol.objective = sol.price_term + sol.risk_term;
    sol.status = r.status;
    sol.iterations = r.iterations;
    sol.primal_residual = r.primal_residual;
    sol.dual_residual = r.dual_residual;
    Eigen::VectorXd solver_total(T);
    for (int t = 0; t < T; ++t)
        solver_total[t] = v[agg[static_cast<std::size_t>(t)]];
    sol.aggregation_residual = (solver_total - sol.g.colwise().sum().transpose()).lpNorm<Eigen::Infinity>();
    for (std::size_t i = 0; i < pool.size(); ++i)
        sol.local_violation =
            std::max(sol.local_violation, max_violation(sets[i], sol.ev.row(static_cast<Eigen::Index>(i)).transpose(),
                                                        sol.g.row(static_cast<Eigen::Index>(i)).transpose()));
    return sol;
}

} // namespace aggsched
