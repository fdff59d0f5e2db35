#include "aggsched/optimizer_rt.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "aggsched/optimizer_da.hpp"
#include "aggsched/price_stats.hpp"

namespace aggsched
{

namespace
{

constexpr double kRtCostFactor = cost_factor(kRtStepHours);

Eigen::VectorXd slice(const Eigen::VectorXd& v, SlotRange w)
{
    return v.segment(static_cast<Eigen::Index>(w.offset), static_cast<Eigen::Index>(w.length));
}

} // namespace

std::string to_string(RegimeMode m)
{
    switch (m)
    {
    case RegimeMode::caiso: return "caiso";
    case RegimeMode::uk: return "uk";
    case RegimeMode::germany: return "germany";
    }
    return "?";
}

RegimeMode parse_regime(std::string_view text)
{
    if (text == "caiso")
        return RegimeMode::caiso;
    if (text == "uk")
        return RegimeMode::uk;
    if (text == "germany")
        return RegimeMode::germany;
    throw std::invalid_argument(fmt::format("unknown imbalance regime '{}' (expected caiso, uk or germany)", text));
}

ImbalanceRegime ImbalanceRegime::make(RegimeMode mode, double delta_plus, double delta_minus)
{
    ImbalanceRegime r{mode, delta_plus, delta_minus};
    r.validate();
    return r;
}

void ImbalanceRegime::validate() const
{
    if (!(delta_plus >= 0.0) || !(delta_minus >= 0.0) || !std::isfinite(delta_plus) || !std::isfinite(delta_minus))
        throw std::invalid_argument(
            fmt::format("imbalance prices must be finite and >= 0 (delta+ {}, delta- {})", delta_plus, delta_minus));
    switch (mode)
    {
    case RegimeMode::caiso:
        if (delta_plus != 0.0 || delta_minus != 0.0)
            throw std::invalid_argument("caiso regime has zero imbalance prices");
        break;
    case RegimeMode::uk:
        if (delta_plus != delta_minus)
            throw std::invalid_argument(
                fmt::format("uk regime needs delta+ == delta- (got {} and {})", delta_plus, delta_minus));
        break;
    case RegimeMode::germany:
        if (!(delta_plus < delta_minus))
            throw std::invalid_argument(
                fmt::format("germany regime needs delta+ < delta- (got {} and {})", delta_plus, delta_minus));
        break;
    }
}

int system_sign(double p_rt, double p_da)
{
    if (p_rt > p_da)
        return 1;
    if (p_rt < p_da)
        return -1;
    return 0;
}

Eigen::VectorXi system_signs(const Eigen::VectorXd& p_rt, const Eigen::VectorXd& p_da_up)
{
    if (p_rt.size() != p_da_up.size())
        throw std::invalid_argument("system_signs: length mismatch");
    Eigen::VectorXi s(p_rt.size());
    for (Eigen::Index t = 0; t < p_rt.size(); ++t)
        s[t] = system_sign(p_rt[t], p_da_up[t]);
    return s;
}

ImbalanceBreakdown imbalance_cost(const Eigen::VectorXd& dg, const Eigen::VectorXd& p_rt,
                                  const Eigen::VectorXd& p_da_up, const ImbalanceRegime& regime)
{
    if (dg.size() != p_rt.size() || dg.size() != p_da_up.size())
        throw std::invalid_argument(fmt::format("imbalance_cost: lengths differ (dG {}, p_rt {}, p_da {})", dg.size(),
                                                p_rt.size(), p_da_up.size()));
    regime.validate();
    ImbalanceBreakdown b;
    for (Eigen::Index t = 0; t < dg.size(); ++t)
    {
        const int s = system_sign(p_rt[t], p_da_up[t]);
        if (s == 0)
            continue;
        const double up = (s + 1) / 2.0;
        const double down = (s - 1) / 2.0;
        const double pos = std::max(dg[t], 0.0);
        const double neg = std::max(-dg[t], 0.0);
        b.cases[0] += kRtCostFactor * regime.delta_minus * up * pos;
        b.cases[1] += -kRtCostFactor * regime.delta_plus * up * neg;
        b.cases[2] += kRtCostFactor * regime.delta_plus * down * pos;
        b.cases[3] += -kRtCostFactor * regime.delta_minus * down * neg;
    }
    return b;
}

double rt_price_term(const Eigen::VectorXd& price, const Eigen::VectorXd& dg) { return kRtCostFactor * price.dot(dg); }

double rt_risk_term(const Eigen::MatrixXd& cov, double lambda, const Eigen::VectorXd& dg)
{
    return 0.5 * lambda * kRtCostFactor * kRtCostFactor * dg.dot(cov * dg);
}

void RtProblem::validate() const
{
    const auto L = static_cast<Eigen::Index>(window.length);
    if (L == 0)
        throw std::invalid_argument("real-time problem: empty window");
    if (price.size() != L || p_da_up.size() != L)
        throw std::invalid_argument(fmt::format("real-time problem: price vectors must have window length {}", L));
    if (!price.allFinite() || !p_da_up.allFinite())
        throw std::invalid_argument("real-time problem: non-finite prices");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument(fmt::format("real-time risk weight must be finite and >= 0, got {}", lambda));
    if (cov.rows() != L)
        throw std::invalid_argument(fmt::format("real-time covariance must be {}x{}", L, L));
    check_covariance(cov, "real-time problem");
    regime.validate();
    if (contexts.empty() || contexts.size() != prosumer_ids.size())
        throw std::invalid_argument("real-time problem: need one context and id per prosumer");
    for (const auto& c : contexts)
        if (c.mode != Mode::real_time || c.window != window)
            throw std::invalid_argument("real-time problem: context mode or window mismatch");
    if (implemented < 1 || implemented > L)
        throw std::invalid_argument("real-time problem: implemented slot count outside the window");
}

RtStepSolution solve_rt_step(const RtProblem& problem, const RtSettings& settings, const RtWarmStart* warm_start)
{
    problem.validate();
    const auto L = static_cast<Eigen::Index>(problem.window.length);
    const auto N = static_cast<Eigen::Index>(problem.contexts.size());
    const int off = static_cast<int>(problem.window.offset);

    RtStepSolution sol;
    sol.window = problem.window;
    sol.implemented = problem.implemented;
    sol.relaxation.assign(problem.contexts.size(), 0.0);

    std::vector<WindowContext> contexts = problem.contexts;
    for (std::size_t i = 0; i < contexts.size(); ++i)
    {
        const LocalFeasibility f = check_feasibility(contexts[i]);
        if (!f.power_feasible)
        {
            const auto slot = problem.window.offset + static_cast<std::size_t>(f.first_bad_slot) + 1;
            throw InfeasibleProsumerError(
                problem.prosumer_ids[i],
                fmt::format("prosumer {}: real-time slot {} cannot be balanced within the power and grid limits",
                            problem.prosumer_ids[i], slot));
        }
        contexts[i].cum_relaxation = f.min_relaxation;
        sol.relaxation[i] = f.min_relaxation;
    }
    const auto sets = build_pool_constraints(contexts, settings.exec);

    sol.signs = system_signs(problem.price, problem.p_da_up);
    const double dp = problem.regime.delta_plus, dm = problem.regime.delta_minus;

    QpBuilder b;
    std::vector<std::vector<int>> ev_vars(contexts.size()), g_vars(contexts.size());
    for (std::size_t i = 0; i < contexts.size(); ++i)
    {
        const int id = static_cast<int>(i);
        for (Eigen::Index k = 0; k < L; ++k)
            ev_vars[i].push_back(b.add_variable({VarRole::ev, id, off + static_cast<int>(k)}));
        for (Eigen::Index k = 0; k < L; ++k)
        {
            const int v = b.add_variable({VarRole::grid, id, off + static_cast<int>(k)});
            g_vars[i].push_back(v);
            b.add_quadratic(v, v, 2.0 * settings.epsilon);
        }
        append_local_constraints(b, sets[i], id, ev_vars[i], g_vars[i]);
    }
    std::vector<int> agg;
    std::vector<int> epi(static_cast<std::size_t>(L), -1);
    for (Eigen::Index k = 0; k < L; ++k)
    {
        const int slot = off + static_cast<int>(k);
        const int v = b.add_variable({VarRole::aggregate_grid, -1, slot});
        agg.push_back(v);
        const int s = sol.signs[k];
        const double slope = s > 0 ? dp : (s < 0 ? -dm : 0.0);
        b.add_linear(v, kRtCostFactor * (problem.price[k] + slope));
        const double w = s != 0 ? dm - dp : 0.0;
        if (w > 0.0)
        {
            const int u = b.add_variable({VarRole::epigraph, -1, slot});
            epi[static_cast<std::size_t>(k)] = u;
            b.add_linear(u, kRtCostFactor * w);
            b.add_row({RowRole::epigraph, -1, slot}, {{u, 1.0}, {v, -1.0}}, 0.0, kInf);
            b.add_row({RowRole::epigraph, 0, slot}, {{u, 1.0}}, 0.0, kInf);
        }
    }
    const double wq = problem.lambda * kRtCostFactor * kRtCostFactor;
    if (wq > 0.0)
        for (Eigen::Index s = 0; s < L; ++s)
            for (Eigen::Index t = s; t < L; ++t)
            {
                const double c = wq * problem.cov(s, t);
                if (c != 0.0)
                    b.add_quadratic(agg[static_cast<std::size_t>(s)], agg[static_cast<std::size_t>(t)], c);
            }
    for (Eigen::Index k = 0; k < L; ++k)
    {
        std::vector<std::pair<int, double>> terms{{agg[static_cast<std::size_t>(k)], 1.0}};
        for (std::size_t i = 0; i < contexts.size(); ++i)
            terms.emplace_back(g_vars[i][static_cast<std::size_t>(k)], -1.0);
        b.add_row({RowRole::aggregation, -1, off + static_cast<int>(k)}, std::move(terms), 0.0, 0.0);
    }

    const AssembledQp qp = b.build();
    QpSettings qs = settings.qp;
    qs.exec = settings.exec;
    QpWarmStart ws;
    const QpWarmStart* wsp = nullptr;
    if (warm_start)
    {
        ws.x = Eigen::VectorXd::Zero(qp.qp.num_variables());
        ws.y = Eigen::VectorXd::Zero(qp.qp.num_constraints());
        for (std::size_t c = 0; c < qp.col_keys.size(); ++c)
            if (auto it = warm_start->x.find(qp.col_keys[c]); it != warm_start->x.end())
                ws.x[static_cast<Eigen::Index>(c)] = it->second;
        for (std::size_t r = 0; r < qp.row_keys.size(); ++r)
            if (auto it = warm_start->y.find(qp.row_keys[r]); it != warm_start->y.end())
                ws.y[static_cast<Eigen::Index>(r)] = it->second;
        // The step size is not carried over: the previous one is tuned to
        // the last window's tail and slows the start of the next solve.
        wsp = &ws;
    }
    QpResult r;
    try
    {
        r = solve_qp(qp.qp, qs, wsp);
    }
    catch (const QpError&)
    {
        dump_qp_if_requested(qp.qp, fmt::format("rt_hour_{:02}", problem.hour));
        throw;
    }
    if (r.status != QpStatus::optimal)
    {
        dump_qp_if_requested(qp.qp, fmt::format("rt_hour_{:02}", problem.hour));
        throw QpError(fmt::format("real-time solve for hour {} ended with status {} after {} iterations (primal "
                                  "residual {:.3g}, dual residual {:.3g})",
                                  problem.hour, to_string(r.status), r.iterations, r.primal_residual, r.dual_residual));
    }
    const Eigen::VectorXd v = qp.expand(r.x);

    sol.dg.resize(N, L);
    sol.dev.resize(N, L);
    for (std::size_t i = 0; i < contexts.size(); ++i)
        for (Eigen::Index k = 0; k < L; ++k)
        {
            sol.dev(static_cast<Eigen::Index>(i), k) = v[ev_vars[i][static_cast<std::size_t>(k)]];
            sol.dg(static_cast<Eigen::Index>(i), k) = v[g_vars[i][static_cast<std::size_t>(k)]];
        }
    Eigen::VectorXd solver_total(L);
    sol.epigraph = Eigen::VectorXd::Constant(L, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index k = 0; k < L; ++k)
    {
        solver_total[k] = v[agg[static_cast<std::size_t>(k)]];
        if (epi[static_cast<std::size_t>(k)] >= 0)
            sol.epigraph[k] = v[epi[static_cast<std::size_t>(k)]];
    }
    // Snap onto the exact feasible set; the solver meets the bounds only to
    // tolerance. Aggregates are then the plain sums.
    for (std::size_t i = 0; i < contexts.size(); ++i)
    {
        const auto row = static_cast<Eigen::Index>(i);
        const WindowContext& ctx = contexts[i];
        const Eigen::VectorXd ev = snap_to_feasible(ctx, ctx.committed_ev + sol.dev.row(row).transpose());
        sol.dev.row(row) = (ev - ctx.committed_ev).transpose();
        sol.dg.row(row) = (ev + ctx.load - ctx.pv - ctx.committed_grid).transpose();
    }
    sol.dg_total = sol.dg.colwise().sum().transpose();
    sol.dev_total = sol.dev.colwise().sum().transpose();

    sol.price_term = rt_price_term(problem.price, sol.dg_total);
    sol.risk_value = sol.dg_total.dot(problem.cov * sol.dg_total);
    sol.risk_term = rt_risk_term(problem.cov, problem.lambda, sol.dg_total);
    sol.imbalance = imbalance_cost(sol.dg_total, problem.price, problem.p_da_up, problem.regime);
    sol.objective = sol.price_term + sol.risk_term + sol.imbalance.total();
    sol.status = r.status;
    sol.iterations = r.iterations;
    sol.primal_residual = r.primal_residual;
    sol.dual_residual = r.dual_residual;
    sol.aggregation_residual = (solver_total - sol.dg_total).lpNorm<Eigen::Infinity>();
    for (std::size_t i = 0; i < contexts.size(); ++i)
        sol.local_violation =
            std::max(sol.local_violation, max_violation(sets[i], sol.dev.row(static_cast<Eigen::Index>(i)).transpose(),
                                                        sol.dg.row(static_cast<Eigen::Index>(i)).transpose()));

    for (std::size_t c = 0; c < qp.col_keys.size(); ++c)
        sol.warm.x[qp.col_keys[c]] = r.x[static_cast<Eigen::Index>(c)];
    for (std::size_t row = 0; row < qp.row_keys.size(); ++row)
        sol.warm.y[qp.row_keys[row]] = r.y[static_cast<Eigen::Index>(row)];
    return sol;
}

void DayInputs::validate() const
{
    const Eigen::Index T = grid.hours(), R = grid.rt_length(), W = kQuartersPerHour * grid.mpc_horizon_hours();
    if (pool.empty() || pool.size() != schedule.size())
        throw std::invalid_argument("real-time inputs: need one day-ahead commitment per prosumer");
    for (const auto& c : schedule)
        if (c.ev_kw.size() != T || c.grid_kw.size() != T)
            throw std::invalid_argument("real-time inputs: day-ahead commitment length differs from the day");
    if (p_da.size() != T)
        throw std::invalid_argument(fmt::format("real-time inputs: day-ahead prices need {} entries", T));
    if (p_rt.size() != R || p_rt_forecast.size() != R)
        throw std::invalid_argument(fmt::format("real-time inputs: real-time prices need {} entries", R));
    if (rt_cov_template.rows() < W || rt_cov_template.cols() != rt_cov_template.rows())
        throw std::invalid_argument(fmt::format("real-time inputs: covariance template must be at least {}x{}", W, W));
    if (!(lambda >= 0.0))
        throw std::invalid_argument("real-time inputs: risk weight must be >= 0");
    regime.validate();
}

RtTrace run_mpc(const DayInputs& in, const MpcOptions& options, MpcState* state)
{
    in.validate();
    const TimeGrid& grid = in.grid;
    const int T = grid.hours();
    const Eigen::Index R = grid.rt_length();
    const auto N = static_cast<Eigen::Index>(in.pool.size());

    MpcState local;
    MpcState& st = state ? *state : local;
    if (st.e_past.size() == 0)
        st.e_past = Eigen::VectorXd::Zero(N);
    if (st.e_past.size() != N)
        throw std::invalid_argument("run_mpc: carried state does not match the pool");
    const int first = st.next_hour;
    const int last = options.last_hour > 0 ? std::min(options.last_hour, T) : T;
    if (first < 1 || first > T + 1)
        throw std::invalid_argument(fmt::format("run_mpc: cannot start at hour {}", first));

    const Eigen::VectorXd p_da_up = grid.upsample_hourly(in.p_da);
    RtTrace tr;
    tr.dg = Eigen::VectorXd::Zero(R);
    tr.dev = Eigen::VectorXd::Zero(R);
    tr.p_rt = in.p_rt;
    tr.p_da_up = p_da_up;
    tr.implemented = Eigen::VectorXi::Zero(R);
    tr.dg_i = Eigen::MatrixXd::Zero(N, R);
    tr.dev_i = Eigen::MatrixXd::Zero(N, R);
    tr.objective = Eigen::VectorXd::Zero(T);
    tr.risk_value = Eigen::VectorXd::Zero(T);
    tr.risk_term = Eigen::VectorXd::Zero(T);
    tr.relaxation = Eigen::VectorXd::Zero(T);
    tr.iterations = Eigen::VectorXi::Zero(T);

    for (int h = first; h <= last; ++h)
    {
        RtProblem pb;
        pb.hour = h;
        pb.window = grid.mpc_window(h);
        const auto L = static_cast<Eigen::Index>(pb.window.length);
        pb.implemented = std::min<Eigen::Index>(kQuartersPerHour, L);
        pb.price = slice(in.p_rt_forecast, pb.window);
        pb.price.head(pb.implemented) = slice(in.p_rt, pb.window).head(pb.implemented);
        pb.p_da_up = slice(p_da_up, pb.window);
        pb.lambda = in.lambda;
        pb.cov = rt_window_covariance(in.rt_cov_template, L);
        pb.regime = in.regime;
        for (std::size_t i = 0; i < in.pool.size(); ++i)
        {
            pb.prosumer_ids.push_back(in.pool[i].id);
            pb.contexts.push_back(real_time_context(in.pool[i], grid, pb.window, in.schedule[i],
                                                    st.e_past[static_cast<Eigen::Index>(i)],
                                                    static_cast<std::size_t>(pb.implemented)));
        }

        RtStepSolution sol;
        const RtWarmStart* ws = options.warm_start && st.warm ? &*st.warm : nullptr;
        try
        {
            sol = solve_rt_step(pb, options.settings, ws);
        }
        catch (const InfeasibleProsumerError& e)
        {
            throw InfeasibleProsumerError(e.prosumer_id(), fmt::format("hour {}: {}", h, e.what()));
        }
        catch (const QpError& e)
        {
            throw QpError(fmt::format("hour {}: {}", h, e.what()));
        }

        const auto off = static_cast<Eigen::Index>(pb.window.offset);
        for (Eigen::Index k = 0; k < pb.implemented; ++k)
        {
            tr.dg[off + k] = sol.dg_total[k];
            tr.dev[off + k] = sol.dev_total[k];
            tr.implemented[off + k] = 1;
            tr.dg_i.col(off + k) = sol.dg.col(k);
            tr.dev_i.col(off + k) = sol.dev.col(k);
        }
        for (Eigen::Index i = 0; i < N; ++i)
        {
            const WindowContext& c = pb.contexts[static_cast<std::size_t>(i)];
            double delivered = 0.0;
            for (Eigen::Index k = 0; k < pb.implemented; ++k)
                delivered += c.committed_ev[k] + sol.dev(i, k);
            st.e_past[i] += c.eta * c.step_hours * delivered;
        }
        tr.objective[h - 1] = sol.objective;
        tr.risk_value[h - 1] = sol.risk_value;
        tr.risk_term[h - 1] = sol.risk_term;
        tr.iterations[h - 1] = sol.iterations;
        tr.relaxation[h - 1] =
            sol.relaxation.empty() ? 0.0 : *std::max_element(sol.relaxation.begin(), sol.relaxation.end());
        st.warm = std::move(sol.warm);
        st.next_hour = h + 1;
    }
    tr.e_past_end = st.e_past;
    return tr;
}

} // namespace aggsched
