// Dense Mehrotra predictor-corrector interior point method. Shares nothing
// with the ADMM path beyond the problem type, so the two can check each
// other.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/LU>

#include "aggsched/qp.hpp"

namespace aggsched
{

namespace
{

enum class RowKind
{
    equality,
    upper,
    lower
};

struct RowRef
{
    Eigen::Index row;
    RowKind kind;
};

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv)
{
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0)
            a = std::min(a, -v[i] / dv[i]);
    return a;
}

} // namespace

QpResult solve_qp_dense(const QpProblem& problem, const QpSettings& settings)
{
    problem.validate();
    const Eigen::Index n = problem.num_variables();
    if (n > kDenseMaxVariables)
        throw std::invalid_argument("solve_qp_dense: problem has " + std::to_string(n) + " variables, limit is " +
                                    std::to_string(kDenseMaxVariables));
    const Eigen::MatrixXd P = Eigen::MatrixXd(problem.P);
    const Eigen::MatrixXd A = Eigen::MatrixXd(problem.A);

    std::vector<RowRef> eq, ineq;
    for (Eigen::Index i = 0; i < problem.num_constraints(); ++i)
    {
        const double l = problem.l[i], u = problem.u[i];
        if (std::isfinite(l) && std::isfinite(u) && std::abs(u - l) <= 1e-12 * std::max(1.0, std::abs(l)))
        {
            eq.push_back({i, RowKind::equality});
            continue;
        }
        if (std::isfinite(u))
            ineq.push_back({i, RowKind::upper});
        if (std::isfinite(l))
            ineq.push_back({i, RowKind::lower});
    }
    const auto me = static_cast<Eigen::Index>(eq.size());
    const auto mi = static_cast<Eigen::Index>(ineq.size());
    Eigen::MatrixXd E(me, n), G(mi, n);
    Eigen::VectorXd b(me), h(mi);
    for (Eigen::Index k = 0; k < me; ++k)
    {
        E.row(k) = A.row(eq[static_cast<std::size_t>(k)].row);
        b[k] = problem.l[eq[static_cast<std::size_t>(k)].row];
    }
    for (Eigen::Index k = 0; k < mi; ++k)
    {
        const auto& r = ineq[static_cast<std::size_t>(k)];
        const double sign = r.kind == RowKind::upper ? 1.0 : -1.0;
        G.row(k) = sign * A.row(r.row);
        h[k] = r.kind == RowKind::upper ? problem.u[r.row] : -problem.l[r.row];
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(me);
    Eigen::VectorXd s = (h - G * x).cwiseMax(1.0);
    Eigen::VectorXd z = Eigen::VectorXd::Ones(mi);

    const double tol = 1e-11;
    const double scale_d = 1.0 + problem.q.lpNorm<Eigen::Infinity>();
    const double scale_e = 1.0 + (me ? b.lpNorm<Eigen::Infinity>() : 0.0);
    const double scale_i = 1.0 + (mi ? h.lpNorm<Eigen::Infinity>() : 0.0);

    QpResult result;
    result.status = QpStatus::max_iter;
    const int max_iter = std::min(settings.max_iter, 200);
    int it = 0;
    for (it = 1; it <= max_iter; ++it)
    {
        const Eigen::VectorXd rd = P * x + problem.q + E.transpose() * nu + G.transpose() * z;
        const Eigen::VectorXd re = E * x - b;
        const Eigen::VectorXd ri = G * x + s - h;
        const double mu = mi ? s.dot(z) / static_cast<double>(mi) : 0.0;
        const double nd = rd.size() ? rd.lpNorm<Eigen::Infinity>() : 0.0;
        const double ne = re.size() ? re.lpNorm<Eigen::Infinity>() : 0.0;
        const double ni = ri.size() ? ri.lpNorm<Eigen::Infinity>() : 0.0;
        result.primal_residual = std::max(ne, ni);
        result.dual_residual = nd;
        if (nd <= tol * scale_d && ne <= tol * scale_e && ni <= tol * scale_i && mu <= 1e-13)
        {
            result.status = QpStatus::optimal;
            break;
        }
        if (mi && (s.maxCoeff() > 1e14 || z.maxCoeff() > 1e14))
        {
            result.status = QpStatus::infeasible;
            break;
        }

        const Eigen::VectorXd w = z.cwiseQuotient(s);
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + me, n + me);
        K.topLeftCorner(n, n) = P + G.transpose() * w.asDiagonal() * G;
        K.topLeftCorner(n, n).diagonal().array() += 1e-13;
        K.topRightCorner(n, me) = E.transpose();
        K.bottomLeftCorner(me, n) = E;
        K.bottomRightCorner(me, me).diagonal().setConstant(-1e-13);
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);

        auto newton = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx, Eigen::VectorXd& dnu, Eigen::VectorXd& dz,
                          Eigen::VectorXd& ds) {
            Eigen::VectorXd rhs(n + me);
            rhs.head(n) = -rd - G.transpose() * (z.cwiseProduct(ri) - rc).cwiseQuotient(s);
            rhs.tail(me) = -re;
            Eigen::VectorXd sol = lu.solve(rhs);
            for (int r = 0; r < 2; ++r)
                sol += lu.solve(rhs - K * sol);
            dx = sol.head(n);
            dnu = sol.tail(me);
            dz = (-rc + z.cwiseProduct(ri) + z.cwiseProduct(G * dx)).cwiseQuotient(s);
            ds = -ri - G * dx;
        };

        Eigen::VectorXd dx, dnu, dz, ds;
        const Eigen::VectorXd sz = s.cwiseProduct(z);
        newton(sz, dx, dnu, dz, ds);
        if (mi)
        {
            const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
            const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mi);
            const double sigma = std::pow(mu_aff / mu, 3);
            const Eigen::VectorXd rc = sz + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(mi, sigma * mu);
            newton(rc, dx, dnu, dz, ds);
        }
        const double alpha = mi ? std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz))) : 1.0;
        x += alpha * dx;
        nu += alpha * dnu;
        z += alpha * dz;
        s += alpha * ds;
    }
    result.iterations = std::min(it, max_iter);

    result.x = x;
    result.y = Eigen::VectorXd::Zero(problem.num_constraints());
    for (Eigen::Index k = 0; k < me; ++k)
        result.y[eq[static_cast<std::size_t>(k)].row] = nu[k];
    for (Eigen::Index k = 0; k < mi; ++k)
    {
        const auto& r = ineq[static_cast<std::size_t>(k)];
        result.y[r.row] += r.kind == RowKind::upper ? z[k] : -z[k];
    }
    result.objective = problem.objective(x);
    return result;
}

} // namespace aggsched
