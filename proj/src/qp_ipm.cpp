// Sparse Mehrotra predictor-corrector interior point method. Each Newton
// system is the quasi-definite augmented KKT matrix
//   [P + dI, A'; A, -diag(1/D)]
// with D from the barrier weights (or a tiny regularization on equality
// rows), so it shares the sparsity pattern of the ADMM system. Degenerate
// optimal faces are harmless here, which is why the ADMM path falls back
// to it when its tail stalls.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>

#include "aggsched/qp.hpp"

namespace aggsched
{

namespace
{

constexpr double kPrimalReg = 1e-11;
constexpr double kEqualityReg = 1e-11;
constexpr double kNoBarrier = 1e-30;
constexpr double kWiden = 1e-9;

enum class RowType : unsigned char
{
    free,
    equality,
    bounded
};

double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, const std::vector<char>& mask)
{
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (mask[static_cast<std::size_t>(i)] && dv[i] < 0.0)
            a = std::min(a, -v[i] / dv[i]);
    return a;
}

} // namespace

QpResult solve_qp_ipm(const QpProblem& problem, const QpSettings& settings)
{
    problem.validate();
    const Eigen::Index n = problem.num_variables();
    const Eigen::Index m = problem.num_constraints();

    // Cost scaling only; the constraint data in these models is O(1).
    double cost_norm = problem.q.size() ? problem.q.lpNorm<Eigen::Infinity>() : 0.0;
    for (Eigen::Index k = 0; k < problem.P.nonZeros(); ++k)
        cost_norm = std::max(cost_norm, std::abs(problem.P.valuePtr()[k]));
    const double c = cost_norm > 0.0 ? 1.0 / cost_norm : 1.0;
    const SparseMatrix P = c * problem.P;
    const Eigen::VectorXd q = c * problem.q;
    const SparseMatrix& A = problem.A;
    const SparseMatrix At = A.transpose();
    // Inequalities are widened by a hair so the feasible set always has an
    // interior; tight EV energy requirements otherwise leave none and the
    // multipliers diverge along the optimal face.
    Eigen::VectorXd l = problem.l;
    Eigen::VectorXd u = problem.u;

    std::vector<RowType> type(static_cast<std::size_t>(m));
    std::vector<char> has_l(static_cast<std::size_t>(m), 0), has_u(static_cast<std::size_t>(m), 0);
    Eigen::Index sides = 0;
    for (Eigen::Index i = 0; i < m; ++i)
    {
        const auto k = static_cast<std::size_t>(i);
        if (std::isfinite(l[i]) && std::isfinite(u[i]) && std::abs(u[i] - l[i]) <= 1e-12 * std::max(1.0, std::abs(l[i])))
            type[k] = RowType::equality;
        else
        {
            has_l[k] = std::isfinite(l[i]);
            has_u[k] = std::isfinite(u[i]);
            if (has_l[k])
                l[i] -= kWiden * std::max(1.0, std::abs(l[i]));
            if (has_u[k])
                u[i] += kWiden * std::max(1.0, std::abs(u[i]));
            type[k] = (has_l[k] || has_u[k]) ? RowType::bounded : RowType::free;
            sides += has_l[k] + has_u[k];
        }
    }

    // Upper triangle of the augmented matrix; every diagonal entry present.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(P.nonZeros() + A.nonZeros() + n + m));
    for (int j = 0; j < P.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(P, j); it; ++it)
            if (it.row() < j)
                trip.emplace_back(it.row(), j, it.value());
    for (Eigen::Index j = 0; j < n; ++j)
        trip.emplace_back(j, j, P.coeff(j, j) + kPrimalReg);
    for (int j = 0; j < A.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(A, j); it; ++it)
            trip.emplace_back(j, n + it.row(), it.value());
    for (Eigen::Index i = 0; i < m; ++i)
        trip.emplace_back(n + i, n + i, -1.0);
    SparseMatrix K(n + m, n + m);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    std::vector<int> diag_pos(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i)
        diag_pos[static_cast<std::size_t>(i)] = K.outerIndexPtr()[n + i + 1] - 1;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt;
    ldlt.analyzePattern(K);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(m); // equality multipliers
    Eigen::VectorXd sl = Eigen::VectorXd::Ones(m), zl = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd su = Eigen::VectorXd::Ones(m), zu = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i)
    {
        const auto k = static_cast<std::size_t>(i);
        if (has_l[k])
            sl[i] = std::max(-l[i], 1.0), zl[i] = 1.0;
        if (has_u[k])
            su[i] = std::max(u[i], 1.0), zu[i] = 1.0;
    }

    const auto dual_y = [&]() {
        Eigen::VectorXd y(m);
        for (Eigen::Index i = 0; i < m; ++i)
            y[i] = type[static_cast<std::size_t>(i)] == RowType::equality ? nu[i] : zu[i] - zl[i];
        return y;
    };

    QpResult result;
    result.status = QpStatus::max_iter;
    const int max_iter = std::min(settings.max_iter, 200);
    Eigen::VectorXd ax(m), rd(n), re(m), rl(m), ru(m), dinv(m);
    Eigen::VectorXd rhs(n + m), sol(n + m), dx(n), dv(m), adx(m);
    Eigen::VectorXd dsl(m), dzl(m), dsu(m), dzu(m);
    bool bumped = false;
    int it = 0;
    for (it = 1; it <= max_iter; ++it)
    {
        const Eigen::VectorXd y = dual_y();
        ax = A * x;
        rd = P * x + q + At * y;
        for (Eigen::Index i = 0; i < m; ++i)
        {
            const auto k = static_cast<std::size_t>(i);
            re[i] = type[k] == RowType::equality ? ax[i] - l[i] : 0.0;
            rl[i] = has_l[k] ? l[i] - ax[i] + sl[i] : 0.0;  // lower: -a'x + s = -l
            ru[i] = has_u[k] ? ax[i] + su[i] - u[i] : 0.0;  // upper:  a'x + s = u
        }
        const double gap = sl.dot(zl) + su.dot(zu);
        const double mu = sides ? gap / static_cast<double>(sides) : 0.0;

        const Eigen::VectorXd x_un = x;
        const Eigen::VectorXd y_un = y / c;
        const KktResiduals kr = kkt_residuals(problem, x_un, y_un);
        const double ax_norm = m ? ax.lpNorm<Eigen::Infinity>() : 0.0;
        const double eps_prim = settings.eps_abs + settings.eps_rel * ax_norm;
        const double px_norm = n ? (problem.P * x_un).lpNorm<Eigen::Infinity>() : 0.0;
        const double aty_norm = n ? (At * y_un).lpNorm<Eigen::Infinity>() : 0.0;
        const double q_norm = n ? problem.q.lpNorm<Eigen::Infinity>() : 0.0;
        const double eps_dual = settings.eps_abs + settings.eps_rel * std::max({px_norm, aty_norm, q_norm});
        const double obj = std::abs(problem.objective(x_un));
        result.primal_residual = kr.primal;
        result.dual_residual = kr.dual;
        if (kr.primal <= eps_prim && kr.dual <= eps_dual && gap / c <= settings.eps_abs + settings.eps_rel * obj &&
            (m == 0 || std::max({re.lpNorm<Eigen::Infinity>(), rl.lpNorm<Eigen::Infinity>(),
                                 ru.lpNorm<Eigen::Infinity>()}) <= eps_prim))
        {
            result.status = QpStatus::optimal;
            break;
        }
        if (std::max({zl.maxCoeff(), zu.maxCoeff(), sl.maxCoeff(), su.maxCoeff()}) > 1e14)
        {
            result.status = QpStatus::infeasible;
            break;
        }

        for (Eigen::Index i = 0; i < m; ++i)
        {
            const auto k = static_cast<std::size_t>(i);
            double d = 0.0;
            if (type[k] == RowType::equality)
                dinv[i] = kEqualityReg;
            else
            {
                if (has_l[k])
                    d += zl[i] / sl[i];
                if (has_u[k])
                    d += zu[i] / su[i];
                dinv[i] = 1.0 / std::max(d, kNoBarrier);
            }
            K.valuePtr()[diag_pos[k]] = -dinv[i];
        }
        if (bumped)
        {
            for (Eigen::Index j = 0; j < n; ++j)
                K.coeffRef(j, j) = P.coeff(j, j) + kPrimalReg;
            bumped = false;
        }
        ldlt.factorize(K);
        // Zero pivots can appear when the barrier weights span many orders
        // of magnitude; raise the static regularization and retry.
        for (double reg = 1e-9; ldlt.info() != Eigen::Success && reg <= 1e-5; reg *= 100.0)
        {
            for (Eigen::Index j = 0; j < n; ++j)
                K.coeffRef(j, j) = P.coeff(j, j) + reg;
            for (Eigen::Index i = 0; i < m; ++i)
                K.valuePtr()[diag_pos[static_cast<std::size_t>(i)]] = -std::max(dinv[i], reg);
            ldlt.factorize(K);
            bumped = true;
        }
        if (ldlt.info() != Eigen::Success)
            throw QpError("interior point: KKT factorization failed");

        // Newton direction for complementarity targets cl = sl.zl - .., cu.
        const auto newton = [&](const Eigen::VectorXd& cl, const Eigen::VectorXd& cu) {
            rhs.head(n) = -rd;
            for (Eigen::Index i = 0; i < m; ++i)
            {
                const auto k = static_cast<std::size_t>(i);
                if (type[k] == RowType::equality)
                    rhs[n + i] = -re[i];
                else
                {
                    double t = 0.0;
                    if (has_u[k])
                        t += (zu[i] * ru[i] - cu[i]) / su[i];
                    if (has_l[k])
                        t -= (zl[i] * rl[i] - cl[i]) / sl[i];
                    rhs[n + i] = -t * dinv[i];
                }
            }
            sol = ldlt.solve(rhs);
            for (int r = 0; r < 3; ++r)
            {
                // Residual against the matrix without the primal / equality
                // regularization.
                Eigen::VectorXd res(n + m);
                res.head(n) = rhs.head(n) - P * sol.head(n) - At * sol.tail(m);
                res.tail(m) = rhs.tail(m) - A * sol.head(n);
                for (Eigen::Index i = 0; i < m; ++i)
                    if (type[static_cast<std::size_t>(i)] != RowType::equality)
                        res[n + i] += dinv[i] * sol[n + i];
                sol += ldlt.solve(res);
            }
            dx = sol.head(n);
            dv = sol.tail(m);
            adx = A * dx;
            for (Eigen::Index i = 0; i < m; ++i)
            {
                const auto k = static_cast<std::size_t>(i);
                if (has_u[k])
                {
                    dzu[i] = (-cu[i] + zu[i] * ru[i] + zu[i] * adx[i]) / su[i];
                    dsu[i] = -ru[i] - adx[i];
                }
                else
                    dzu[i] = dsu[i] = 0.0;
                if (has_l[k])
                {
                    dzl[i] = (-cl[i] + zl[i] * rl[i] - zl[i] * adx[i]) / sl[i];
                    dsl[i] = -rl[i] + adx[i];
                }
                else
                    dzl[i] = dsl[i] = 0.0;
            }
        };
        const auto max_alpha = [&]() {
            return std::min({step_to_boundary(sl, dsl, has_l), step_to_boundary(zl, dzl, has_l),
                             step_to_boundary(su, dsu, has_u), step_to_boundary(zu, dzu, has_u)});
        };

        const Eigen::VectorXd cl_aff = sl.cwiseProduct(zl);
        const Eigen::VectorXd cu_aff = su.cwiseProduct(zu);
        newton(cl_aff, cu_aff);
        if (sides)
        {
            const double a_aff = max_alpha();
            const double gap_aff = (sl + a_aff * dsl).dot(zl + a_aff * dzl) + (su + a_aff * dsu).dot(zu + a_aff * dzu);
            const double sigma = std::pow(gap_aff / gap, 3);
            Eigen::VectorXd cl = cl_aff + dsl.cwiseProduct(dzl);
            Eigen::VectorXd cu = cu_aff + dsu.cwiseProduct(dzu);
            for (Eigen::Index i = 0; i < m; ++i)
            {
                const auto k = static_cast<std::size_t>(i);
                cl[i] = has_l[k] ? cl[i] - sigma * mu : 0.0;
                cu[i] = has_u[k] ? cu[i] - sigma * mu : 0.0;
            }
            newton(cl, cu);
        }
        const double alpha = sides ? std::min(1.0, 0.99 * max_alpha()) : 1.0;
        x += alpha * dx;
        for (Eigen::Index i = 0; i < m; ++i)
            if (type[static_cast<std::size_t>(i)] == RowType::equality)
                nu[i] += alpha * dv[i];
        sl += alpha * dsl;
        zl += alpha * dzl;
        su += alpha * dsu;
        zu += alpha * dzu;
    }
    result.iterations = std::min(it, max_iter);
    result.x = x;
    result.y = dual_y() / c;
    result.objective = problem.objective(x);
    return result;
}

} // namespace aggsched
