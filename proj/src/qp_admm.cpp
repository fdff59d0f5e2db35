// ADMM solver for convex QPs in the (P, q, A, l, u) form. The iteration
// follows the standard operator-splitting scheme on the quasi-definite KKT
// system; the linear system is factored once per step-size change.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/SparseCholesky>

#include "aggsched/qp.hpp"

namespace aggsched
{

std::string to_string(QpStatus s)
{
    switch (s)
    {
    case QpStatus::optimal:
        return "optimal";
    case QpStatus::max_iter:
        return "max-iter";
    case QpStatus::infeasible:
        return "infeasible";
    }
    return "unknown";
}

namespace
{

constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqualityFactor = 1e3;
constexpr double kPolishDelta = 1e-9;
// Below this many entries the OpenMP fork/join costs more than it saves.
constexpr Eigen::Index kParallelThreshold = 4096;

double limit_scaling(double v) { return v < kMinScaling ? 1.0 : std::min(v, kMaxScaling); }

Eigen::VectorXd col_inf_norms(const SparseMatrix& m)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m.cols());
    for (int j = 0; j < m.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(m, j); it; ++it)
            out[j] = std::max(out[j], std::abs(it.value()));
    return out;
}

Eigen::VectorXd row_inf_norms(const SparseMatrix& m)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m.rows());
    for (int j = 0; j < m.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(m, j); it; ++it)
            out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
    return out;
}

struct UnionFind
{
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a)
    {
        while (parent[a] != a)
            a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

bool is_equality(double l, double u) { return std::abs(u - l) <= 1e-12 * std::max(1.0, std::abs(l)); }

double vec_inf(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Projected-residual primal measure, tolerant of infinite bounds.
double primal_violation(const Eigen::VectorXd& ax, const Eigen::VectorXd& l, const Eigen::VectorXd& u)
{
    double r = 0.0;
    for (Eigen::Index i = 0; i < ax.size(); ++i)
        r = std::max(r, std::max(l[i] - ax[i], ax[i] - u[i]));
    return std::max(r, 0.0);
}

/// Equilibrated copy of the problem plus the scaling factors.
struct ScaledProblem
{
    SparseMatrix P, A;
    Eigen::VectorXd q, l, u;
    Eigen::VectorXd D, E;   // variable and constraint scaling
    double c = 1.0;         // cost scaling
};

ScaledProblem equilibrate(const QpProblem& prob, int iters)
{
    ScaledProblem s{prob.P, prob.A, prob.q, prob.l, prob.u, Eigen::VectorXd::Ones(prob.num_variables()),
                    Eigen::VectorXd::Ones(prob.num_constraints()), 1.0};
    const Eigen::Index n = prob.num_variables();
    const Eigen::Index m = prob.num_constraints();
    for (int it = 0; it < iters; ++it)
    {
        Eigen::VectorXd d = col_inf_norms(s.P).cwiseMax(col_inf_norms(s.A));
        for (Eigen::Index j = 0; j < n; ++j)
            d[j] = 1.0 / std::sqrt(limit_scaling(d[j]));
        Eigen::VectorXd e = row_inf_norms(s.A);
        for (Eigen::Index i = 0; i < m; ++i)
            e[i] = 1.0 / std::sqrt(limit_scaling(e[i]));

        s.P = d.asDiagonal() * s.P * d.asDiagonal();
        s.A = e.asDiagonal() * s.A * d.asDiagonal();
        s.q = d.cwiseProduct(s.q);
        s.D = s.D.cwiseProduct(d);
        s.E = s.E.cwiseProduct(e);

        const double mean_p = n ? col_inf_norms(s.P).mean() : 0.0;
        const double cost_norm = std::max(mean_p, vec_inf(s.q));
        const double gamma = 1.0 / limit_scaling(cost_norm);
        s.P *= gamma;
        s.q *= gamma;
        s.c *= gamma;
    }
    for (Eigen::Index i = 0; i < m; ++i)
    {
        s.l[i] = std::isfinite(prob.l[i]) ? prob.l[i] * s.E[i] : prob.l[i];
        s.u[i] = std::isfinite(prob.u[i]) ? prob.u[i] * s.E[i] : prob.u[i];
    }
    return s;
}

/// [P + sigma I, A'; A, -diag(1/rho)], upper triangle, with the positions of
/// the constraint-block diagonal so step-size changes update in place.
class KktSystem
{
public:
    KktSystem(const SparseMatrix& P, const SparseMatrix& A, double sigma, const Eigen::VectorXd& rho)
        : n_(P.cols()), m_(A.rows())
    {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(P.nonZeros() + A.nonZeros() + n_ + m_));
        for (int j = 0; j < P.outerSize(); ++j)
            for (SparseMatrix::InnerIterator it(P, j); it; ++it)
                if (it.row() <= j)
                    trip.emplace_back(it.row(), j, it.value());
        for (Eigen::Index j = 0; j < n_; ++j)
            trip.emplace_back(j, j, sigma);
        for (int j = 0; j < A.outerSize(); ++j)
            for (SparseMatrix::InnerIterator it(A, j); it; ++it)
                trip.emplace_back(j, n_ + it.row(), it.value());
        for (Eigen::Index i = 0; i < m_; ++i)
            trip.emplace_back(n_ + i, n_ + i, -1.0 / rho[i]);
        K_.resize(n_ + m_, n_ + m_);
        K_.setFromTriplets(trip.begin(), trip.end());
        K_.makeCompressed();
        diag_pos_.resize(static_cast<std::size_t>(m_));
        for (Eigen::Index i = 0; i < m_; ++i)
            diag_pos_[static_cast<std::size_t>(i)] = K_.outerIndexPtr()[n_ + i + 1] - 1;
        ldlt_.analyzePattern(K_);
        factor();
    }

    void update_rho(const Eigen::VectorXd& rho)
    {
        for (Eigen::Index i = 0; i < m_; ++i)
            K_.valuePtr()[diag_pos_[static_cast<std::size_t>(i)]] = -1.0 / rho[i];
        factor();
    }

    void solve(const Eigen::VectorXd& rhs, Eigen::VectorXd& out) const { out = ldlt_.solve(rhs); }

private:
    void factor()
    {
        ldlt_.factorize(K_);
        if (ldlt_.info() != Eigen::Success)
            throw QpError("ADMM: KKT factorization failed");
    }

    Eigen::Index n_, m_;
    SparseMatrix K_;
    std::vector<int> diag_pos_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt_;
};

Eigen::VectorXd rho_vector(const ScaledProblem& s, double rho)
{
    Eigen::VectorXd r(s.l.size());
    for (Eigen::Index i = 0; i < r.size(); ++i)
    {
        if (!std::isfinite(s.l[i]) && !std::isfinite(s.u[i]))
            r[i] = kRhoMin;
        else if (is_equality(s.l[i], s.u[i]))
            r[i] = kRhoEqualityFactor * rho;
        else
            r[i] = rho;
    }
    return r;
}

enum class Activity : unsigned char
{
    inactive,
    lower,
    upper
};

/// Active-set refinement of an ADMM point: solve the equality-constrained
/// QP on the guessed active set, then add violated rows / drop rows with
/// wrong-signed multipliers until the set is consistent.
bool polish(const ScaledProblem& s, const Eigen::VectorXd& z, const Eigen::VectorXd& y, const QpSettings& settings,
            Eigen::VectorXd& x_out, Eigen::VectorXd& y_out)
{
    const Eigen::Index n = s.P.cols();
    const Eigen::Index m = s.A.rows();
    std::vector<Activity> act(static_cast<std::size_t>(m), Activity::inactive);
    // Rows at a bound with a negligible multiplier are degenerate; leave
    // them out and let the feasibility pass add the ones that are needed.
    const double y_floor = 1e-7 * std::max(1e-30, vec_inf(y));
    for (Eigen::Index i = 0; i < m; ++i)
    {
        if (is_equality(s.l[i], s.u[i]) || (z[i] - s.l[i] < -y[i] && y[i] < -y_floor))
            act[static_cast<std::size_t>(i)] = Activity::lower;
        else if (s.u[i] - z[i] < y[i] && y[i] > y_floor)
            act[static_cast<std::size_t>(i)] = Activity::upper;
    }
    const Eigen::SparseMatrix<double, Eigen::RowMajor, int> A_csr = s.A;
    const double feas_tol = 1e-9 * std::max(1.0, std::max(vec_inf(s.l.unaryExpr([](double v) {
                                                               return std::isfinite(v) ? v : 0.0;
                                                           })),
                                                           vec_inf(s.u.unaryExpr([](double v) {
                                                               return std::isfinite(v) ? v : 0.0;
                                                           }))));
    const double dual_tol = 1e-10 * std::max(1.0, vec_inf(s.q));

    for (int round = 0; round < 25; ++round)
    {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < m; ++i)
            if (act[static_cast<std::size_t>(i)] != Activity::inactive)
                rows.push_back(i);
        const Eigen::Index k = static_cast<Eigen::Index>(rows.size());

        std::vector<Eigen::Triplet<double>> trip, trip0;
        for (int j = 0; j < s.P.outerSize(); ++j)
            for (SparseMatrix::InnerIterator it(s.P, j); it; ++it)
                if (it.row() <= j)
                    trip0.emplace_back(it.row(), j, it.value());
        Eigen::VectorXd rhs(n + k);
        rhs.head(n) = -s.q;
        for (Eigen::Index r = 0; r < k; ++r)
        {
            const Eigen::Index i = rows[static_cast<std::size_t>(r)];
            for (Eigen::SparseMatrix<double, Eigen::RowMajor, int>::InnerIterator it(A_csr, i); it; ++it)
                trip0.emplace_back(it.col(), n + r, it.value());
            rhs[n + r] = act[static_cast<std::size_t>(i)] == Activity::lower ? s.l[i] : s.u[i];
        }
        trip = trip0;
        for (Eigen::Index j = 0; j < n; ++j)
            trip.emplace_back(j, j, kPolishDelta);
        for (Eigen::Index r = 0; r < k; ++r)
            trip.emplace_back(n + r, n + r, -kPolishDelta);

        SparseMatrix K(n + k, n + k), K0(n + k, n + k);
        K.setFromTriplets(trip.begin(), trip.end());
        K0.setFromTriplets(trip0.begin(), trip0.end());
        Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt(K);
        if (ldlt.info() != Eigen::Success)
            return false;
        const SparseMatrix K0_full = K0.selfadjointView<Eigen::Upper>();
        Eigen::VectorXd sol = ldlt.solve(rhs);
        // Refine until the residual stops shrinking; curvature comparable
        // to the regularization makes the first few steps slow.
        double res = (rhs - K0_full * sol).lpNorm<Eigen::Infinity>();
        for (int r = 0, stalled = 0; r < settings.polish_refine_iters && stalled < 3; ++r)
        {
            const Eigen::VectorXd trial = sol + ldlt.solve(rhs - K0_full * sol);
            const double trial_res = (rhs - K0_full * trial).lpNorm<Eigen::Infinity>();
            if (!(trial_res < res))
                break;
            stalled = trial_res > 0.5 * res ? stalled + 1 : 0;
            sol = trial;
            res = trial_res;
        }
        if (!sol.allFinite())
            return false;

        Eigen::VectorXd x = sol.head(n);
        Eigen::VectorXd yy = Eigen::VectorXd::Zero(m);
        for (Eigen::Index r = 0; r < k; ++r)
            yy[rows[static_cast<std::size_t>(r)]] = sol[n + r];

        const Eigen::VectorXd ax = s.A * x;
        bool changed = false;
        for (Eigen::Index i = 0; i < m; ++i)
        {
            auto& a = act[static_cast<std::size_t>(i)];
            if (a == Activity::inactive)
            {
                if (ax[i] < s.l[i] - feas_tol)
                {
                    a = Activity::lower;
                    changed = true;
                }
                else if (ax[i] > s.u[i] + feas_tol)
                {
                    a = Activity::upper;
                    changed = true;
                }
            }
            else if (!is_equality(s.l[i], s.u[i]))
            {
                if ((a == Activity::lower && yy[i] > dual_tol) || (a == Activity::upper && yy[i] < -dual_tol))
                {
                    a = Activity::inactive;
                    changed = true;
                }
            }
        }
        if (!changed)
        {
            x_out = std::move(x);
            y_out = std::move(yy);
            return true;
        }
    }
    return false;
}

} // namespace

void QpProblem::validate() const
{
    const Eigen::Index n = q.size();
    const Eigen::Index m = l.size();
    if (P.rows() != n || P.cols() != n)
        throw std::invalid_argument("QpProblem: P must be n x n");
    if (A.cols() != n || A.rows() != m || u.size() != m)
        throw std::invalid_argument("QpProblem: A, l, u dimensions inconsistent");
    for (Eigen::Index i = 0; i < m; ++i)
        if (!(l[i] <= u[i]))
            throw std::invalid_argument("QpProblem: l > u at row " + std::to_string(i));
    if (!q.allFinite())
        throw std::invalid_argument("QpProblem: q must be finite");

    const SparseMatrix Pt = P.transpose();
    const double pmax = std::max(1.0, P.nonZeros() ? Eigen::Map<const Eigen::VectorXd>(P.valuePtr(), P.nonZeros())
                                                         .lpNorm<Eigen::Infinity>()
                                                   : 0.0);
    const SparseMatrix asym = P - Pt;
    double asym_max = 0.0;
    for (Eigen::Index k = 0; k < asym.nonZeros(); ++k)
        asym_max = std::max(asym_max, std::abs(asym.valuePtr()[k]));
    if (asym_max > 1e-12 * pmax)
        throw std::invalid_argument("QpProblem: P is not symmetric");

    UnionFind uf(static_cast<int>(n));
    for (int j = 0; j < P.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(P, j); it; ++it)
            if (it.value() != 0.0)
                uf.unite(static_cast<int>(it.row()), j);
    std::vector<std::vector<int>> blocks(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        blocks[static_cast<std::size_t>(uf.find(j))].push_back(j);
    for (const auto& blk : blocks)
    {
        if (blk.empty())
            continue;
        const auto b = static_cast<Eigen::Index>(blk.size());
        Eigen::MatrixXd dense(b, b);
        for (Eigen::Index r = 0; r < b; ++r)
            for (Eigen::Index c = 0; c < b; ++c)
                dense(r, c) = P.coeff(blk[static_cast<std::size_t>(r)], blk[static_cast<std::size_t>(c)]);
        const double min_eig =
            b == 1 ? dense(0, 0) : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense, Eigen::EigenvaluesOnly)
                                       .eigenvalues()
                                       .minCoeff();
        if (min_eig < -1e-9 * std::max(1.0, dense.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("QpProblem: P is not positive semidefinite (min eigenvalue " +
                                        std::to_string(min_eig) + ")");
    }
}

KktResiduals kkt_residuals(const QpProblem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
    const Eigen::VectorXd ax = problem.A * x;
    KktResiduals r;
    r.primal = primal_violation(ax, problem.l, problem.u);
    r.dual = vec_inf(problem.P * x + problem.q + problem.A.transpose() * y);
    return r;
}

QpResult solve_qp(const QpProblem& problem, const QpSettings& settings, const QpWarmStart* warm_start)
{
    problem.validate();
    const Eigen::Index n = problem.num_variables();
    const Eigen::Index m = problem.num_constraints();
    const Exec exec = (n + m) >= kParallelThreshold ? settings.exec : Exec::serial;

    const ScaledProblem s = equilibrate(problem, settings.scaling_iters);
    const CsrMatrix A_csr = problem.A;
    const CsrMatrix At_csr = SparseMatrix(problem.A.transpose());
    const CsrMatrix P_csr = problem.P;
    const CsrMatrix As_csr = s.A;
    const CsrMatrix Ast_csr = SparseMatrix(s.A.transpose());
    const CsrMatrix Ps_csr = s.P;

    double rho = std::clamp(settings.rho, kRhoMin, kRhoMax);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    if (warm_start)
    {
        if (warm_start->x.size() == n)
            x = warm_start->x.cwiseQuotient(s.D);
        if (warm_start->y.size() == m)
            y = s.c * warm_start->y.cwiseQuotient(s.E);
        if (warm_start->rho)
            rho = std::clamp(*warm_start->rho, kRhoMin, kRhoMax);
        z = (s.A * x).cwiseMax(s.l).cwiseMin(s.u);
    }
    else
    {
        for (Eigen::Index i = 0; i < m; ++i)
            z[i] = std::clamp(0.0, s.l[i], s.u[i]);
    }

    Eigen::VectorXd rho_vec = rho_vector(s, rho);
    KktSystem kkt(s.P, s.A, settings.sigma, rho_vec);

    Eigen::VectorXd rhs(n + m), sol(n + m), dx(n), dy(m), x_tilde(n), nu(m);
    Eigen::VectorXd ax(m), px(n), aty(n), tmp_n(n), tmp_m(m);
    const Eigen::VectorXd& l = s.l;
    const Eigen::VectorXd& u = s.u;

    QpResult result;
    result.status = QpStatus::max_iter;
    double last_eps_prim = settings.eps_abs, last_eps_dual = settings.eps_abs;

    // Accepts the polished point when it meets the tolerances, or (after
    // ADMM converged) when it is no worse than the ADMM point.
    const auto try_polish = [&](const Eigen::VectorXd& z_s, const Eigen::VectorXd& y_s, double tol_prim,
                                double tol_dual) {
        Eigen::VectorXd xp, yp;
        if (!polish(s, z_s, y_s, settings, xp, yp))
            return false;
        const Eigen::VectorXd x_pol = s.D.cwiseProduct(xp);
        const Eigen::VectorXd y_pol = s.E.cwiseProduct(yp) / s.c;
        const KktResiduals r = kkt_residuals(problem, x_pol, y_pol);
        bool accept = r.primal <= tol_prim && r.dual <= tol_dual;
        if (!accept && result.status == QpStatus::optimal)
        {
            const KktResiduals r_admm = kkt_residuals(problem, result.x, result.y);
            accept = r.primal <= std::max(r_admm.primal, settings.eps_abs) &&
                     r.dual <= std::max(r_admm.dual, settings.eps_abs);
        }
        if (!accept)
            return false;
        result.x = x_pol;
        result.y = y_pol;
        result.primal_residual = r.primal;
        result.dual_residual = r.dual;
        result.polished = true;
        return true;
    };
    int iter = 0;
    int checks = 0;
    const int admm_iters = settings.fallback_after > 0 ? std::min(settings.fallback_after, settings.max_iter)
                                                       : settings.max_iter;
    for (iter = 1; iter <= admm_iters; ++iter)
    {
        kernels::kkt_rhs(exec, kernels::view(x), kernels::view(s.q), settings.sigma, kernels::view(z),
                         kernels::view(y), kernels::view(rho_vec), kernels::view(rhs));
        kkt.solve(rhs, sol);
        x_tilde = sol.head(n);
        nu = sol.tail(m);
        kernels::constraint_step(exec, {kernels::view(nu), kernels::view(l), kernels::view(u),
                                        kernels::view(rho_vec), kernels::view(z), kernels::view(y),
                                        kernels::view(dy), settings.alpha});
        kernels::variable_step(exec, {kernels::view(x_tilde), kernels::view(x), kernels::view(dx), settings.alpha});

        if (iter % settings.check_every != 0 && iter != 1)
            continue;
        ++checks;

        // Residuals in the original (unscaled) space.
        const Eigen::VectorXd x_un = s.D.cwiseProduct(x);
        const Eigen::VectorXd z_un = z.cwiseQuotient(s.E);
        const Eigen::VectorXd y_un = s.E.cwiseProduct(y) / s.c;
        kernels::spmv(exec, A_csr, kernels::view(x_un), kernels::view(ax));
        kernels::spmv(exec, P_csr, kernels::view(x_un), kernels::view(px));
        kernels::spmv(exec, At_csr, kernels::view(y_un), kernels::view(aty));
        tmp_m = ax - z_un;
        tmp_n = px + problem.q + aty;
        const double prim = kernels::inf_norm(exec, kernels::view(tmp_m));
        const double dual = kernels::inf_norm(exec, kernels::view(tmp_n));
        const double ax_norm = kernels::inf_norm(exec, kernels::view(ax));
        const double z_norm = kernels::inf_norm(exec, kernels::view(z_un));
        const double px_norm = kernels::inf_norm(exec, kernels::view(px));
        const double aty_norm = kernels::inf_norm(exec, kernels::view(aty));
        const double q_norm = vec_inf(problem.q);
        const double eps_prim = settings.eps_abs + settings.eps_rel * std::max(ax_norm, z_norm);
        const double eps_dual = settings.eps_abs + settings.eps_rel * std::max({px_norm, aty_norm, q_norm});
        result.primal_residual = prim;
        result.dual_residual = dual;
        last_eps_prim = eps_prim;
        last_eps_dual = eps_dual;
        if (prim <= eps_prim && dual <= eps_dual)
        {
            result.status = QpStatus::optimal;
            break;
        }

        // Slow tail on degenerate problems: try to finish through the
        // active set once the iterate is roughly there.
        if (settings.polish && m > 0 && checks % 50 == 0 && prim <= 1e3 * eps_prim && dual <= 1e3 * eps_dual &&
            try_polish(z, y, eps_prim, eps_dual))
        {
            result.status = QpStatus::optimal;
            break;
        }

        // Primal infeasibility certificate from the multiplier increment.
        if (m > 0)
        {
            const Eigen::VectorXd dy_un = s.E.cwiseProduct(dy);
            const double dy_norm = vec_inf(dy_un);
            if (dy_norm > 1e-12)
            {
                kernels::spmv(exec, At_csr, kernels::view(dy_un), kernels::view(tmp_n));
                double support = 0.0;
                bool bounded = true;
                for (Eigen::Index i = 0; i < m && bounded; ++i)
                {
                    const double d = dy_un[i];
                    const double lo = problem.l[i], hi = problem.u[i];
                    if (d > 1e-12 * dy_norm)
                        bounded = std::isfinite(hi), support += d * hi;
                    else if (d < -1e-12 * dy_norm)
                        bounded = std::isfinite(lo), support += d * lo;
                }
                if (bounded && vec_inf(tmp_n) <= settings.eps_prim_inf * dy_norm &&
                    support <= -settings.eps_prim_inf * dy_norm)
                {
                    result.status = QpStatus::infeasible;
                    break;
                }
            }
        }

        if (settings.adaptive_rho && checks % 5 == 0 && m > 0)
        {
            Eigen::VectorXd axs(m), pxs(n), atys(n);
            kernels::spmv(exec, As_csr, kernels::view(x), kernels::view(axs));
            kernels::spmv(exec, Ps_csr, kernels::view(x), kernels::view(pxs));
            kernels::spmv(exec, Ast_csr, kernels::view(y), kernels::view(atys));
            const double prim_s = vec_inf(axs - z) / std::max({vec_inf(axs), vec_inf(z), 1e-30});
            const double dual_s =
                vec_inf(pxs + s.q + atys) / std::max({vec_inf(pxs), vec_inf(atys), vec_inf(s.q), 1e-30});
            if (prim_s > 0.0 && dual_s > 0.0)
            {
                const double new_rho = std::clamp(rho * std::sqrt(prim_s / dual_s), kRhoMin, kRhoMax);
                if (new_rho > rho * settings.adaptive_rho_tolerance || new_rho < rho / settings.adaptive_rho_tolerance)
                {
                    rho = new_rho;
                    rho_vec = rho_vector(s, rho);
                    kkt.update_rho(rho_vec);
                }
            }
        }
    }
    result.iterations = std::min(iter, admm_iters);
    result.rho = rho;
    if (!result.polished)
    {
        result.x = s.D.cwiseProduct(x);
        result.y = s.E.cwiseProduct(y) / s.c;
        if (result.status != QpStatus::infeasible && settings.polish && m > 0 &&
            try_polish(z, y, last_eps_prim, last_eps_dual))
            result.status = QpStatus::optimal;
    }
    if (result.status == QpStatus::max_iter && admm_iters < settings.max_iter)
    {
        QpSettings ipm_settings = settings;
        ipm_settings.max_iter = settings.max_iter - admm_iters;
        QpResult ipm = solve_qp_ipm(problem, ipm_settings);
        if (ipm.status != QpStatus::max_iter)
        {
            ipm.iterations += result.iterations;
            ipm.rho = rho;
            ipm.interior_point = true;
            return ipm;
        }
    }
    result.objective = problem.objective(result.x);
    return result;
}

} // namespace aggsched
