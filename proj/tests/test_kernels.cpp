#include <doctest.h>

#include <random>
#include <vector>

#include "aggsched/kernels.hpp"

using namespace aggsched;
using kernels::view;

namespace
{

CsrMatrix random_sparse(int rows, int cols, double density, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0), pick(0.0, 1.0);
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            if (pick(rng) < density)
                t.emplace_back(i, j, u(rng));
    CsrMatrix m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

Eigen::VectorXd random_vector(int n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i)
        v[i] = g(rng);
    return v;
}

} // namespace

TEST_CASE("spmv: serial matches Eigen and the parallel path")
{
    std::mt19937_64 rng(1);
    for (int rows : {1, 17, 5000})
    {
        const CsrMatrix a = random_sparse(rows, 300, 0.02, rng);
        const Eigen::VectorXd x = random_vector(300, rng);
        Eigen::VectorXd ys(rows), yp(rows);
        kernels::serial::spmv(a, view(x), view(ys));
        kernels::omp::spmv(a, view(x), view(yp));
        const Eigen::VectorXd ref = a * x;
        CHECK((ys - ref).lpNorm<Eigen::Infinity>() < 1e-12);
        CHECK(ys == yp); // row-wise sums in the same order
    }
}

TEST_CASE("inf_norm")
{
    std::mt19937_64 rng(2);
    const Eigen::VectorXd v = random_vector(10001, rng);
    CHECK(kernels::serial::inf_norm(view(v)) == v.lpNorm<Eigen::Infinity>());
    CHECK(kernels::omp::inf_norm(view(v)) == v.lpNorm<Eigen::Infinity>());
    CHECK(kernels::serial::inf_norm({}) == 0.0);
}

TEST_CASE("ADMM step kernels agree between policies")
{
    std::mt19937_64 rng(3);
    const int m = 20000, n = 9000;
    const Eigen::VectorXd nu = random_vector(m, rng);
    Eigen::VectorXd lo = random_vector(m, rng), hi = lo.array() + 0.5;
    lo[0] = -std::numeric_limits<double>::infinity();
    hi[1] = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd rho = Eigen::VectorXd::Constant(m, 0.3);
    Eigen::VectorXd z0 = random_vector(m, rng), y0 = random_vector(m, rng);

    Eigen::VectorXd zs = z0, ys = y0, dys(m), zp = z0, yp = y0, dyp(m);
    kernels::serial::constraint_step({view(nu), view(lo), view(hi), view(rho), view(zs), view(ys), view(dys), 1.6});
    kernels::omp::constraint_step({view(nu), view(lo), view(hi), view(rho), view(zp), view(yp), view(dyp), 1.6});
    CHECK(zs == zp);
    CHECK(ys == yp);
    CHECK(dys == dyp);
    for (int i = 0; i < m; ++i)
    {
        CHECK(zs[i] >= lo[i]);
        CHECK(zs[i] <= hi[i]);
    }
    CHECK((ys - y0 - dys).lpNorm<Eigen::Infinity>() < 1e-12);

    const Eigen::VectorXd xt = random_vector(n, rng);
    Eigen::VectorXd xs = random_vector(n, rng), xp = xs, dxs(n), dxp(n);
    const Eigen::VectorXd x0 = xs;
    kernels::serial::variable_step({view(xt), view(xs), view(dxs), 1.6});
    kernels::omp::variable_step({view(xt), view(xp), view(dxp), 1.6});
    CHECK(xs == xp);
    CHECK(dxs == dxp);
    CHECK((xs - (1.6 * xt + (1.0 - 1.6) * x0)).lpNorm<Eigen::Infinity>() < 1e-12);

    const Eigen::VectorXd q = random_vector(n, rng);
    Eigen::VectorXd rs(n + m), rp(n + m);
    kernels::serial::kkt_rhs(view(x0), view(q), 1e-6, view(z0), view(y0), view(rho), view(rs));
    kernels::omp::kkt_rhs(view(x0), view(q), 1e-6, view(z0), view(y0), view(rho), view(rp));
    CHECK(rs == rp);
}

TEST_CASE("second moment: hand examples and policy agreement")
{
    std::vector<Eigen::VectorXd> two{Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0)};
    Eigen::Matrix2d expected;
    expected << 1, 0, 0, 0;
    CHECK(kernels::serial::second_moment(two) == expected);
    CHECK(kernels::omp::second_moment(two) == expected);

    std::mt19937_64 rng(4);
    std::vector<Eigen::VectorXd> many;
    for (int i = 0; i < 500; ++i)
        many.push_back(random_vector(24, rng));
    const Eigen::MatrixXd s = kernels::serial::second_moment(many);
    const Eigen::MatrixXd p = kernels::omp::second_moment(many);
    CHECK((s - p).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(24, 24);
    for (const auto& e : many)
        ref += e * e.transpose();
    ref /= 500.0;
    CHECK((s - ref).cwiseAbs().maxCoeff() < 1e-12);
}
