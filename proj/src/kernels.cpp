#include "aggsched/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace aggsched::kernels
{

namespace
{

inline void row_product(const CsrMatrix& a, std::span<const double> x, std::span<double> y, Eigen::Index row)
{
    const int* outer = a.outerIndexPtr();
    const int* inner = a.innerIndexPtr();
    const double* val = a.valuePtr();
    double acc = 0.0;
    for (int k = outer[row]; k < outer[row + 1]; ++k)
        acc += val[k] * x[inner[k]];
    y[row] = acc;
}

inline void constraint_entry(const ConstraintStep& s, std::size_t i)
{
    const double rho = s.rho[i];
    const double z_tilde = s.z[i] + (s.nu[i] - s.y[i]) / rho;
    const double z_relax = s.alpha * z_tilde + (1.0 - s.alpha) * s.z[i];
    const double z_new = std::clamp(z_relax + s.y[i] / rho, s.lower[i], s.upper[i]);
    const double y_new = s.y[i] + rho * (z_relax - z_new);
    s.dy[i] = y_new - s.y[i];
    s.y[i] = y_new;
    s.z[i] = z_new;
}

inline void variable_entry(const VariableStep& s, std::size_t j)
{
    const double x_new = s.alpha * s.x_tilde[j] + (1.0 - s.alpha) * s.x[j];
    s.dx[j] = x_new - s.x[j];
    s.x[j] = x_new;
}

inline void moment_row(std::span<const Eigen::VectorXd> samples, Eigen::MatrixXd& out, Eigen::Index i)
{
    const Eigen::Index d = out.cols();
    const double inv_n = 1.0 / static_cast<double>(samples.size());
    for (Eigen::Index j = 0; j < d; ++j)
    {
        double acc = 0.0;
        for (const auto& e : samples)
            acc += e[i] * e[j];
        out(i, j) = acc * inv_n;
    }
}

} // namespace

namespace serial
{

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y)
{
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        row_product(a, x, y, r);
}

double inf_norm(std::span<const double> v)
{
    double m = 0.0;
    for (double e : v)
        m = std::max(m, std::abs(e));
    return m;
}

void kkt_rhs(std::span<const double> x, std::span<const double> q, double sigma, std::span<const double> z,
             std::span<const double> y, std::span<const double> rho, std::span<double> rhs)
{
    const std::size_t n = x.size();
    for (std::size_t j = 0; j < n; ++j)
        rhs[j] = sigma * x[j] - q[j];
    for (std::size_t i = 0; i < z.size(); ++i)
        rhs[n + i] = z[i] - y[i] / rho[i];
}

void constraint_step(const ConstraintStep& s)
{
    for (std::size_t i = 0; i < s.z.size(); ++i)
        constraint_entry(s, i);
}

void variable_step(const VariableStep& s)
{
    for (std::size_t j = 0; j < s.x.size(); ++j)
        variable_entry(s, j);
}

Eigen::MatrixXd second_moment(std::span<const Eigen::VectorXd> samples)
{
    const Eigen::Index d = samples.front().size();
    Eigen::MatrixXd out(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        moment_row(samples, out, i);
    return out;
}

} // namespace serial

namespace omp
{

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y)
{
    const Eigen::Index rows = a.rows();
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < rows; ++r)
        row_product(a, x, y, r);
}

double inf_norm(std::span<const double> v)
{
    double m = 0.0;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(v.size());
#pragma omp parallel for schedule(static) reduction(max : m)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        m = std::max(m, std::abs(v[i]));
    return m;
}

void kkt_rhs(std::span<const double> x, std::span<const double> q, double sigma, std::span<const double> z,
             std::span<const double> y, std::span<const double> rho, std::span<double> rhs)
{
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(z.size());
#pragma omp parallel
    {
#pragma omp for schedule(static) nowait
        for (std::ptrdiff_t j = 0; j < n; ++j)
            rhs[j] = sigma * x[j] - q[j];
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < m; ++i)
            rhs[n + i] = z[i] - y[i] / rho[i];
    }
}

void constraint_step(const ConstraintStep& s)
{
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(s.z.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i)
        constraint_entry(s, static_cast<std::size_t>(i));
}

void variable_step(const VariableStep& s)
{
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(s.x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j)
        variable_entry(s, static_cast<std::size_t>(j));
}

Eigen::MatrixXd second_moment(std::span<const Eigen::VectorXd> samples)
{
    const Eigen::Index d = samples.front().size();
    Eigen::MatrixXd out(d, d);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < d; ++i)
        moment_row(samples, out, i);
    return out;
}

} // namespace omp

void spmv(Exec e, const CsrMatrix& a, std::span<const double> x, std::span<double> y)
{
    e == Exec::parallel ? omp::spmv(a, x, y) : serial::spmv(a, x, y);
}

double inf_norm(Exec e, std::span<const double> v)
{
    return e == Exec::parallel ? omp::inf_norm(v) : serial::inf_norm(v);
}

void kkt_rhs(Exec e, std::span<const double> x, std::span<const double> q, double sigma, std::span<const double> z,
             std::span<const double> y, std::span<const double> rho, std::span<double> rhs)
{
    e == Exec::parallel ? omp::kkt_rhs(x, q, sigma, z, y, rho, rhs) : serial::kkt_rhs(x, q, sigma, z, y, rho, rhs);
}

void constraint_step(Exec e, const ConstraintStep& s)
{
    e == Exec::parallel ? omp::constraint_step(s) : serial::constraint_step(s);
}

void variable_step(Exec e, const VariableStep& s)
{
    e == Exec::parallel ? omp::variable_step(s) : serial::variable_step(s);
}

Eigen::MatrixXd second_moment(Exec e, std::span<const Eigen::VectorXd> samples)
{
    return e == Exec::parallel ? omp::second_moment(samples) : serial::second_moment(samples);
}

} // namespace aggsched::kernels
