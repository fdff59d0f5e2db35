#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace aggsched
{

/// Execution policy for the data-parallel kernels. `serial` is the
/// reference path kept for testing and benchmarking.
enum class Exec
{
    serial,
    parallel
};

using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

namespace kernels
{

/// Constraint-side ADMM step over m rows (all spans length m).
struct ConstraintStep
{
    std::span<const double> nu;    // multiplier part of the KKT solution
    std::span<const double> lower;
    std::span<const double> upper;
    std::span<const double> rho;
    std::span<double> z;
    std::span<double> y;
    std::span<double> dy;          // y_new - y_old
    double alpha;
};

/// Variable-side relaxation over n entries.
struct VariableStep
{
    std::span<const double> x_tilde;
    std::span<double> x;
    std::span<double> dx;          // x_new - x_old
    double alpha;
};

namespace serial
{
void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);
double inf_norm(std::span<const double> v);
void kkt_rhs(std::span<const double> x, std::span<const double> q, double sigma, std::span<const double> z,
             std::span<const double> y, std::span<const double> rho, std::span<double> rhs);
void constraint_step(const ConstraintStep& s);
void variable_step(const VariableStep& s);
Eigen::MatrixXd second_moment(std::span<const Eigen::VectorXd> samples);
} // namespace serial

namespace omp
{
void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);
double inf_norm(std::span<const double> v);
void kkt_rhs(std::span<const double> x, std::span<const double> q, double sigma, std::span<const double> z,
             std::span<const double> y, std::span<const double> rho, std::span<double> rhs);
void constraint_step(const ConstraintStep& s);
void variable_step(const VariableStep& s);
Eigen::MatrixXd second_moment(std::span<const Eigen::VectorXd> samples);
} // namespace omp

// Policy dispatch.
void spmv(Exec e, const CsrMatrix& a, std::span<const double> x, std::span<double> y);
double inf_norm(Exec e, std::span<const double> v);
void kkt_rhs(Exec e, std::span<const double> x, std::span<const double> q, double sigma, std::span<const double> z,
             std::span<const double> y, std::span<const double> rho, std::span<double> rhs);
void constraint_step(Exec e, const ConstraintStep& s);
void variable_step(Exec e, const VariableStep& s);
Eigen::MatrixXd second_moment(Exec e, std::span<const Eigen::VectorXd> samples);

inline std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<double> view(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

} // namespace kernels
} // namespace aggsched
