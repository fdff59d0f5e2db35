#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "aggsched/kernels.hpp"

namespace aggsched
{

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/**
 * Convex quadratic program
 *
 *     minimize    1/2 x'Px + q'x
 *     subject to  l <= Ax <= u
 *
 * P is stored in full (both triangles). Infinite bounds are allowed.
 */
struct QpProblem
{
    SparseMatrix P;
    Eigen::VectorXd q;
    SparseMatrix A;
    Eigen::VectorXd l;
    Eigen::VectorXd u;

    Eigen::Index num_variables() const { return q.size(); }
    Eigen::Index num_constraints() const { return l.size(); }

    double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }

    /// Dimensions, bound ordering, symmetry and positive semidefiniteness
    /// of P (per connected block of its sparsity graph). Throws
    /// std::invalid_argument.
    void validate() const;
};

struct QpSettings
{
    double eps_abs = 1e-8;
    double eps_rel = 1e-6;
    double eps_prim_inf = 1e-5;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    int max_iter = 50000;
    int check_every = 10;
    int scaling_iters = 10;
    bool adaptive_rho = true;
    double adaptive_rho_tolerance = 5.0;
    bool polish = true;
    int polish_refine_iters = 200;
    /// ADMM iterations after which an unconverged solve is handed to the
    /// interior point method (0 disables the fallback).
    int fallback_after = 4000;
    Exec exec = Exec::parallel;
};

enum class QpStatus
{
    optimal,
    max_iter,
    infeasible
};

std::string to_string(QpStatus s);

struct QpWarmStart
{
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    std::optional<double> rho;
};

/// y follows the usual sign convention: y_i > 0 when the upper bound is
/// active, y_i < 0 for the lower bound.
struct QpResult
{
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    QpStatus status = QpStatus::max_iter;
    double primal_residual = kInf;
    double dual_residual = kInf;
    int iterations = 0;
    bool polished = false;
    bool interior_point = false; // finished by the interior point fallback
    double rho = 0.0;
    double objective = 0.0;
};

class QpError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Operator-splitting (ADMM) solver with Ruiz equilibration, adaptive
/// step size, infeasibility detection and active-set polishing. A solve
/// still short of tolerance after `fallback_after` iterations is finished
/// by solve_qp_ipm; the reported iterations are then the sum of both.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                  const QpWarmStart* warm_start = nullptr);

/// Dense primal-dual interior point method. Independent of the ADMM path
/// and intended for small problems (n <= kDenseMaxVariables).
inline constexpr Eigen::Index kDenseMaxVariables = 200;
QpResult solve_qp_dense(const QpProblem& problem, const QpSettings& settings = {});

/// Sparse primal-dual interior point method on the augmented KKT system.
/// Robust on degenerate problems; has no warm start. Iterations are capped
/// at 200.
QpResult solve_qp_ipm(const QpProblem& problem, const QpSettings& settings = {});

/// Unscaled KKT residuals of a candidate primal/dual pair.
struct KktResiduals
{
    double primal = 0.0;   // ||Ax - proj_[l,u](Ax)||_inf
    double dual = 0.0;     // ||Px + q + A'y||_inf
};
KktResiduals kkt_residuals(const QpProblem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Plain-text dump: a `qp n m` line, then `P`/`A` sections of `i j v`
/// triplets and `q`/`l`/`u` sections of one value per line.
void write_qp(const std::filesystem::path& path, const QpProblem& problem);
QpProblem read_qp(const std::filesystem::path& path);

/// When AGGSCHED_DUMP_DIR is set, writes `problem` there as `<name>.qp`.
void dump_qp_if_requested(const QpProblem& problem, const std::string& name);

} // namespace aggsched
