#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aggsched/prosumer.hpp"
#include "aggsched/qp.hpp"
#include "aggsched/timegrid.hpp"

namespace aggsched
{

/// $ per (kW x slot) for a slot of `step_hours` priced in $/MWh.
inline constexpr double cost_factor(double step_hours) { return step_hours * 1e-3; }

/// Day-ahead mean-variance problem over a pool. Validated on construction:
/// dimensions, lambda >= 0, covariance symmetric PSD.
class DaProblem
{
public:
    DaProblem(TimeGrid grid, std::vector<Prosumer> pool, Eigen::VectorXd price, Eigen::MatrixXd covariance,
              double lambda);

    const TimeGrid& grid() const { return grid_; }
    const std::vector<Prosumer>& pool() const { return pool_; }
    const Eigen::VectorXd& price() const { return price_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }
    double lambda() const { return lambda_; }

private:
    TimeGrid grid_;
    std::vector<Prosumer> pool_;
    Eigen::VectorXd price_;
    Eigen::MatrixXd cov_;
    double lambda_;
};

struct DaSettings
{
    QpSettings qp;
    double epsilon = 1e-9; // weight of sum_i |G_i|^2, picks the minimum-norm split
    Exec exec = Exec::parallel;
};

struct DaSolution
{
    Eigen::MatrixXd g, ev;      // N x T, kW
    Eigen::VectorXd g_total;    // aggregate grid variable as solved
    Eigen::VectorXd ev_total;   // sum of EV_i

    double price_term = 0.0;    // k p'G, $
    double risk_term = 0.0;     // (lambda/2) k^2 G'CG, $
    double risk_value = 0.0;    // G'CG, ($/MWh)^2 kW^2
    double objective = 0.0;     // price_term + risk_term

    QpStatus status = QpStatus::optimal;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double aggregation_residual = 0.0; // max |G - sum_i G_i|
    double local_violation = 0.0;      // worst local constraint violation

    Commitment commitment(Eigen::Index i) const { return {ev.row(i).transpose(), g.row(i).transpose()}; }
    std::vector<Commitment> commitments() const;
};

/// Throws InfeasibleProsumerError for the first prosumer whose day-ahead
/// constraints admit no schedule, and QpError if the solver does not reach
/// an optimal status.
DaSolution solve_da(const DaProblem& problem, const DaSettings& settings = {});

/// Per-prosumer hourly schedule as stored in da_schedule.csv
/// (prosumer, hour, g_kw, ev_kw; hours 1-based).
struct ScheduleTable
{
    std::vector<int> prosumer_ids;
    Eigen::MatrixXd g, ev; // N x T

    std::vector<Commitment> commitments() const;
};

ScheduleTable schedule_table(const DaSolution& sol, std::span<const Prosumer> pool);
void write_schedule(const std::filesystem::path& path, const ScheduleTable& s);
/// Rows may come in any order; every (prosumer, hour) pair must appear once.
ScheduleTable read_schedule(const std::filesystem::path& path, const TimeGrid& grid);

/// (lambda/2) k^2 G'CG and k p'G for an hourly aggregate schedule.
double da_price_term(const Eigen::VectorXd& price, const Eigen::VectorXd& g);
double da_risk_term(const Eigen::MatrixXd& cov, double lambda, const Eigen::VectorXd& g);

} // namespace aggsched
