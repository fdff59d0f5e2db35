#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "aggsched/prosumer.hpp"
#include "aggsched/qp.hpp"
#include "aggsched/qp_builder.hpp"
#include "aggsched/timegrid.hpp"

namespace aggsched
{

enum class RegimeMode
{
    caiso,   // both imbalance prices zero
    uk,      // single price
    germany  // delta_plus < delta_minus
};

std::string to_string(RegimeMode m);
RegimeMode parse_regime(std::string_view text);

/// Imbalance prices in $/MWh. delta_plus is paid for deviations that help
/// the system, delta_minus charged for deviations that worsen it.
struct ImbalanceRegime
{
    RegimeMode mode = RegimeMode::caiso;
    double delta_plus = 0.0;
    double delta_minus = 0.0;

    /// Throws std::invalid_argument when the prices violate the mode.
    static ImbalanceRegime make(RegimeMode mode, double delta_plus, double delta_minus);
    void validate() const;
};

/// +1 when the system is short (p_rt > p_da), -1 when long, 0 on a tie.
int system_sign(double p_rt, double p_da);
Eigen::VectorXi system_signs(const Eigen::VectorXd& p_rt, const Eigen::VectorXd& p_da_up);

struct ImbalanceBreakdown
{
    std::array<double, 4> cases{}; // short/up, short/down, long/up, long/down; $

    double total() const { return cases[0] + cases[1] + cases[2] + cases[3]; }
};

/// The four case formulas on quarter-hourly aggregate deviations (kW).
/// Ties (p_rt == p_da) cost nothing.
ImbalanceBreakdown imbalance_cost(const Eigen::VectorXd& dg, const Eigen::VectorXd& p_rt,
                                  const Eigen::VectorXd& p_da_up, const ImbalanceRegime& regime);

/// Primal/dual values keyed by global slot, so that the solution of one
/// window seeds the next one shifted by an hour.
struct RtWarmStart
{
    std::map<VarKey, double> x;
    std::map<RowKey, double> y;
};

struct RtProblem
{
    int hour = 1;
    SlotRange window;
    Eigen::VectorXd price;   // $/MWh: realized on implemented slots, forecast beyond
    Eigen::VectorXd p_da_up; // cleared day-ahead price on the quarter grid
    double lambda = 1.0;
    Eigen::MatrixXd cov;     // window-sized
    ImbalanceRegime regime;
    std::vector<int> prosumer_ids;
    std::vector<WindowContext> contexts; // real-time mode, one per prosumer
    Eigen::Index implemented = kQuartersPerHour;

    void validate() const;
};

struct RtSettings
{
    QpSettings qp;
    double epsilon = 1e-9; // weight of sum_i |dG_i|^2
    Exec exec = Exec::parallel;
};

struct RtStepSolution
{
    SlotRange window;
    Eigen::Index implemented = 0;
    Eigen::MatrixXd dg, dev;          // N x L, kW
    Eigen::VectorXd dg_total;         // aggregate variable as solved
    Eigen::VectorXd dev_total;        // sum of dEV_i
    Eigen::VectorXi signs;
    Eigen::VectorXd epigraph;         // epigraph value where present, else NaN
    std::vector<double> relaxation;   // kWh added to each prosumer's energy bounds

    double price_term = 0.0;
    double risk_term = 0.0;
    double risk_value = 0.0;          // dG' C dG
    ImbalanceBreakdown imbalance;
    double objective = 0.0;           // price + risk + imbalance over the window

    QpStatus status = QpStatus::optimal;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double local_violation = 0.0;
    double aggregation_residual = 0.0;

    RtWarmStart warm;
};

/// Repairs energy-bound infeasibility by the smallest uniform widening per
/// prosumer; throws InfeasibleProsumerError when a slot cannot balance.
RtStepSolution solve_rt_step(const RtProblem& problem, const RtSettings& settings = {},
                             const RtWarmStart* warm_start = nullptr);

double rt_price_term(const Eigen::VectorXd& price, const Eigen::VectorXd& dg);
double rt_risk_term(const Eigen::MatrixXd& cov, double lambda, const Eigen::VectorXd& dg);

struct DayInputs
{
    TimeGrid grid{24, 3};
    std::vector<Prosumer> pool;
    std::vector<Commitment> schedule;  // day-ahead, one per prosumer
    Eigen::VectorXd p_da;              // T, cleared
    Eigen::VectorXd p_rt;              // 4T, realized
    Eigen::VectorXd p_rt_forecast;     // 4T
    Eigen::MatrixXd rt_cov_template;   // at least 4T_H square
    double lambda = 1.0;
    ImbalanceRegime regime;

    void validate() const;
};

/// Carried between hours; enough to resume the loop.
struct MpcState
{
    int next_hour = 1;
    Eigen::VectorXd e_past;            // kWh delivered per prosumer
    std::optional<RtWarmStart> warm;
};

struct MpcOptions
{
    RtSettings settings;
    bool warm_start = true;
    int last_hour = 0; // stop after this hour; 0 runs to the end of the day
};

struct RtTrace
{
    Eigen::VectorXd dg, dev;           // 4T aggregate, implemented values
    Eigen::VectorXd p_rt, p_da_up;     // 4T
    Eigen::VectorXi implemented;       // 4T, 1 where decided by this run
    Eigen::MatrixXd dg_i, dev_i;       // N x 4T
    Eigen::VectorXd e_past_end;        // N, kWh at the end of the run

    // Per hour (T); zero for hours not run.
    Eigen::VectorXd objective, risk_value, risk_term, relaxation;
    Eigen::VectorXi iterations;
};

/// Receding-horizon loop. With `state` non-null the loop starts at
/// state->next_hour and leaves the carried state there on return.
RtTrace run_mpc(const DayInputs& inputs, const MpcOptions& options = {}, MpcState* state = nullptr);

} // namespace aggsched
