#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "aggsched/optimizer_rt.hpp"
#include "aggsched/timegrid.hpp"

namespace aggsched
{

/// Quarter-hourly trace as written to rt_trace.csv
/// (slot, dg_kw, dev_kw, p_rt, implemented, p_da; slots 1-based).
struct SlotTrace
{
    Eigen::VectorXd dg, dev, p_rt, p_da_up;
    Eigen::VectorXi implemented;

    Eigen::Index size() const { return dg.size(); }
    void validate() const;
};

SlotTrace slot_trace(const RtTrace& trace);
void write_slot_trace(const std::filesystem::path& path, const SlotTrace& t);
SlotTrace read_slot_trace(const std::filesystem::path& path);

/// Per-hour solver record, rt_hours.csv
/// (hour, objective, risk_value, risk_term, relaxation_kwh, iterations).
struct HourTrace
{
    Eigen::VectorXd objective, risk_value, risk_term, relaxation;
    Eigen::VectorXi iterations;
};

HourTrace hour_trace(const RtTrace& trace);
void write_hour_trace(const std::filesystem::path& path, const HourTrace& h);
HourTrace read_hour_trace(const std::filesystem::path& path);

/// Column sums of an N x T schedule, summed in prosumer order.
Eigen::VectorXd aggregate_schedule(const Eigen::MatrixXd& per_prosumer);

struct DaSettlement
{
    double predicted = 0.0; // forecast prices times G*, $
    double cleared = 0.0;   // cleared prices times G*, $
};

DaSettlement settle_da(const Eigen::VectorXd& g_star, const Eigen::VectorXd& predicted_prices,
                       const Eigen::VectorXd& cleared_prices);

struct RtSettlement
{
    double supplementary = 0.0; // sum of p_rt dG k over implemented slots, $
    ImbalanceBreakdown imbalance;
    int implemented_slots = 0;
};

/// Throws when no slot is marked implemented.
RtSettlement settle_rt(const SlotTrace& trace, const ImbalanceRegime& regime);

/// Positive amounts are paid by the aggregator.
struct CostLedger
{
    double predicted_da_cost = 0.0;
    double cleared_da_cost = 0.0;
    double da_energy_mwh = 0.0;
    double rt_supplementary = 0.0;
    ImbalanceBreakdown imbalance;
    double imbalance_total = 0.0;
    double da_risk_value = 0.0;   // G*' C G*
    double da_risk_term = 0.0;    // (lambda/2) k^2 G*' C G*
    std::vector<double> rt_risk_values;
    std::vector<double> rt_risk_terms;
    int implemented_slots = 0;

    double rt_total() const { return rt_supplementary + imbalance_total; }
    double total_cost() const { return cleared_da_cost + rt_total(); }

    nlohmann::ordered_json to_json() const;
};

struct LedgerInputs
{
    Eigen::MatrixXd g_schedule;    // N x T
    Eigen::VectorXd p_da_forecast; // T
    Eigen::VectorXd p_da_cleared;  // T
    Eigen::MatrixXd da_cov;
    double lambda_da = 1.0;
    SlotTrace trace;
    HourTrace hours;
    ImbalanceRegime regime;
};

/// Pure fold over the schedule and traces.
CostLedger build_ledger(const LedgerInputs& in);

void write_ledger(const std::filesystem::path& path, const CostLedger& ledger);

/// plots/aggregate_power.csv and plots/prices.csv.
void write_plot_series(const std::filesystem::path& dir, const TimeGrid& grid, const Eigen::MatrixXd& g_schedule,
                       const Eigen::MatrixXd& ev_schedule, const SlotTrace& trace);

} // namespace aggsched
