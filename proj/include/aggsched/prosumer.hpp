#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "aggsched/kernels.hpp"
#include "aggsched/timegrid.hpp"

namespace aggsched
{

/**
 * One pool member: uncontrollable load, rooftop PV, a grid-connection
 * limit and (optionally) an EV. Power in kW, energy in kWh.
 *
 * EV bounds are held at real-time resolution; the hourly day-ahead view is
 * derived by derive_day_ahead_bounds() so that a constant-power hourly plan
 * that respects the hourly bounds also respects the quarter-hourly ones.
 * Cumulative bounds describe energy delivered to the battery since the
 * start of the day.
 */
struct Prosumer
{
    int id = 0;
    double g_lo = -10.0;
    double g_hi = 10.0;
    double eta = 0.9;

    Eigen::VectorXd load_da, pv_da; // T, forecast profiles
    Eigen::VectorXd load_rt, pv_rt; // 4T, realizations

    Eigen::VectorXd ev_power_lo_rt, ev_power_hi_rt; // 4T, zero when unplugged
    Eigen::VectorXd ev_cum_lo_rt, ev_cum_hi_rt;     // 4T

    Eigen::VectorXd ev_power_lo_da, ev_power_hi_da; // T
    Eigen::VectorXd ev_cum_lo_da, ev_cum_hi_da;     // T

    bool plugged_rt(Eigen::Index slot) const { return ev_power_lo_rt[slot] != 0.0 || ev_power_hi_rt[slot] != 0.0; }

    void validate(const TimeGrid& grid) const;
};

/// Hourly EV bounds from the quarter-hourly ones: power bounds are the
/// intersection over the hour's quarters, cumulative bounds are taken at
/// the hour's last quarter.
void derive_day_ahead_bounds(Prosumer& p, const TimeGrid& grid);

/// Lower-triangular all-ones matrix: (A x)_j = sum_{k <= j} x_k.
Eigen::MatrixXd cumulation_matrix(Eigen::Index n);
Eigen::VectorXd prefix_sums(const Eigen::VectorXd& x);

enum class Mode
{
    day_ahead,
    real_time
};

/// Hourly schedule for one prosumer, as produced by the day-ahead solve.
struct Commitment
{
    Eigen::VectorXd ev_kw;
    Eigen::VectorXd grid_kw;
};

/**
 * Everything the local constraint builders need for one prosumer over one
 * window, already sliced to the window and at the window's resolution. In
 * day-ahead mode the committed vectors are zero and the decision variables
 * are absolute (EV_i, G_i); in real-time mode they are deviations.
 */
struct WindowContext
{
    Mode mode = Mode::day_ahead;
    SlotRange window;
    double step_hours = 1.0;
    double eta = 0.9;
    double g_lo = -10.0, g_hi = 10.0;
    Eigen::VectorXd load, pv;
    Eigen::VectorXd committed_ev, committed_grid;
    Eigen::VectorXd ev_power_lo, ev_power_hi;
    Eigen::VectorXd cum_lo, cum_hi;
    double e_past = 0.0;         // kWh delivered before the window
    double cum_relaxation = 0.0; // kWh widening both sides of the energy bounds

    Eigen::Index length() const { return static_cast<Eigen::Index>(window.length); }
};

WindowContext day_ahead_context(const Prosumer& p, const TimeGrid& grid);

/// Real-time context for `window`. The first `observed_slots` use realized
/// load/PV; the rest of the lookahead uses the day-ahead profiles.
WindowContext real_time_context(const Prosumer& p, const TimeGrid& grid, SlotRange window,
                                const Commitment& commitment, double e_past, std::size_t observed_slots);

enum class ConstraintFamily : std::uint8_t
{
    power_balance,
    grid_limit,
    ev_energy,
    ev_power
};

enum class VarKind : std::uint8_t
{
    ev,
    grid
};

struct Term
{
    VarKind kind;
    Eigen::Index slot; // window-local
    double coef;
};

struct ConstraintRow
{
    ConstraintFamily family;
    Eigen::Index slot; // window-local
    double lower;
    double upper;
    std::vector<Term> terms;
};

struct LocalConstraintSet
{
    Mode mode = Mode::day_ahead;
    SlotRange window;
    std::vector<ConstraintRow> rows;
};

LocalConstraintSet build_power_balance(const WindowContext& ctx);
LocalConstraintSet build_grid_limits(const WindowContext& ctx);
LocalConstraintSet build_ev_energy(const WindowContext& ctx);
LocalConstraintSet build_ev_power(const WindowContext& ctx);

/// All four families, in the order balance, grid, energy, power.
LocalConstraintSet build_local_constraints(const WindowContext& ctx);

/// Per-prosumer assembly over a pool; parallel over prosumers.
std::vector<LocalConstraintSet> build_pool_constraints(std::span<const WindowContext> contexts, Exec exec);

/// Evaluate every row at (ev, grid) and return the worst violation.
double max_violation(const LocalConstraintSet& set, const Eigen::VectorXd& ev, const Eigen::VectorXd& grid);

struct LocalFeasibility
{
    bool power_feasible = true;   // per-slot power/grid intervals non-empty
    double min_relaxation = 0.0;  // further energy-bound widening, beyond cum_relaxation, that restores feasibility (kWh)
    Eigen::Index first_bad_slot = -1;

    bool feasible() const { return power_feasible && min_relaxation == 0.0; }
};

/// Exact feasibility test by forward propagation of the reachable
/// cumulative-energy interval.
LocalFeasibility check_feasibility(const WindowContext& ctx);

/**
 * Closest-per-slot feasible EV trajectory (absolute kW) to `ev`: a backward
 * pass computes the cumulative-energy intervals from which the rest of the
 * window stays reachable, a forward pass clips each slot into them. Used
 * to snap solver output, which meets the bounds only to tolerance, onto
 * the exact feasible set. The grid power follows from the balance,
 * G = L - S + EV. Throws std::runtime_error when the window admits no
 * trajectory.
 */
Eigen::VectorXd snap_to_feasible(const WindowContext& ctx, const Eigen::VectorXd& ev);

struct EvFleetSpec
{
    double ev_share = 1.0;
    int arrival_earliest_hour = 6;
    int arrival_latest_hour = 19;
    int min_duration_hours = 4;
    int max_duration_hours = 11;
    std::vector<double> power_options_kw{3.3, 6.6, 7.2};
    double energy_fraction_lo = 0.3;
    double energy_fraction_hi = 0.8;
    double eta = 0.9;
};

struct PoolConfig
{
    EvFleetSpec fleet;
    double load_spread = 0.2;  // a in L_i = (L/n)(1 + u), u ~ U(-a, a)
    double rt_noise = 0.05;    // quarter-hourly relative sigma of the realizations
    double g_lo = -10.0;
    double g_hi = 10.0;
};

/// Heterogeneous pool around aggregate hourly load and PV profiles.
/// Deterministic in `seed`.
std::vector<Prosumer> synth_pool(int n, const Eigen::VectorXd& aggregate_load_kw, const Eigen::VectorXd& aggregate_pv_kw,
                                 const PoolConfig& config, std::uint64_t seed, const TimeGrid& grid);

/// Replace the real-time realizations by the upsampled day-ahead profiles.
void clear_realization_noise(std::vector<Prosumer>& pool, const TimeGrid& grid);

/// Redraw the real-time realizations as upsampled day-ahead profiles times
/// (1 + sigma * N(0, 1)), clipped at zero.
void resample_realizations(std::vector<Prosumer>& pool, const TimeGrid& grid, double sigma, std::uint64_t seed);

/// Pool bundle: prosumers.csv, profiles_da.csv, profiles_rt.csv, ev_windows.csv.
void write_pool(const std::filesystem::path& dir, std::span<const Prosumer> pool, const TimeGrid& grid);
std::vector<Prosumer> read_pool(const std::filesystem::path& dir, const TimeGrid& grid);

class InfeasibleProsumerError : public std::runtime_error
{
public:
    InfeasibleProsumerError(int prosumer_id, const std::string& what)
        : std::runtime_error(what), prosumer_id_(prosumer_id)
    {
    }
    int prosumer_id() const { return prosumer_id_; }

private:
    int prosumer_id_;
};

} // namespace aggsched
