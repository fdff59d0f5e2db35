#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "aggsched/ledger.hpp"
#include "aggsched/optimizer_da.hpp"
#include "aggsched/optimizer_rt.hpp"
#include "aggsched/price_stats.hpp"
#include "aggsched/prosumer.hpp"

namespace aggsched
{

inline constexpr const char* kVersion = "0.1.0";

/// One single-day experiment. Defaults follow the reference parameter
/// table: 100 prosumers, 24 h, 3 h lookahead, lambda 1, zero imbalance
/// prices, 10 kW grid limit, 90 % charging efficiency.
struct ExperimentConfig
{
    int n_prosumers = 100;
    int hours = 24;
    int horizon_hours = 3;
    double lambda_da = 1.0;
    double lambda_rt = 1.0;
    double delta_plus = 0.0;
    double delta_minus = 0.0;
    std::string regime = "caiso";

    std::uint64_t da_seed = 1;  // pool, day-ahead prices
    std::uint64_t seed = 1;     // real-time prices and realizations

    double load_spread = 0.2;
    double rt_noise = 0.05;
    double g_limit_kw = 10.0;
    double eta = 0.9;
    double ev_share = 1.0;

    double da_price_noise = 3.0;   // $/MWh, innovation of the AR(1) day-ahead noise
    double rt_price_noise = 5.0;   // $/MWh, Gaussian quarter-hourly noise
    double spike_probability = 0.02;
    int history_days = 28;
    std::string date = "2017-03-15";

    // Optional inputs; empty means synthesize.
    std::filesystem::path pool_dir;
    std::filesystem::path da_price_history;
    std::filesystem::path rt_price_history;

    std::filesystem::path out_dir = "run";

    void validate() const;
    ImbalanceRegime imbalance_regime() const;
    /// Stable text form of every field except out_dir, used for the hash.
    std::string canonical() const;
};

std::uint64_t fnv1a64(std::string_view text);

/// Hourly aggregate load and PV (kW) for a pool of `n`.
Eigen::VectorXd default_aggregate_load(int n);
Eigen::VectorXd default_aggregate_pv(int n);
/// Hourly day-ahead base price profile ($/MWh); weekends scaled by 0.9.
Eigen::VectorXd default_price_profile(bool weekend);

struct PriceNoise
{
    double da_sigma = 3.0;
    double da_phi = 0.8;
    double rt_sigma = 5.0;
    double spike_probability = 0.02;
    double spike_max = 10.0; // spike magnitude up to this multiple of the slot's base price
    double rt_ratio = 0.93;
};

/// base + AR(1) noise, clipped to [0, 100].
Eigen::VectorXd synth_da_prices(std::mt19937_64& rng, const Eigen::VectorXd& base, const PriceNoise& noise);
/// rt_ratio * upsampled DA + Gaussian noise + symmetric spikes.
Eigen::VectorXd synth_rt_prices(std::mt19937_64& rng, const Eigen::VectorXd& p_da, const PriceNoise& noise);

struct SynthPrices
{
    Eigen::VectorXd p_da; // 24
    Eigen::VectorXd p_rt; // 96
};
SynthPrices synth_prices(std::uint64_t seed, const Eigen::VectorXd& base_da_profile, const PriceNoise& noise = {});

/// Error raised by simulate(), tagged with the pipeline stage.
class StageError : public std::runtime_error
{
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage))
    {
    }
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct ExperimentBundle
{
    ExperimentConfig config;
    TimeGrid grid{24, 3};
    std::vector<Prosumer> pool;
    PriceSeries da_history, rt_history;   // before the simulated day
    PriceSeries da_cleared, rt_realized;  // the simulated day
    PriceModel price_model;
    DaSolution da;
    ScheduleTable schedule;
    RtTrace rt;
    CostLedger ledger;
    std::uint64_t config_hash = 0;
    double wall_seconds = 0.0;
};

struct SimulateOptions
{
    Exec exec = Exec::parallel;
    bool warm_start = true;
};

ExperimentBundle simulate(const ExperimentConfig& config, const SimulateOptions& options = {});

/// Real-time stage inputs of a bundle whose day-ahead stage has run.
DayInputs day_inputs(const ExperimentBundle& bundle);

/// da_schedule.csv, da_summary.json, rt_trace.csv, rt_trace_prosumers.csv,
/// rt_hours.csv, ledger.json, meta.json, plots/, price_model/, prices/, pool/.
void write_bundle(const ExperimentBundle& bundle, const std::filesystem::path& dir);

/// Recompute the ledger from a bundle directory's CSV files.
CostLedger ledger_from_directory(const std::filesystem::path& dir);

} // namespace aggsched
