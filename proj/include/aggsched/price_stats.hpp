#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "aggsched/kernels.hpp"
#include "aggsched/timegrid.hpp"

namespace aggsched
{

using Date = std::chrono::sys_days;

enum class Resolution
{
    hourly,
    quarter_hourly
};

inline constexpr std::int64_t seconds_per_slot(Resolution r) { return r == Resolution::hourly ? 3600 : 900; }
inline constexpr int slots_per_day(Resolution r) { return r == Resolution::hourly ? 24 : 96; }

/// Prices in $/MWh on a uniform UTC grid (unix seconds).
struct PriceSeries
{
    std::vector<std::int64_t> timestamps;
    Eigen::VectorXd values;
    Resolution resolution = Resolution::hourly;

    std::size_t size() const { return timestamps.size(); }
};

/// Throws std::runtime_error on length mismatch, duplicates, gaps or
/// non-increasing timestamps. Returns soft warnings (day-ahead prices
/// outside [-200, 2000] $/MWh) when `day_ahead` is set.
std::vector<std::string> validate_series(const PriceSeries& s, bool day_ahead);

std::int64_t parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t unix_seconds);
Date parse_date(std::string_view text);
std::string format_date(Date d);
std::int64_t to_unix(Date d);

PriceSeries make_series(Date start, Resolution r, const Eigen::VectorXd& values);

/// `timestamp,price` CSV, validated on read.
PriceSeries read_price_csv(const std::filesystem::path& path, Resolution r, bool day_ahead,
                           std::vector<std::string>* warnings = nullptr);
void write_price_csv(const std::filesystem::path& path, const PriceSeries& s);

/// Values of `s` on calendar day `d`; throws if the day is incomplete.
Eigen::VectorXd day_values(const PriceSeries& s, Date d);

struct ForecastConfig
{
    int recent_days = 4;      // K same-class days averaged per slot
    int min_history_days = 7;
};

/**
 * Seasonal baseline: each slot of the target day is the mean of that slot
 * over the K most recent complete days before `target` sharing its
 * weekday/weekend class.
 */
Eigen::VectorXd seasonal_baseline_forecast(const PriceSeries& history, Date target, const ForecastConfig& config = {});

struct ForecastErrorSample
{
    int day_id = 0;
    Eigen::VectorXd error;
};

/// Uncentered mean of e e' over the samples, then conditioned with
/// condition_psd().
Eigen::MatrixXd estimate_covariance(std::span<const ForecastErrorSample> errors, Exec exec = Exec::parallel);

/// Symmetrize, clip negative eigenvalues to zero, then add a ridge of
/// 1e-8 * trace / d to the diagonal.
Eigen::MatrixXd condition_psd(const Eigen::MatrixXd& c);

/// Throws std::invalid_argument unless `c` is square, finite, symmetric and
/// PSD (smallest eigenvalue >= -1e-9 * max(1, largest |eigenvalue|)).
void check_covariance(const Eigen::MatrixXd& c, std::string_view what);

/// Leading `length` x `length` block of the real-time template.
Eigen::MatrixXd rt_window_covariance(const Eigen::MatrixXd& rt_template, Eigen::Index length);

/// Mean of hourly-averaged real-time prices over mean day-ahead price on
/// the hours both series cover.
double rt_da_ratio(const PriceSeries& rt, const PriceSeries& da);

/// Expected prices and error covariances consumed by the two optimizers.
struct PriceModel
{
    Eigen::VectorXd da_forecast;        // T
    Eigen::VectorXd rt_forecast;        // 4T
    Eigen::MatrixXd da_cov;             // T x T
    Eigen::MatrixXd rt_cov_template;    // 4T_H x 4T_H

    void validate(const TimeGrid& grid) const;
};

/// Backtest the seasonal forecaster over `da_history`/`rt_history` to get
/// error samples (every day with enough prior history), estimate both
/// covariances, and forecast `target`. The real-time template collects
/// every full 4T_H window of each day's error vector.
PriceModel build_price_model(const PriceSeries& da_history, const PriceSeries& rt_history, Date target,
                             const TimeGrid& grid, const ForecastConfig& config = {});

/// Directory layout: p_da_hat.csv, p_rt_hat.csv, c_da.csv, c_rt.csv.
void write_price_model(const std::filesystem::path& dir, const PriceModel& model, Date target);
PriceModel read_price_model(const std::filesystem::path& dir, const TimeGrid& grid);

} // namespace aggsched
