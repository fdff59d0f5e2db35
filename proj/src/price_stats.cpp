#include "aggsched/price_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "aggsched/csv.hpp"

namespace aggsched
{

namespace
{

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

bool is_weekend(Date d)
{
    const std::chrono::weekday wd{d};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

/// Complete days of `s`, keyed by day number, before `before` (exclusive).
std::map<std::int64_t, Eigen::VectorXd> complete_days(const PriceSeries& s, std::int64_t before_day)
{
    std::map<std::int64_t, Eigen::VectorXd> days;
    if (s.size() == 0)
        return days;
    const std::int64_t step = seconds_per_slot(s.resolution);
    const int per_day = slots_per_day(s.resolution);
    const std::int64_t t0 = s.timestamps.front();
    const std::int64_t first_day = floor_div(t0, kSecondsPerDay);
    const std::int64_t last_day = floor_div(s.timestamps.back(), kSecondsPerDay);
    for (std::int64_t d = first_day; d <= last_day && d < before_day; ++d)
    {
        const std::int64_t start = d * kSecondsPerDay;
        if (start < t0)
            continue;
        const std::int64_t idx = (start - t0) / step;
        if (idx + per_day > static_cast<std::int64_t>(s.size()))
            continue;
        days.emplace(d, s.values.segment(idx, per_day));
    }
    return days;
}

Eigen::VectorXd baseline_from_days(const std::map<std::int64_t, Eigen::VectorXd>& days, Date target,
                                   const ForecastConfig& config)
{
    if (static_cast<int>(days.size()) < config.min_history_days)
        throw std::runtime_error(fmt::format("seasonal forecast for {}: need at least {} complete days of history, have {}",
                                             format_date(target), config.min_history_days, days.size()));
    const bool weekend = is_weekend(target);
    Eigen::VectorXd sum;
    int used = 0;
    for (auto it = days.rbegin(); it != days.rend() && used < config.recent_days; ++it)
    {
        const Date d{std::chrono::days{it->first}};
        if (is_weekend(d) != weekend)
            continue;
        if (used == 0)
            sum = it->second;
        else
            sum += it->second;
        ++used;
    }
    if (used == 0)
        throw std::runtime_error(fmt::format("seasonal forecast for {}: no history day of the same weekday class",
                                             format_date(target)));
    return sum / static_cast<double>(used);
}

} // namespace

std::vector<std::string> validate_series(const PriceSeries& s, bool day_ahead)
{
    if (static_cast<Eigen::Index>(s.timestamps.size()) != s.values.size())
        throw std::runtime_error("price series: timestamp and value counts differ");
    const std::int64_t step = seconds_per_slot(s.resolution);
    for (std::size_t i = 1; i < s.size(); ++i)
    {
        const std::int64_t dt = s.timestamps[i] - s.timestamps[i - 1];
        if (dt == 0)
            throw std::runtime_error("price series: duplicate timestamp " + format_timestamp(s.timestamps[i]));
        if (dt < 0)
            throw std::runtime_error("price series: timestamps not increasing at " + format_timestamp(s.timestamps[i]));
        if (dt != step)
            throw std::runtime_error("price series: gap or misaligned step before " + format_timestamp(s.timestamps[i]));
    }
    std::vector<std::string> warnings;
    for (std::size_t i = 0; i < s.size(); ++i)
    {
        const double v = s.values[static_cast<Eigen::Index>(i)];
        if (!std::isfinite(v))
            throw std::runtime_error("price series: non-finite price at " + format_timestamp(s.timestamps[i]));
        if (day_ahead && (v < -200.0 || v > 2000.0))
            warnings.push_back(fmt::format("day-ahead price {} $/MWh at {} is outside [-200, 2000]", v,
                                           format_timestamp(s.timestamps[i])));
    }
    return warnings;
}

std::int64_t parse_timestamp(std::string_view text)
{
    const std::string t(text);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0, consumed = 0;
    char sep = 0;
    const int n = std::sscanf(t.c_str(), "%d-%d-%d%c%d:%d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
    if (n < 6 || (sep != 'T' && sep != ' '))
        throw std::runtime_error("bad timestamp '" + t + "', expected YYYY-MM-DDTHH:MM[:SS][Z|+HH:MM]");
    std::size_t pos = static_cast<std::size_t>(consumed);
    if (pos < t.size() && t[pos] == ':')
    {
        int c2 = 0;
        if (std::sscanf(t.c_str() + pos, ":%d%n", &sec, &c2) != 1)
            throw std::runtime_error("bad timestamp seconds in '" + t + "'");
        pos += static_cast<std::size_t>(c2);
    }
    std::int64_t offset = 0;
    if (pos < t.size())
    {
        if (t[pos] == 'Z' && pos + 1 == t.size())
        {
        }
        else if ((t[pos] == '+' || t[pos] == '-') && t.size() - pos == 6 && t[pos + 3] == ':')
        {
            int oh = 0, om = 0;
            if (std::sscanf(t.c_str() + pos + 1, "%d:%d", &oh, &om) != 2)
                throw std::runtime_error("bad timestamp offset in '" + t + "'");
            offset = (t[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
        }
        else
            throw std::runtime_error("trailing characters in timestamp '" + t + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59)
        throw std::runtime_error("invalid date/time in timestamp '" + t + "'");
    return to_unix(Date{ymd}) + h * 3600 + mi * 60 + sec - offset;
}

std::string format_timestamp(std::int64_t unix_seconds)
{
    const std::int64_t day = floor_div(unix_seconds, kSecondsPerDay);
    const std::int64_t rem = unix_seconds - day * kSecondsPerDay;
    return fmt::format("{}T{:02}:{:02}:{:02}Z", format_date(Date{std::chrono::days{day}}), rem / 3600, (rem / 60) % 60,
                       rem % 60);
}

Date parse_date(std::string_view text)
{
    const std::string t(text);
    int y = 0, m = 0, d = 0, consumed = 0;
    if (std::sscanf(t.c_str(), "%d-%d-%d%n", &y, &m, &d, &consumed) != 3 || static_cast<std::size_t>(consumed) != t.size())
        throw std::runtime_error("bad date '" + t + "', expected YYYY-MM-DD");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        throw std::runtime_error("invalid date '" + t + "'");
    return Date{ymd};
}

std::string format_date(Date d)
{
    const std::chrono::year_month_day ymd{d};
    return fmt::format("{:04}-{:02}-{:02}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()));
}

std::int64_t to_unix(Date d) { return static_cast<std::int64_t>(d.time_since_epoch().count()) * kSecondsPerDay; }

PriceSeries make_series(Date start, Resolution r, const Eigen::VectorXd& values)
{
    PriceSeries s;
    s.resolution = r;
    s.values = values;
    s.timestamps.resize(static_cast<std::size_t>(values.size()));
    const std::int64_t t0 = to_unix(start);
    for (std::size_t i = 0; i < s.timestamps.size(); ++i)
        s.timestamps[i] = t0 + static_cast<std::int64_t>(i) * seconds_per_slot(r);
    return s;
}

PriceSeries read_price_csv(const std::filesystem::path& path, Resolution r, bool day_ahead,
                           std::vector<std::string>* warnings)
{
    const csv::Table table = csv::read(path);
    const std::size_t ct = table.column("timestamp");
    const std::size_t cp = table.column("price");
    PriceSeries s;
    s.resolution = r;
    s.values.resize(static_cast<Eigen::Index>(table.rows.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i)
    {
        const std::string ctx = fmt::format("{} row {}", path.string(), i + 2);
        try
        {
            s.timestamps.push_back(parse_timestamp(table.rows[i][ct]));
        }
        catch (const std::runtime_error& e)
        {
            throw std::runtime_error(ctx + ": " + e.what());
        }
        s.values[static_cast<Eigen::Index>(i)] = csv::to_double(table.rows[i][cp], ctx);
    }
    try
    {
        auto w = validate_series(s, day_ahead);
        if (warnings)
            warnings->insert(warnings->end(), w.begin(), w.end());
    }
    catch (const std::runtime_error& e)
    {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return s;
}

void write_price_csv(const std::filesystem::path& path, const PriceSeries& s)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    csv::write_row(out, {"timestamp", "price"});
    for (std::size_t i = 0; i < s.size(); ++i)
        csv::write_row(out, {format_timestamp(s.timestamps[i]), csv::format(s.values[static_cast<Eigen::Index>(i)])});
}

Eigen::VectorXd day_values(const PriceSeries& s, Date d)
{
    const std::int64_t day = d.time_since_epoch().count();
    auto days = complete_days(s, day + 1);
    auto it = days.find(day);
    if (it == days.end())
        throw std::runtime_error("price series does not cover " + format_date(d) + " completely");
    return it->second;
}

Eigen::VectorXd seasonal_baseline_forecast(const PriceSeries& history, Date target, const ForecastConfig& config)
{
    if (config.recent_days < 1)
        throw std::invalid_argument("seasonal forecast: recent_days must be positive");
    return baseline_from_days(complete_days(history, target.time_since_epoch().count()), target, config);
}

Eigen::MatrixXd estimate_covariance(std::span<const ForecastErrorSample> errors, Exec exec)
{
    if (errors.size() < 2)
        throw std::runtime_error(fmt::format("covariance estimate needs at least 2 error samples, have {}", errors.size()));
    const Eigen::Index d = errors.front().error.size();
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(errors.size());
    for (const auto& e : errors)
    {
        if (e.error.size() != d)
            throw std::runtime_error(fmt::format("error sample {} has length {}, expected {}", e.day_id, e.error.size(), d));
        if (!e.error.allFinite())
            throw std::runtime_error(fmt::format("error sample {} is not finite", e.day_id));
        samples.push_back(e.error);
    }
    return condition_psd(kernels::second_moment(exec, samples));
}

Eigen::MatrixXd condition_psd(const Eigen::MatrixXd& c)
{
    if (c.rows() != c.cols() || c.rows() == 0)
        throw std::invalid_argument("condition_psd: need a non-empty square matrix");
    const Eigen::MatrixXd sym = 0.5 * (c + c.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("condition_psd: eigendecomposition failed");
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd out = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    out = 0.5 * (out + out.transpose()).eval();
    const double ridge = 1e-8 * lam.sum() / static_cast<double>(c.rows());
    out.diagonal().array() += ridge;
    return out;
}

void check_covariance(const Eigen::MatrixXd& c, std::string_view what)
{
    const std::string name(what);
    if (c.rows() != c.cols())
        throw std::invalid_argument(name + ": covariance is not square");
    if (!c.allFinite())
        throw std::invalid_argument(name + ": covariance has non-finite entries");
    if (c.size() == 0)
        return;
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument(name + ": covariance is not symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (lo < -1e-9 * std::max(1.0, hi))
        throw std::invalid_argument(fmt::format("{}: covariance is not PSD (smallest eigenvalue {})", name, lo));
}

Eigen::MatrixXd rt_window_covariance(const Eigen::MatrixXd& rt_template, Eigen::Index length)
{
    if (length < 1 || length > rt_template.rows())
        throw std::out_of_range(fmt::format("real-time window length {} outside template size {}", length,
                                            rt_template.rows()));
    return rt_template.topLeftCorner(length, length);
}

double rt_da_ratio(const PriceSeries& rt, const PriceSeries& da)
{
    if (rt.resolution != Resolution::quarter_hourly || da.resolution != Resolution::hourly)
        throw std::invalid_argument("rt_da_ratio: expects quarter-hourly real-time and hourly day-ahead series");
    std::map<std::int64_t, std::pair<double, int>> hourly;
    for (std::size_t i = 0; i < rt.size(); ++i)
    {
        auto& [sum, count] = hourly[floor_div(rt.timestamps[i], 3600)];
        sum += rt.values[static_cast<Eigen::Index>(i)];
        ++count;
    }
    double rt_sum = 0.0, da_sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < da.size(); ++i)
    {
        auto it = hourly.find(floor_div(da.timestamps[i], 3600));
        if (it == hourly.end() || it->second.second != kQuartersPerHour)
            continue;
        rt_sum += it->second.first / kQuartersPerHour;
        da_sum += da.values[static_cast<Eigen::Index>(i)];
        ++n;
    }
    if (n == 0)
        throw std::runtime_error("rt_da_ratio: series share no complete hour");
    if (da_sum == 0.0)
        throw std::runtime_error("rt_da_ratio: mean day-ahead price is zero on the overlap");
    return rt_sum / da_sum;
}

void PriceModel::validate(const TimeGrid& grid) const
{
    const Eigen::Index T = grid.hours(), R = grid.rt_length(), W = kQuartersPerHour * grid.mpc_horizon_hours();
    auto check = [](bool ok, const std::string& what) {
        if (!ok)
            throw std::runtime_error("price model: " + what);
    };
    check(da_forecast.size() == T, fmt::format("day-ahead forecast has {} entries, expected {}", da_forecast.size(), T));
    check(rt_forecast.size() == R, fmt::format("real-time forecast has {} entries, expected {}", rt_forecast.size(), R));
    check(da_cov.rows() == T && da_cov.cols() == T, fmt::format("day-ahead covariance must be {}x{}", T, T));
    check(rt_cov_template.rows() >= W && rt_cov_template.cols() == rt_cov_template.rows(),
          fmt::format("real-time covariance template must be square with at least {} rows", W));
    check(da_forecast.allFinite() && rt_forecast.allFinite(), "non-finite forecast entries");
    check_covariance(da_cov, "price model day-ahead");
    check_covariance(rt_cov_template, "price model real-time");
}

PriceModel build_price_model(const PriceSeries& da_history, const PriceSeries& rt_history, Date target,
                             const TimeGrid& grid, const ForecastConfig& config)
{
    if (grid.hours() != 24)
        throw std::invalid_argument("build_price_model: history-based models need a 24-hour day");
    if (da_history.resolution != Resolution::hourly || rt_history.resolution != Resolution::quarter_hourly)
        throw std::invalid_argument("build_price_model: day-ahead history must be hourly, real-time quarter-hourly");
    const std::int64_t target_day = target.time_since_epoch().count();
    const auto da_days = complete_days(da_history, target_day);
    const auto rt_days = complete_days(rt_history, target_day);

    PriceModel model;
    model.da_forecast = baseline_from_days(da_days, target, config);
    model.rt_forecast = baseline_from_days(rt_days, target, config);

    const Eigen::Index W = kQuartersPerHour * grid.mpc_horizon_hours();
    std::vector<ForecastErrorSample> da_errors, rt_errors;
    for (auto it = da_days.begin(); it != da_days.end(); ++it)
    {
        std::map<std::int64_t, Eigen::VectorXd> prior(da_days.begin(), it);
        if (static_cast<int>(prior.size()) < config.min_history_days)
            continue;
        const Date d{std::chrono::days{it->first}};
        try
        {
            da_errors.push_back({static_cast<int>(it->first), it->second - baseline_from_days(prior, d, config)});
        }
        catch (const std::runtime_error&)
        {
        }
    }
    for (auto it = rt_days.begin(); it != rt_days.end(); ++it)
    {
        std::map<std::int64_t, Eigen::VectorXd> prior(rt_days.begin(), it);
        if (static_cast<int>(prior.size()) < config.min_history_days)
            continue;
        const Date d{std::chrono::days{it->first}};
        Eigen::VectorXd err;
        try
        {
            err = it->second - baseline_from_days(prior, d, config);
        }
        catch (const std::runtime_error&)
        {
            continue;
        }
        for (Eigen::Index s = 0; s + W <= err.size(); s += kQuartersPerHour)
            rt_errors.push_back({static_cast<int>(it->first), err.segment(s, W)});
    }
    if (da_errors.size() < 2 || rt_errors.size() < 2)
        throw std::runtime_error(fmt::format("build_price_model: history before {} yields too few backtest days "
                                             "(need at least {} complete days)",
                                             format_date(target), config.min_history_days + 2));
    model.da_cov = estimate_covariance(da_errors);
    model.rt_cov_template = estimate_covariance(rt_errors);
    model.validate(grid);
    return model;
}

void write_price_model(const std::filesystem::path& dir, const PriceModel& model, Date target)
{
    std::filesystem::create_directories(dir);
    write_price_csv(dir / "p_da_hat.csv", make_series(target, Resolution::hourly, model.da_forecast));
    write_price_csv(dir / "p_rt_hat.csv", make_series(target, Resolution::quarter_hourly, model.rt_forecast));
    csv::write_matrix(dir / "c_da.csv", model.da_cov);
    csv::write_matrix(dir / "c_rt.csv", model.rt_cov_template);
}

PriceModel read_price_model(const std::filesystem::path& dir, const TimeGrid& grid)
{
    PriceModel model;
    model.da_forecast = read_price_csv(dir / "p_da_hat.csv", Resolution::hourly, true).values;
    model.rt_forecast = read_price_csv(dir / "p_rt_hat.csv", Resolution::quarter_hourly, false).values;
    model.da_cov = csv::read_matrix(dir / "c_da.csv");
    model.rt_cov_template = csv::read_matrix(dir / "c_rt.csv");
    model.validate(grid);
    return model;
}

} // namespace aggsched
