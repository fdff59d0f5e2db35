#include "aggsched/timegrid.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace aggsched
{

TimeGrid::TimeGrid(int hours, int mpc_horizon_hours) : hours_(hours), horizon_(mpc_horizon_hours)
{
    if (hours < 1)
        throw std::invalid_argument("TimeGrid: horizon must be at least one hour");
    if (mpc_horizon_hours < 1 || mpc_horizon_hours > hours)
        throw std::invalid_argument("TimeGrid: MPC horizon must lie in [1, T], got " +
                                    std::to_string(mpc_horizon_hours));
}

void TimeGrid::check_hour(int hour) const
{
    if (hour < 1 || hour > hours_)
        throw std::out_of_range("hour " + std::to_string(hour) + " outside [1, " + std::to_string(hours_) + "]");
}

SlotRange TimeGrid::hour_to_quarters(int hour) const
{
    check_hour(hour);
    return {static_cast<std::size_t>(kQuartersPerHour * (hour - 1)), kQuartersPerHour};
}

SlotRange TimeGrid::mpc_window(int hour) const
{
    check_hour(hour);
    const int start = kQuartersPerHour * (hour - 1);
    const int length = std::min(kQuartersPerHour * horizon_, rt_length() - start);
    return {static_cast<std::size_t>(start), static_cast<std::size_t>(length)};
}

Eigen::VectorXd TimeGrid::upsample_hourly(const Eigen::VectorXd& hourly) const
{
    if (hourly.size() != hours_)
        throw std::invalid_argument("upsample_hourly: expected length " + std::to_string(hours_) + ", got " +
                                    std::to_string(hourly.size()));
    Eigen::VectorXd out(rt_length());
    for (int h = 0; h < hours_; ++h)
        out.segment(kQuartersPerHour * h, kQuartersPerHour).setConstant(hourly[h]);
    return out;
}

Eigen::VectorXd TimeGrid::hourly_mean(const Eigen::VectorXd& quarters) const
{
    if (quarters.size() != rt_length())
        throw std::invalid_argument("hourly_mean: expected length " + std::to_string(rt_length()));
    Eigen::VectorXd out(hours_);
    for (int h = 0; h < hours_; ++h)
        out[h] = quarters.segment(kQuartersPerHour * h, kQuartersPerHour).mean();
    return out;
}

} // namespace aggsched
