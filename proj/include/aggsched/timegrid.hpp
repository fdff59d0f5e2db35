#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace aggsched
{

inline constexpr int kQuartersPerHour = 4;
inline constexpr double kRtStepHours = 0.25;
inline constexpr double kDaStepHours = 1.0;

/// Contiguous run of slots. `offset` is 0-based; first()/last() report the
/// 1-based inclusive indices used in schedules and CSV files.
struct SlotRange
{
    std::size_t offset = 0;
    std::size_t length = 0;

    std::size_t first() const { return offset + 1; }
    std::size_t last() const { return offset + length; }
    std::size_t end() const { return offset + length; }
    bool contains(std::size_t zero_based) const { return zero_based >= offset && zero_based < end(); }
    bool operator==(const SlotRange&) const = default;
};

/**
 * Dual-resolution day: T hourly day-ahead slots and 4T quarter-hourly
 * real-time slots. Every hour/quarter conversion in the library goes
 * through this class.
 */
class TimeGrid
{
public:
    TimeGrid(int hours, int mpc_horizon_hours);

    int hours() const { return hours_; }
    int rt_length() const { return kQuartersPerHour * hours_; }
    int mpc_horizon_hours() const { return horizon_; }
    double rt_step_hours() const { return kRtStepHours; }

    /// The four quarters of 1-based hour `hour`. Throws std::out_of_range.
    SlotRange hour_to_quarters(int hour) const;

    /// Lookahead window for the MPC step at `hour`, truncated at the end of
    /// the day. Always starts on an hour boundary.
    SlotRange mpc_window(int hour) const;

    /// Hold each hourly power value constant over its four quarters.
    Eigen::VectorXd upsample_hourly(const Eigen::VectorXd& hourly) const;

    /// Mean over each hour's four quarters (inverse of upsample_hourly on
    /// piecewise-constant input).
    Eigen::VectorXd hourly_mean(const Eigen::VectorXd& quarters) const;

private:
    void check_hour(int hour) const;

    int hours_;
    int horizon_;
};

} // namespace aggsched
