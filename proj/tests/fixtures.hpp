#pragma once

#include "aggsched/prosumer.hpp"
#include "aggsched/timegrid.hpp"

namespace aggsched::test
{

/// Flat-profile prosumer whose EV may draw [0, ev_hi] kW all day and must
/// have received `need_kwh` by the last slot.
inline Prosumer flat_prosumer(const TimeGrid& grid, int id, double load, double pv, double ev_hi, double need_kwh)
{
    const Eigen::Index T = grid.hours(), R = grid.rt_length();
    Prosumer p;
    p.id = id;
    p.load_da = Eigen::VectorXd::Constant(T, load);
    p.pv_da = Eigen::VectorXd::Constant(T, pv);
    p.load_rt = grid.upsample_hourly(p.load_da);
    p.pv_rt = grid.upsample_hourly(p.pv_da);
    p.ev_power_lo_rt = Eigen::VectorXd::Zero(R);
    p.ev_power_hi_rt = Eigen::VectorXd::Constant(R, ev_hi);
    p.ev_cum_lo_rt = Eigen::VectorXd::Zero(R);
    p.ev_cum_lo_rt[R - 1] = need_kwh;
    p.ev_cum_hi_rt = Eigen::VectorXd::Constant(R, 1e3);
    derive_day_ahead_bounds(p, grid);
    return p;
}

} // namespace aggsched::test
