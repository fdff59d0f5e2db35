#include "aggsched/qp_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace aggsched
{

RowRole row_role(ConstraintFamily f)
{
    switch (f)
    {
    case ConstraintFamily::power_balance: return RowRole::power_balance;
    case ConstraintFamily::grid_limit: return RowRole::grid_limit;
    case ConstraintFamily::ev_energy: return RowRole::ev_energy;
    case ConstraintFamily::ev_power: return RowRole::ev_power;
    }
    return RowRole::aggregation;
}

Eigen::VectorXd AssembledQp::expand(const Eigen::VectorXd& x) const
{
    Eigen::VectorXd full(static_cast<Eigen::Index>(var_keys.size()));
    for (std::size_t v = 0; v < var_keys.size(); ++v)
        full[static_cast<Eigen::Index>(v)] = var_to_col[v] >= 0 ? x[var_to_col[v]] : fixed_value[v];
    return full;
}

int QpBuilder::add_variable(VarKey key)
{
    auto [it, inserted] = index_.emplace(key, num_variables());
    if (!inserted)
        throw std::logic_error(fmt::format("duplicate QP variable (role {}, prosumer {}, slot {})",
                                           static_cast<int>(key.role), key.prosumer, key.slot));
    keys_.push_back(key);
    q_.push_back(0.0);
    return it->second;
}

int QpBuilder::variable(VarKey key) const
{
    auto it = index_.find(key);
    if (it == index_.end())
        throw std::out_of_range(fmt::format("unknown QP variable (role {}, prosumer {}, slot {})",
                                            static_cast<int>(key.role), key.prosumer, key.slot));
    return it->second;
}

void QpBuilder::fix_variable(int var, double value)
{
    auto [it, inserted] = fixed_.emplace(var, value);
    if (!inserted && it->second != value)
        throw QpError(fmt::format("variable {} fixed to both {} and {}", var, it->second, value));
}

void QpBuilder::add_linear(int var, double coef) { q_.at(static_cast<std::size_t>(var)) += coef; }

void QpBuilder::add_quadratic(int i, int j, double value)
{
    p_.emplace_back(i, j, value);
    if (i != j)
        p_.emplace_back(j, i, value);
}

void QpBuilder::add_row(RowKey key, std::vector<std::pair<int, double>> terms, double lower, double upper)
{
    rows_.push_back({key, std::move(terms), lower, upper});
}

AssembledQp QpBuilder::build() const
{
    AssembledQp out;
    const auto nv = keys_.size();
    out.var_keys = keys_;
    out.var_to_col.assign(nv, -1);
    out.fixed_value.assign(nv, 0.0);
    int cols = 0;
    for (std::size_t v = 0; v < nv; ++v)
    {
        auto it = fixed_.find(static_cast<int>(v));
        if (it == fixed_.end())
        {
            out.var_to_col[v] = cols++;
            out.col_keys.push_back(keys_[v]);
        }
        else
            out.fixed_value[v] = it->second;
    }

    Eigen::VectorXd q = Eigen::VectorXd::Zero(cols);
    for (std::size_t v = 0; v < nv; ++v)
    {
        if (out.var_to_col[v] >= 0)
            q[out.var_to_col[v]] += q_[v];
        else
            out.constant += q_[v] * out.fixed_value[v];
    }
    std::vector<Eigen::Triplet<double>> p;
    p.reserve(p_.size());
    for (const auto& t : p_)
    {
        const int ci = out.var_to_col[static_cast<std::size_t>(t.row())];
        const int cj = out.var_to_col[static_cast<std::size_t>(t.col())];
        if (ci >= 0 && cj >= 0)
            p.emplace_back(ci, cj, t.value());
        else if (ci >= 0)
            q[ci] += t.value() * out.fixed_value[static_cast<std::size_t>(t.col())];
        else if (cj < 0)
            out.constant += 0.5 * t.value() * out.fixed_value[static_cast<std::size_t>(t.row())] *
                            out.fixed_value[static_cast<std::size_t>(t.col())];
    }

    // Rows that coincide once fixed variables are substituted (cumulative
    // energy after departure, for instance) are merged by intersecting
    // their bounds; duplicates make the active-set KKT system singular.
    std::vector<Eigen::Triplet<double>> a;
    std::vector<double> lo, hi;
    std::map<std::vector<std::pair<int, double>>, std::size_t> seen;
    for (const Row& r : rows_)
    {
        double shift = 0.0;
        std::vector<std::pair<int, double>> free_terms;
        for (const auto& [var, coef] : r.terms)
        {
            const int c = out.var_to_col[static_cast<std::size_t>(var)];
            if (c >= 0)
                free_terms.emplace_back(c, coef);
            else
                shift += coef * out.fixed_value[static_cast<std::size_t>(var)];
        }
        const double lower = r.lower - shift;
        const double upper = r.upper - shift;
        if (free_terms.empty())
        {
            const double tol = 1e-8 * std::max({1.0, std::abs(shift), std::isfinite(r.lower) ? std::abs(r.lower) : 0.0,
                                                std::isfinite(r.upper) ? std::abs(r.upper) : 0.0});
            if (shift < r.lower - tol || shift > r.upper + tol)
                throw QpError(fmt::format("constant constraint (role {}, prosumer {}, slot {}) violated: {} not in [{}, {}]",
                                          static_cast<int>(r.key.role), r.key.prosumer, r.key.slot, shift, r.lower,
                                          r.upper));
            continue;
        }
        std::sort(free_terms.begin(), free_terms.end());
        std::vector<std::pair<int, double>> merged;
        for (const auto& [c, coef] : free_terms)
        {
            if (!merged.empty() && merged.back().first == c)
                merged.back().second += coef;
            else
                merged.emplace_back(c, coef);
        }
        std::erase_if(merged, [](const auto& t) { return t.second == 0.0; });

        if (auto it = seen.find(merged); it != seen.end())
        {
            double& l0 = lo[it->second];
            double& u0 = hi[it->second];
            l0 = std::max(l0, lower);
            u0 = std::min(u0, upper);
            if (l0 > u0)
            {
                const double tol = 1e-9 * std::max({1.0, std::abs(l0), std::abs(u0)});
                if (l0 - u0 > tol)
                    throw QpError(fmt::format("constraint (role {}, prosumer {}, slot {}) contradicts an identical row: "
                                              "[{}, {}] vs [{}, {}]",
                                              static_cast<int>(r.key.role), r.key.prosumer, r.key.slot, lower, upper,
                                              l0, u0));
                l0 = u0 = 0.5 * (l0 + u0);
            }
            continue;
        }
        const auto row = static_cast<int>(lo.size());
        for (const auto& [c, coef] : merged)
            a.emplace_back(row, c, coef);
        seen.emplace(std::move(merged), lo.size());
        lo.push_back(lower);
        hi.push_back(upper);
        out.row_keys.push_back(r.key);
    }

    const auto m = static_cast<Eigen::Index>(lo.size());
    out.qp.P.resize(cols, cols);
    out.qp.P.setFromTriplets(p.begin(), p.end());
    out.qp.q = q;
    out.qp.A.resize(m, cols);
    out.qp.A.setFromTriplets(a.begin(), a.end());
    out.qp.l = Eigen::Map<const Eigen::VectorXd>(lo.data(), m);
    out.qp.u = Eigen::Map<const Eigen::VectorXd>(hi.data(), m);
    return out;
}

void append_local_constraints(QpBuilder& b, const LocalConstraintSet& set, int prosumer, std::span<const int> ev_vars,
                              std::span<const int> grid_vars)
{
    for (const ConstraintRow& row : set.rows)
    {
        std::vector<std::pair<int, double>> terms;
        terms.reserve(row.terms.size());
        for (const Term& t : row.terms)
        {
            const auto k = static_cast<std::size_t>(t.slot);
            terms.emplace_back(t.kind == VarKind::ev ? ev_vars[k] : grid_vars[k], t.coef);
        }
        const RowKey key{row_role(row.family), prosumer, static_cast<int>(set.window.offset + row.slot)};
        if (row.family == ConstraintFamily::ev_power && terms.size() == 1 && row.lower == row.upper &&
            terms[0].second != 0.0)
            b.fix_variable(terms[0].first, row.lower / terms[0].second);
        b.add_row(key, std::move(terms), row.lower, row.upper);
    }
}

} // namespace aggsched
