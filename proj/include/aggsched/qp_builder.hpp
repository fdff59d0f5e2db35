#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aggsched/prosumer.hpp"
#include "aggsched/qp.hpp"

namespace aggsched
{

enum class VarRole : std::uint8_t
{
    ev,
    grid,
    aggregate_grid,
    epigraph
};

/// Identity of a decision variable; `slot` is global (0-based) so keys
/// line up across receding-horizon windows.
struct VarKey
{
    VarRole role = VarRole::ev;
    int prosumer = -1;
    int slot = 0;

    auto operator<=>(const VarKey&) const = default;
};

enum class RowRole : std::uint8_t
{
    power_balance,
    grid_limit,
    ev_energy,
    ev_power,
    aggregation,
    epigraph
};

struct RowKey
{
    RowRole role = RowRole::aggregation;
    int prosumer = -1;
    int slot = 0;

    auto operator<=>(const RowKey&) const = default;
};

RowRole row_role(ConstraintFamily f);

/// Result of QpBuilder::build(). Fixed variables are substituted out; the
/// QP columns are the free variables in insertion order.
struct AssembledQp
{
    QpProblem qp;
    std::vector<VarKey> var_keys;    // every variable, by builder index
    std::vector<int> var_to_col;     // -1 for fixed variables
    std::vector<double> fixed_value; // meaningful where var_to_col == -1
    std::vector<VarKey> col_keys;
    std::vector<RowKey> row_keys;
    double constant = 0.0;           // objective contribution of the fixed variables

    /// Values of every variable given the free-column solution.
    Eigen::VectorXd expand(const Eigen::VectorXd& x) const;
    double objective(const Eigen::VectorXd& x) const { return qp.objective(x) + constant; }
};

class QpBuilder
{
public:
    int add_variable(VarKey key);
    int variable(VarKey key) const;
    bool has_variable(VarKey key) const { return index_.contains(key); }
    int num_variables() const { return static_cast<int>(keys_.size()); }

    void fix_variable(int var, double value);
    bool is_fixed(int var) const { return fixed_.contains(var); }

    void add_linear(int var, double coef);
    /// Adds `value` to P(i, j) and P(j, i); for i == j adds it once.
    void add_quadratic(int i, int j, double value);

    void add_row(RowKey key, std::vector<std::pair<int, double>> terms, double lower, double upper);

    /**
     * Rows whose terms all refer to fixed variables are checked and
     * dropped; a violated constant row throws QpError.
     */
    AssembledQp build() const;

private:
    struct Row
    {
        RowKey key;
        std::vector<std::pair<int, double>> terms;
        double lower, upper;
    };

    std::vector<VarKey> keys_;
    std::map<VarKey, int> index_;
    std::map<int, double> fixed_;
    std::vector<double> q_;
    std::vector<Eigen::Triplet<double>> p_;
    std::vector<Row> rows_;
};

/**
 * Append one prosumer's local constraints. Window slot k maps to
 * ev_vars[k] / grid_vars[k]. An EV power row with equal bounds (unplugged
 * slot) fixes its variable exactly; the row is then checked as a constant.
 */
void append_local_constraints(QpBuilder& b, const LocalConstraintSet& set, int prosumer, std::span<const int> ev_vars,
                              std::span<const int> grid_vars);

} // namespace aggsched
