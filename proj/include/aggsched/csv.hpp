#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace aggsched::csv
{

/// A parsed CSV file: one header row, then data rows of equal width.
struct Table
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws std::runtime_error when absent.
    std::size_t column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::istream& in, const std::string& source_name);

double to_double(const std::string& field, const std::string& context);
long long to_int(const std::string& field, const std::string& context);

/// Shortest text that round-trips the double exactly.
std::string format(double value);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Dense matrix, row-major, with a header row of column indices.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

} // namespace aggsched::csv
