#include "aggsched/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aggsched::csv
{

namespace
{

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ','))
    {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

} // namespace

std::size_t Table::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
            return i;
    throw std::runtime_error("csv: missing column '" + std::string(name) + "'");
}

Table parse(std::istream& in, const std::string& source_name)
{
    Table t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto fields = split(line);
        if (t.header.empty())
        {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw std::runtime_error(source_name + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(t.header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty())
        throw std::runtime_error(source_name + ": empty CSV");
    return t;
}

Table read(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    return parse(in, path.string());
}

double to_double(const std::string& field, const std::string& context)
{
    double v = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        throw std::runtime_error(context + ": not a number: '" + field + "'");
    return v;
}

long long to_int(const std::string& field, const std::string& context)
{
    long long v = 0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        throw std::runtime_error(context + ": not an integer: '" + field + "'");
    return v;
}

std::string format(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{})
        throw std::runtime_error("csv: cannot format value");
    return {buf, ptr};
}

void write_row(std::ostream& out, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i)
    {
        if (i)
            out << ',';
        out << fields[i];
    }
    out << '\n';
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        row.push_back(std::to_string(j));
    write_row(out, row);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
    {
        row.clear();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(format(m(i, j)));
        write_row(out, row);
    }
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path)
{
    const Table t = read(path);
    const auto cols = static_cast<Eigen::Index>(t.header.size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), cols);
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), j) = to_double(t.rows[i][j], path.string());
    return m;
}

} // namespace aggsched::csv
