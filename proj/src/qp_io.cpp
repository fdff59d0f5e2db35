#include <cstdlib>
#include <fstream>
#include <sstream>

#include "aggsched/csv.hpp"
#include "aggsched/qp.hpp"

namespace aggsched
{

namespace
{

void write_sparse(std::ostream& out, const char* name, const SparseMatrix& m)
{
    out << name << ' ' << m.nonZeros() << '\n';
    for (int c = 0; c < m.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m, c); it; ++it)
            out << it.row() << ' ' << it.col() << ' ' << csv::format(it.value()) << '\n';
}

void write_vector(std::ostream& out, const char* name, const Eigen::VectorXd& v)
{
    out << name << ' ' << v.size() << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out << csv::format(v[i]) << '\n';
}

std::string expect_section(std::istream& in, const char* name, long long& count)
{
    std::string tag;
    if (!(in >> tag >> count) || tag != name)
        throw std::runtime_error(std::string("qp file: expected section ") + name);
    return tag;
}

double read_value(std::istream& in)
{
    std::string tok;
    if (!(in >> tok))
        throw std::runtime_error("qp file: truncated");
    return csv::to_double(tok, "qp file");
}

SparseMatrix read_sparse(std::istream& in, const char* name, Eigen::Index rows, Eigen::Index cols)
{
    long long nnz = 0;
    expect_section(in, name, nnz);
    std::vector<Eigen::Triplet<double>> t;
    for (long long k = 0; k < nnz; ++k)
    {
        long long i = 0, j = 0;
        if (!(in >> i >> j))
            throw std::runtime_error("qp file: truncated triplets");
        t.emplace_back(static_cast<int>(i), static_cast<int>(j), read_value(in));
    }
    SparseMatrix m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

Eigen::VectorXd read_vector(std::istream& in, const char* name, Eigen::Index n)
{
    long long count = 0;
    expect_section(in, name, count);
    if (count != n)
        throw std::runtime_error(std::string("qp file: section ") + name + " has the wrong length");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = read_value(in);
    return v;
}

} // namespace

void write_qp(const std::filesystem::path& path, const QpProblem& p)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "qp " << p.num_variables() << ' ' << p.num_constraints() << '\n';
    write_sparse(out, "P", p.P);
    write_vector(out, "q", p.q);
    write_sparse(out, "A", p.A);
    write_vector(out, "l", p.l);
    write_vector(out, "u", p.u);
}

QpProblem read_qp(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::string tag;
    long long n = 0, m = 0;
    if (!(in >> tag >> n >> m) || tag != "qp")
        throw std::runtime_error(path.string() + ": not a qp file");
    QpProblem p;
    p.P = read_sparse(in, "P", n, n);
    p.q = read_vector(in, "q", n);
    p.A = read_sparse(in, "A", m, n);
    p.l = read_vector(in, "l", m);
    p.u = read_vector(in, "u", m);
    return p;
}

void dump_qp_if_requested(const QpProblem& problem, const std::string& name)
{
    const char* dir = std::getenv("AGGSCHED_DUMP_DIR");
    if (!dir || !*dir)
        return;
    std::filesystem::create_directories(dir);
    write_qp(std::filesystem::path(dir) / (name + ".qp"), problem);
}

} // namespace aggsched
