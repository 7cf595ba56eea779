#include "slk/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>
#include <vector>

namespace slk {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_field(std::string_view field, std::size_t line_no) {
    field = trim(field);
    double value = 0.0;
    const auto *begin = field.data();
    const auto *end = field.data() + field.size();
    if (!field.empty() && *begin == '+')
        ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (field.empty() || ec != std::errc() || ptr != end)
        throw DataError("csv line " + std::to_string(line_no) + ": cannot parse '" +
                        std::string(field) + "'");
    return value;
}

} // namespace

Matrix parse_matrix_csv(std::istream &in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty())
            continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            const auto comma = view.find(',', start);
            row.push_back(parse_field(view.substr(start, comma - start), line_no));
            if (comma == std::string_view::npos)
                break;
            start = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(rows.front().size()) + " columns, got " +
                            std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw DataError("csv: no data");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (!m.allFinite())
        throw DataError("csv: non-finite value");
    return m;
}

Matrix read_matrix_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path);
    try {
        return parse_matrix_csv(in);
    } catch (const DataError &e) {
        throw DataError(path + ": " + e.what());
    }
}

Vector read_vector_csv(const std::string &path) {
    Matrix m = read_matrix_csv(path);
    if (m.cols() != 1)
        throw DataError(path + ": expected a single-column vector file");
    return m.col(0);
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void write_matrix_csv(std::ostream &out, const Matrix &m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0)
                out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

void write_matrix_csv(const std::string &path, const Matrix &m) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path);
    write_matrix_csv(out, m);
}

void write_vector_csv(const std::string &path, const Vector &v) {
    write_matrix_csv(path, Matrix(v));
}

} // namespace slk
