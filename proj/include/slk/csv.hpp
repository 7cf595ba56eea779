#pragma once

#include "slk/core.hpp"

#include <iosfwd>
#include <string>

namespace slk {

// Headerless CSV: one matrix row per line, comma separated decimal floats.
// Vectors are single-column files. Writers emit 17 significant digits so
// values round-trip exactly.

Matrix parse_matrix_csv(std::istream &in);
Matrix read_matrix_csv(const std::string &path);
Vector read_vector_csv(const std::string &path);

void write_matrix_csv(std::ostream &out, const Matrix &m);
void write_matrix_csv(const std::string &path, const Matrix &m);
void write_vector_csv(const std::string &path, const Vector &v);

/// Formats a double with 17 significant digits.
std::string format_double(double value);

} // namespace slk
