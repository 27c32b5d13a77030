#pragma once

#include <string>

#include "civa/types.hpp"

namespace civa {

/// Shared matrix formats. CSV: rows are channels, one sample per column.
/// Binary: 8-byte magic "IVAMAT01", u64 rows, u64 cols, then row-major
/// 64-bit little-endian floats.

Matrix load_matrix(const std::string& path);  // sniffs the binary magic, else CSV

void save_matrix_csv(const std::string& path, const Matrix& m);
void save_matrix_binary(const std::string& path, const Matrix& m);

/// Dispatch on extension: ".csv" writes text, anything else binary.
void save_matrix(const std::string& path, const Matrix& m);

}  // namespace civa
