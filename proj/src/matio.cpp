#include "civa/matio.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace civa {

namespace {

constexpr char kMagic[8] = {'I', 'V', 'A', 'M', 'A', 'T', '0', '1'};

Matrix load_binary(std::ifstream& in, const std::string& path) {
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in) throw IoError("matrix load: truncated header in " + path);
  if (rows == 0 || cols == 0 || rows > (1ull << 32) || cols > (1ull << 32))
    throw IoError("matrix load: implausible dimensions in " + path);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<double> row(cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(cols * 8));
    if (!in) throw IoError("matrix load: truncated data in " + path);
    for (std::uint64_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return m;
}

Matrix load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("matrix load: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("matrix load: bad number '" + cell + "' in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw IoError("matrix load: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows[0].empty()) throw IoError("matrix load: empty file " + path);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

}  // namespace

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("matrix load: cannot open " + path);
  char head[8] = {};
  in.read(head, 8);
  if (in.gcount() == 8 && std::memcmp(head, kMagic, 8) == 0) return load_binary(in, path);
  in.close();
  return load_csv(path);
}

void save_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("matrix save: cannot open " + path);
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf;
      if (j + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
  if (!out) throw IoError("matrix save: write failed for " + path);
}

void save_matrix_binary(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("matrix save: cannot open " + path);
  out.write(kMagic, 8);
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  std::vector<double> row(static_cast<size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<size_t>(j)] = m(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * 8));
  }
  if (!out) throw IoError("matrix save: write failed for " + path);
}

void save_matrix(const std::string& path, const Matrix& m) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
    save_matrix_csv(path, m);
  else
    save_matrix_binary(path, m);
}

}  // namespace civa
