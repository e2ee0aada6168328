#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scmine/error.hpp"
#include "scmine/io.hpp"

namespace scmine {

struct SparseEntry {
  std::uint32_t col = 0;
  double value = 0.0;
};

// Row-major document x term matrix. Columns strictly increase within a row,
// values are finite, explicit zeros are never stored.
struct SparseMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::vector<SparseEntry>> rows;

  double row_norm(std::size_t r) const {
    double s = 0.0;
    for (const auto& e : rows[r]) s += e.value * e.value;
    return std::sqrt(s);
  }

  double dot_row(std::size_t r, const std::vector<double>& dense) const {
    double s = 0.0;
    for (const auto& e : rows[r]) s += e.value * dense[e.col];
    return s;
  }

  // dense += scale * row r
  void axpy_row(std::size_t r, double scale, std::vector<double>& dense) const {
    for (const auto& e : rows[r]) dense[e.col] += scale * e.value;
  }

  // Coordinate-format CSV export for debugging: row,col,weight.
  std::string to_coo_csv() const {
    std::string out = "row,col,weight\n";
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (const auto& e : rows[r])
        out += std::to_string(r) + "," + std::to_string(e.col) + "," + io::fmt_double(e.value) + "\n";
    return out;
  }
};

}  // namespace scmine
