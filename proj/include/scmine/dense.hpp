#pragma once

#include <cstddef>
#include <vector>

#include "scmine/error.hpp"

namespace scmine {

// Row-major dense matrix. Small helper used by the embedding and clustering
// code; not a general linear-algebra library.
struct DenseMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : n_rows(r), n_cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * n_cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * n_cols + j]; }

  const double* row(std::size_t i) const { return data.data() + i * n_cols; }
  double* row(std::size_t i) { return data.data() + i * n_cols; }
};

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

// Symmetric n x n matrix of squared Euclidean distances between rows.
inline DenseMatrix pairwise_squared_distances(const DenseMatrix& X) {
  DenseMatrix D(X.n_rows, X.n_rows);
  for (std::size_t i = 0; i < X.n_rows; ++i)
    for (std::size_t j = i + 1; j < X.n_rows; ++j) {
      const double d2 = squared_distance(X.row(i), X.row(j), X.n_cols);
      D(i, j) = d2;
      D(j, i) = d2;
    }
  return D;
}

}  // namespace scmine
