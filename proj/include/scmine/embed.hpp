#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "scmine/dense.hpp"
#include "scmine/error.hpp"
#include "scmine/rng.hpp"
#include "scmine/sparse.hpp"

// Dimensionality reduction: randomized truncated SVD (the low-dim embedding
// that feeds clustering) and exact t-SNE for 2-D visualization.

namespace scmine::embed {

struct SvdResult {
  DenseMatrix U;            // n x rank, orthonormal columns
  std::vector<double> S;    // singular values, descending
  DenseMatrix V;            // d x rank, orthonormal columns
  std::string warning;      // non-empty when fewer than the requested columns survive
};

namespace detail {

// Modified Gram-Schmidt on the columns of A, run twice for stability.
// Columns that collapse to (numerical) zero are zeroed out.
inline void orthonormalize(DenseMatrix& A) {
  const std::size_t n = A.n_rows, l = A.n_cols;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < l; ++j) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += A(i, k) * A(i, j);
        for (std::size_t i = 0; i < n; ++i) A(i, j) -= dot * A(i, k);
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) norm += A(i, j) * A(i, j);
      norm = std::sqrt(norm);
      if (norm > 1e-300) {
        for (std::size_t i = 0; i < n; ++i) A(i, j) /= norm;
      } else {
        for (std::size_t i = 0; i < n; ++i) A(i, j) = 0.0;
      }
    }
  }
}

// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
// Returns eigenvalues (descending) and the matching eigenvector columns.
inline std::pair<std::vector<double>, DenseMatrix> jacobi_eigen(DenseMatrix A) {
  const std::size_t l = A.n_rows;
  DenseMatrix W(l, l);
  for (std::size_t i = 0; i < l; ++i) W(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < l; ++p)
      for (std::size_t q = p + 1; q < l; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-28) break;
    for (std::size_t p = 0; p < l; ++p) {
      for (std::size_t q = p + 1; q < l; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < l; ++i) {
          const double aip = A(i, p), aiq = A(i, q);
          A(i, p) = c * aip - s * aiq;
          A(i, q) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < l; ++i) {
          const double api = A(p, i), aqi = A(q, i);
          A(p, i) = c * api - s * aqi;
          A(q, i) = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < l; ++i) {
          const double wip = W(i, p), wiq = W(i, q);
          W(i, p) = c * wip - s * wiq;
          W(i, q) = s * wip + c * wiq;
        }
      }
    }
  }

  std::vector<std::size_t> order(l);
  for (std::size_t i = 0; i < l; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return A(a, a) > A(b, b); });
  std::vector<double> eigenvalues(l);
  DenseMatrix Wsorted(l, l);
  for (std::size_t j = 0; j < l; ++j) {
    eigenvalues[j] = A(order[j], order[j]);
    for (std::size_t i = 0; i < l; ++i) Wsorted(i, j) = W(i, order[j]);
  }
  return {std::move(eigenvalues), std::move(Wsorted)};
}

// Y = X * Omega, X sparse n x d, Omega dense d x l.
inline DenseMatrix sparse_times_dense(const SparseMatrix& X, const DenseMatrix& Omega) {
  DenseMatrix Y(X.n_rows, Omega.n_cols);
  for (std::size_t i = 0; i < X.n_rows; ++i)
    for (const auto& e : X.rows[i]) {
      const double v = e.value;
      const double* orow = Omega.row(e.col);
      double* yrow = Y.row(i);
      for (std::size_t c = 0; c < Omega.n_cols; ++c) yrow[c] += v * orow[c];
    }
  return Y;
}

// Z = X^T * Q, X sparse n x d, Q dense n x l.
inline DenseMatrix sparse_transpose_times_dense(const SparseMatrix& X, const DenseMatrix& Q) {
  DenseMatrix Z(X.n_cols, Q.n_cols);
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    const double* qrow = Q.row(i);
    for (const auto& e : X.rows[i]) {
      double* zrow = Z.row(e.col);
      for (std::size_t c = 0; c < Q.n_cols; ++c) zrow[c] += e.value * qrow[c];
    }
  }
  return Z;
}

}  // namespace detail

// Randomized subspace iteration: oversampling 10, four power iterations,
// seeded Gaussian test matrix, re-orthonormalization between passes, then
// Rayleigh-Ritz on the small Gram matrix. Components whose singular value
// falls below 1e-12 of the largest are dropped with a warning, so fewer than
// `rank` columns come back on rank-deficient input.
inline SvdResult truncated_svd(const SparseMatrix& X, std::size_t rank, std::uint64_t seed) {
  const std::size_t n = X.n_rows, d = X.n_cols;
  if (n == 0 || d == 0) throw Error("truncated_svd: empty matrix");
  if (rank < 1 || rank > std::min(n, d))
    throw Error("truncated_svd: rank must be in [1, min(n_rows, n_cols)]");
  const std::size_t l = std::min(rank + 10, std::min(n, d));

  rng::Gaussian gauss(seed);
  DenseMatrix Omega(d, l);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < l; ++j) Omega(i, j) = gauss.next();

  DenseMatrix Q = detail::sparse_times_dense(X, Omega);
  detail::orthonormalize(Q);
  for (int it = 0; it < 4; ++it) {
    DenseMatrix Z = detail::sparse_transpose_times_dense(X, Q);
    detail::orthonormalize(Z);
    Q = detail::sparse_times_dense(X, Z);
    detail::orthonormalize(Q);
  }

  // Bt = X^T Q (d x l); Gram = Bt^T Bt = Q^T X X^T Q.
  DenseMatrix Bt = detail::sparse_transpose_times_dense(X, Q);
  DenseMatrix G(l, l);
  for (std::size_t a = 0; a < l; ++a)
    for (std::size_t b = a; b < l; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += Bt(j, a) * Bt(j, b);
      G(a, b) = s;
      G(b, a) = s;
    }

  auto [eigenvalues, W] = detail::jacobi_eigen(std::move(G));

  SvdResult out;
  std::vector<double> all_s(l);
  for (std::size_t j = 0; j < l; ++j) all_s[j] = std::sqrt(std::max(0.0, eigenvalues[j]));
  const double drop_below = all_s.empty() ? 0.0 : 1e-12 * all_s[0];
  std::size_t kept = 0;
  while (kept < rank && all_s[kept] > drop_below) ++kept;
  if (kept == 0) kept = 1;  // all-zero matrix: keep one (zero) component
  if (kept < rank)
    out.warning = "matrix rank below requested " + std::to_string(rank) + "; returning " +
                  std::to_string(kept) + " component(s)";

  out.S.assign(all_s.begin(), all_s.begin() + kept);
  out.U = DenseMatrix(n, kept);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kept; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < l; ++a) s += Q(i, a) * W(a, j);
      out.U(i, j) = s;
    }
  out.V = DenseMatrix(d, kept);
  for (std::size_t j = 0; j < kept; ++j) {
    if (out.S[j] <= drop_below) continue;  // zero component of an all-zero matrix
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < l; ++a) s += Bt(i, a) * W(a, j);
      out.V(i, j) = s / out.S[j];
    }
  }
  return out;
}

// U * diag(S): the reduced-dimension coordinates.
inline DenseMatrix svd_projection(const SvdResult& svd) {
  DenseMatrix P(svd.U.n_rows, svd.S.size());
  for (std::size_t i = 0; i < P.n_rows; ++i)
    for (std::size_t j = 0; j < P.n_cols; ++j) P(i, j) = svd.U(i, j) * svd.S[j];
  return P;
}

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;
  // Momentum 0.5 for the first 250 iterations (0-based), 0.8 after.
  double momentum_early = 0.5;
  double momentum_late = 0.8;
  int momentum_switch = 250;
  // Optional early exaggeration, off by default: scale P by the factor for
  // the first `exaggeration_iters` iterations.
  bool exaggeration = false;
  double exaggeration_factor = 4.0;
  int exaggeration_iters = 100;
};

struct Affinities {
  DenseMatrix conditional;     // p_{j|i}, rows sum to 1, zero diagonal
  std::vector<double> sigmas;  // per-point bandwidths
};

// Per-point binary search on the bandwidth so each row of p_{.|i} has
// perplexity 2^H = Perp: at most 50 halvings or entropy within 1e-5 of
// ln(Perp). Rows of all-equal distances saturate to uniform.
inline Affinities calibrate_affinities(const DenseMatrix& sq_dist, double perplexity) {
  const std::size_t n = sq_dist.n_rows;
  if (n < 2) throw Error("calibrate_affinities: need at least 2 points");
  if (sq_dist.n_cols != n) throw Error("calibrate_affinities: distance matrix not square");
  if (perplexity < 1.0 || perplexity > static_cast<double>(n - 1))
    throw Error("perplexity must be in [1, n-1]");

  Affinities out;
  out.conditional = DenseMatrix(n, n);
  out.sigmas.assign(n, 0.0);
  const double h_target = std::log(perplexity);
  std::vector<double> shifted(n), p(n);

  for (std::size_t i = 0; i < n; ++i) {
    double d_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d_min = std::min(d_min, sq_dist(i, j));
    for (std::size_t j = 0; j < n; ++j) shifted[j] = sq_dist(i, j) - d_min;

    double beta = 1.0;
    double beta_lo = 0.0;
    double beta_hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 50; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
          p[j] = 0.0;
          continue;
        }
        p[j] = std::exp(-beta * shifted[j]);
        sum += p[j];
        weighted += p[j] * shifted[j];
      }
      const double h = std::log(sum) + beta * weighted / sum;
      if (std::abs(h - h_target) <= 1e-5) break;
      if (h > h_target) {  // entropy too high: sharpen
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
      } else {
        beta_hi = beta;
        beta = 0.5 * (beta + beta_lo);
      }
    }

    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        p[j] = 0.0;
        continue;
      }
      p[j] = std::exp(-beta * shifted[j]);
      sum += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) out.conditional(i, j) = j == i ? 0.0 : p[j] / sum;
    out.sigmas[i] = std::sqrt(0.5 / beta);
  }
  return out;
}

// p_ij = (p_{j|i} + p_{i|j}) / (2n); total off-diagonal mass 1.
inline DenseMatrix symmetrize(const DenseMatrix& conditional) {
  const std::size_t n = conditional.n_rows;
  DenseMatrix P(n, n);
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) P(i, j) = (conditional(i, j) + conditional(j, i)) * scale;
  return P;
}

namespace detail {

struct LowDimAffinities {
  DenseMatrix Q;       // globally normalized
  DenseMatrix kernel;  // (1 + |y_i - y_j|^2)^-1
};

inline LowDimAffinities low_dim_affinities(const DenseMatrix& Y) {
  const std::size_t n = Y.n_rows;
  LowDimAffinities out;
  out.Q = DenseMatrix(n, n);
  out.kernel = DenseMatrix(n, n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double k = 1.0 / (1.0 + squared_distance(Y.row(i), Y.row(j), Y.n_cols));
      out.kernel(i, j) = k;
      out.kernel(j, i) = k;
      z += 2.0 * k;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out.Q(i, j) = out.kernel(i, j) / z;
  return out;
}

inline DenseMatrix gradient_from(const DenseMatrix& P, const DenseMatrix& Y,
                                 const LowDimAffinities& low) {
  const std::size_t n = Y.n_rows, dim = Y.n_cols;
  DenseMatrix grad(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double coeff = 4.0 * (P(i, j) - low.Q(i, j)) * low.kernel(i, j);
      for (std::size_t c = 0; c < dim; ++c) grad(i, c) += coeff * (Y(i, c) - Y(j, c));
    }
  return grad;
}

}  // namespace detail

inline DenseMatrix q_matrix(const DenseMatrix& Y) { return detail::low_dim_affinities(Y).Q; }

inline double kl_divergence(const DenseMatrix& P, const DenseMatrix& Q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < P.n_rows; ++i)
    for (std::size_t j = 0; j < P.n_cols; ++j)
      if (i != j && P(i, j) > 0.0) kl += P(i, j) * std::log(P(i, j) / Q(i, j));
  return kl;
}

// dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1.
inline DenseMatrix tsne_gradient(const DenseMatrix& P, const DenseMatrix& Y) {
  if (P.n_rows != Y.n_rows || P.n_cols != Y.n_rows)
    throw Error("tsne_gradient: shape mismatch");
  return detail::gradient_from(P, Y, detail::low_dim_affinities(Y));
}

struct TsneResult {
  DenseMatrix Y;                 // n x 2
  std::vector<double> kl_trace;  // KL before each update, plus the final value
  std::vector<double> sigmas;
};

// Gradient descent with the momentum schedule on KL(P||Q), from a seeded
// N(0, 1e-4 I) start.
inline TsneResult tsne_from_distances(const DenseMatrix& sq_dist, const TsneConfig& cfg) {
  const std::size_t n = sq_dist.n_rows;
  if (n < 2) throw Error("tsne: need at least 2 points");
  if (cfg.iterations < 1) throw Error("tsne: iterations must be >= 1");
  if (cfg.learning_rate <= 0.0) throw Error("tsne: learning rate must be positive");

  auto aff = calibrate_affinities(sq_dist, cfg.perplexity);
  const DenseMatrix P = symmetrize(aff.conditional);

  DenseMatrix P_eff = P;
  if (cfg.exaggeration)
    for (double& v : P_eff.data) v *= cfg.exaggeration_factor;

  TsneResult out;
  out.sigmas = std::move(aff.sigmas);
  rng::Gaussian gauss(cfg.seed);
  DenseMatrix Y(n, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) Y(i, c) = 1e-2 * gauss.next();

  DenseMatrix Y_prev = Y;
  for (int t = 0; t < cfg.iterations; ++t) {
    if (cfg.exaggeration && t == cfg.exaggeration_iters) P_eff = P;
    auto low = detail::low_dim_affinities(Y);
    out.kl_trace.push_back(kl_divergence(P, low.Q));
    const DenseMatrix grad = detail::gradient_from(P_eff, Y, low);
    const double alpha = t < cfg.momentum_switch ? cfg.momentum_early : cfg.momentum_late;
    DenseMatrix Y_next(n, 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c)
        Y_next(i, c) =
            Y(i, c) - cfg.learning_rate * grad(i, c) + alpha * (Y(i, c) - Y_prev(i, c));
    Y_prev = std::move(Y);
    Y = std::move(Y_next);
  }
  out.kl_trace.push_back(kl_divergence(P, q_matrix(Y)));
  out.Y = std::move(Y);
  return out;
}

inline TsneResult tsne(const DenseMatrix& X, const TsneConfig& cfg) {
  return tsne_from_distances(pairwise_squared_distances(X), cfg);
}

// Sparse input is first SVD-reduced to 50 dimensions when wider than that.
inline TsneResult tsne(const SparseMatrix& X, const TsneConfig& cfg) {
  if (X.n_cols > 50) {
    const auto svd = truncated_svd(X, std::min<std::size_t>(50, X.n_rows),
                                   rng::derive_seed(cfg.seed, 1));
    return tsne(svd_projection(svd), cfg);
  }
  DenseMatrix D(X.n_rows, X.n_cols);
  for (std::size_t i = 0; i < X.n_rows; ++i)
    for (const auto& e : X.rows[i]) D(i, e.col) = e.value;
  return tsne(D, cfg);
}

}  // namespace scmine::embed
