#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scmine/dense.hpp"
#include "scmine/error.hpp"
#include "scmine/features.hpp"
#include "scmine/rng.hpp"

// k-means with k-means++ seeding, Davies-Bouldin scoring, and an elbow sweep
// with automatic knee suggestion.

namespace scmine::cluster {

struct ClusterResult {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  DenseMatrix centroids;  // k x d
  double inertia = 0.0;
  std::optional<double> db_score;  // absent for k=1 or degenerate geometry
  std::size_t n_init_used = 0;
  std::uint64_t seed = 0;
};

// DB = (1/k) sum_i max_{j!=i} (S_i + S_j) / M_ij with S = mean distance to
// the own centroid and M = centroid distance.
inline double davies_bouldin(const DenseMatrix& X, const std::vector<std::size_t>& assignments,
                             const DenseMatrix& centroids) {
  const std::size_t k = centroids.n_rows;
  if (k < 2) throw Error("davies_bouldin: need at least 2 clusters");
  if (assignments.size() != X.n_rows) throw Error("davies_bouldin: assignment count mismatch");

  std::vector<double> scatter(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    const std::size_t c = assignments[i];
    if (c >= k) throw Error("davies_bouldin: assignment out of range");
    scatter[c] += std::sqrt(squared_distance(X.row(i), centroids.row(c), X.n_cols));
    ++count[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0) throw Error("davies_bouldin: empty cluster");
    scatter[c] /= static_cast<double>(count[c]);
  }

  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      const double m = std::sqrt(squared_distance(centroids.row(i), centroids.row(j), X.n_cols));
      if (m == 0.0) throw Error("degenerate clustering");
      worst = std::max(worst, (scatter[i] + scatter[j]) / m);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

namespace detail {

struct LloydRun {
  std::vector<std::size_t> assignments;
  DenseMatrix centroids;
  double inertia = 0.0;
};

inline std::size_t nearest_centroid(const DenseMatrix& X, std::size_t i,
                                    const DenseMatrix& centroids) {
  std::size_t best = 0;
  double best_d = squared_distance(X.row(i), centroids.row(0), X.n_cols);
  for (std::size_t c = 1; c < centroids.n_rows; ++c) {
    const double d = squared_distance(X.row(i), centroids.row(c), X.n_cols);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline DenseMatrix kmeanspp_init(const DenseMatrix& X, std::size_t k, rng::Xoshiro256ss& gen) {
  const std::size_t n = X.n_rows, d = X.n_cols;
  DenseMatrix centroids(k, d);
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());

  std::size_t first = gen.below(n);
  std::copy_n(X.row(first), d, centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], squared_distance(X.row(i), centroids.row(c - 1), d));
      total += dist2[i];
    }
    std::size_t chosen;
    if (total > 0.0) {
      const double target = gen.next_double() * total;
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = gen.below(n);  // all remaining points coincide with a centroid
    }
    std::copy_n(X.row(chosen), d, centroids.row(c));
  }
  return centroids;
}

inline LloydRun lloyd(const DenseMatrix& X, std::size_t k, rng::Xoshiro256ss& gen) {
  const std::size_t n = X.n_rows, d = X.n_cols;
  LloydRun run;
  run.centroids = kmeanspp_init(X, k, gen);
  run.assignments.assign(n, 0);

  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_centroid(X, i, run.centroids);
      if (c != run.assignments[i]) changed = true;
      run.assignments[i] = c;
    }

    std::vector<std::size_t> count(k, 0);
    for (std::size_t c : run.assignments) ++count[c];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      // Seize the point farthest from its own centroid, from a donor cluster
      // that keeps at least one member.
      std::size_t victim = n;
      double worst = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[run.assignments[i]] < 2) continue;
        const double dd = squared_distance(X.row(i), run.centroids.row(run.assignments[i]), d);
        if (dd > worst) {
          worst = dd;
          victim = i;
        }
      }
      if (victim == n) throw Error("kmeans: cannot repair empty cluster");
      --count[run.assignments[victim]];
      run.assignments[victim] = c;
      ++count[c];
      changed = true;
    }

    DenseMatrix next(k, d);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = X.row(i);
      double* cr = next.row(run.assignments[i]);
      for (std::size_t j = 0; j < d; ++j) cr[j] += x[j];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) next(c, j) /= static_cast<double>(count[c]);
      max_shift =
          std::max(max_shift, std::sqrt(squared_distance(next.row(c), run.centroids.row(c), d)));
    }
    run.centroids = std::move(next);

    run.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      run.inertia += squared_distance(X.row(i), run.centroids.row(run.assignments[i]), d);
    if (run.inertia > prev_inertia * (1.0 + 1e-9) + 1e-12)
      throw Error("kmeans: inertia increased");
    prev_inertia = run.inertia;

    if (!changed || max_shift < 1e-8) break;
  }
  return run;
}

}  // namespace detail

// Best of n_init seeded restarts by inertia; restarts run concurrently but
// the winner is picked in restart order, so results don't depend on thread
// scheduling.
inline ClusterResult kmeans(const DenseMatrix& X, std::size_t k, std::uint64_t seed,
                            std::size_t n_init = 10) {
  if (k < 1) throw Error("kmeans: k must be >= 1");
  if (k > X.n_rows) throw Error("kmeans: k exceeds point count");
  if (n_init < 1) throw Error("kmeans: n_init must be >= 1");

  std::vector<std::future<detail::LloydRun>> futures;
  futures.reserve(n_init);
  for (std::size_t r = 0; r < n_init; ++r)
    futures.push_back(std::async(std::launch::async, [&X, k, seed, r] {
      rng::Xoshiro256ss gen(rng::derive_seed(seed, r));
      return detail::lloyd(X, k, gen);
    }));

  ClusterResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < n_init; ++r) {
    auto run = futures[r].get();
    if (run.inertia < best.inertia) {
      best.assignments = std::move(run.assignments);
      best.centroids = std::move(run.centroids);
      best.inertia = run.inertia;
    }
  }
  best.k = k;
  best.n_init_used = n_init;
  best.seed = seed;
  if (k >= 2) {
    try {
      best.db_score = davies_bouldin(X, best.assignments, best.centroids);
    } catch (const Error&) {
      best.db_score.reset();
    }
  }
  return best;
}

struct ElbowCurve {
  std::vector<std::size_t> ks;
  std::vector<std::optional<double>> scores;  // Davies-Bouldin; absent when degenerate
  std::size_t suggested_k = 0;
};

namespace detail {

// Knee rule: on min-max normalized axes, the valid point farthest from the
// chord joining the first and last valid points; ties go to the smaller k.
inline std::size_t knee(const std::vector<std::size_t>& ks,
                        const std::vector<std::optional<double>>& scores) {
  std::vector<std::pair<double, double>> pts;
  std::vector<std::size_t> pt_k;
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (scores[i]) {
      pts.emplace_back(static_cast<double>(ks[i]), *scores[i]);
      pt_k.push_back(ks[i]);
    }
  if (pts.empty()) throw Error("elbow_sweep: no valid clustering at any k");
  if (pts.size() == 1) return pt_k[0];

  double kx0 = pts.front().first, kx1 = pts.back().first;
  double sy0 = pts.front().second, sy1 = pts.back().second;
  double smin = sy0, smax = sy0;
  for (const auto& p : pts) {
    smin = std::min(smin, p.second);
    smax = std::max(smax, p.second);
  }
  const double kspan = kx1 - kx0;
  const double sspan = smax - smin;

  auto norm = [&](const std::pair<double, double>& p) {
    return std::pair<double, double>{(p.first - kx0) / kspan,
                                     sspan > 0.0 ? (p.second - smin) / sspan : 0.0};
  };
  const auto a = norm({kx0, sy0});
  const auto b = norm({kx1, sy1});
  const double chord = std::hypot(b.first - a.first, b.second - a.second);

  std::size_t best_k = pt_k[0];
  double best_dist = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto p = norm(pts[i]);
    const double cross =
        (p.first - a.first) * (b.second - a.second) - (p.second - a.second) * (b.first - a.first);
    const double dist = std::abs(cross) / chord;
    if (dist > best_dist) {
      best_dist = dist;
      best_k = pt_k[i];
    }
  }
  return best_k;
}

}  // namespace detail

inline ElbowCurve elbow_sweep(const DenseMatrix& X, std::size_t k_min, std::size_t k_max,
                              std::uint64_t seed, std::size_t n_init = 10) {
  if (k_min < 2 || k_min >= k_max) throw Error("elbow_sweep: need 2 <= k_min < k_max");
  if (k_max > X.n_rows) throw Error("elbow_sweep: k_max exceeds point count");
  ElbowCurve curve;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const auto result = kmeans(X, k, rng::derive_seed(seed, k), n_init);
    curve.ks.push_back(k);
    curve.scores.push_back(result.db_score);
  }
  curve.suggested_k = detail::knee(curve.ks, curve.scores);
  return curve;
}

// Clusters as classes over the documents' comment tokens: c-TF-IDF keywords
// per cluster.
inline std::vector<std::vector<std::pair<std::string, double>>> cluster_topics(
    const std::vector<std::size_t>& assignments,
    const std::vector<std::vector<std::string>>& comment_tokens, std::size_t k,
    std::size_t n_top = 10, bool m_is_classes = false) {
  if (assignments.size() != comment_tokens.size())
    throw Error("cluster_topics: assignment count mismatch");
  std::vector<std::string> names(k);
  for (std::size_t c = 0; c < k; ++c) names[c] = std::to_string(c);
  const auto stats = features::class_term_stats(comment_tokens, assignments, names);
  const auto weights = features::ctfidf(stats, m_is_classes);
  std::vector<std::vector<std::pair<std::string, double>>> out(k);
  for (std::size_t c = 0; c < k; ++c) out[c] = features::top_terms(weights, stats, names[c], n_top);
  return out;
}

}  // namespace scmine::cluster
