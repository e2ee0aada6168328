#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scmine/cluster.hpp"
#include "scmine/dense.hpp"
#include "scmine/rng.hpp"

using namespace scmine;
using Catch::Matchers::WithinAbs;

namespace {

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  REQUIRE(a.size() == b.size());
  const std::size_t ka = 1 + *std::max_element(a.begin(), a.end());
  const std::size_t kb = 1 + *std::max_element(b.begin(), b.end());
  std::vector<std::vector<std::size_t>> table(ka, std::vector<std::size_t>(kb, 0));
  for (std::size_t i = 0; i < a.size(); ++i) ++table[a[i]][b[i]];

  auto choose2 = [](std::size_t m) { return 0.5 * static_cast<double>(m) * (m - 1.0); };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (std::size_t i = 0; i < ka; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < kb; ++j) {
      sum_ij += choose2(table[i][j]);
      row += table[i][j];
    }
    sum_a += choose2(row);
  }
  for (std::size_t j = 0; j < kb; ++j) {
    std::size_t col = 0;
    for (std::size_t i = 0; i < ka; ++i) col += table[i][j];
    sum_b += choose2(col);
  }
  const double expected = sum_a * sum_b / choose2(a.size());
  const double max_index = 0.5 * (sum_a + sum_b);
  return (sum_ij - expected) / (max_index - expected);
}

// blob layout: `per` points around each center, sigma 1, row-major
DenseMatrix gaussian_blobs(const std::vector<std::pair<double, double>>& centers, std::size_t per,
                           std::uint64_t seed, std::vector<std::size_t>* planted) {
  rng::Gaussian gauss(seed);
  DenseMatrix X(centers.size() * per, 2);
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = c * per + i;
      X(r, 0) = centers[c].first + gauss.next();
      X(r, 1) = centers[c].second + gauss.next();
      if (planted) planted->push_back(c);
    }
  return X;
}

DenseMatrix four_points() {
  DenseMatrix X(4, 2);
  X(0, 0) = 0.0;
  X(0, 1) = 0.0;
  X(1, 0) = 0.0;
  X(1, 1) = 1.0;
  X(2, 0) = 10.0;
  X(2, 1) = 0.0;
  X(3, 0) = 10.0;
  X(3, 1) = 1.0;
  return X;
}

}  // namespace

TEST_CASE("kmeans solves the four-point example exactly") {
  const auto X = four_points();
  const auto res = cluster::kmeans(X, 2, 99, 10);
  REQUIRE(res.k == 2);
  REQUIRE(res.assignments.size() == 4);
  REQUIRE(res.assignments[0] == res.assignments[1]);
  REQUIRE(res.assignments[2] == res.assignments[3]);
  REQUIRE(res.assignments[0] != res.assignments[2]);
  REQUIRE(res.inertia == 1.0);

  const std::size_t left = res.assignments[0];
  REQUIRE(res.centroids(left, 0) == 0.0);
  REQUIRE(res.centroids(left, 1) == 0.5);
  REQUIRE(res.centroids(1 - left, 0) == 10.0);
  REQUIRE(res.centroids(1 - left, 1) == 0.5);

  REQUIRE(res.db_score.has_value());
  REQUIRE_THAT(*res.db_score, WithinAbs(0.1, 1e-15));
}

TEST_CASE("davies_bouldin hand computation") {
  const auto X = four_points();
  DenseMatrix C(2, 2);
  C(0, 0) = 0.0;
  C(0, 1) = 0.5;
  C(1, 0) = 10.0;
  C(1, 1) = 0.5;
  const double db = cluster::davies_bouldin(X, {0, 0, 1, 1}, C);
  // S = (0.5, 0.5), M = 10, so both ratios are 0.1
  REQUIRE_THAT(db, WithinAbs(0.1, 1e-15));

  REQUIRE_THROWS_WITH(cluster::davies_bouldin(X, {0, 0, 0, 0}, C),
                      Catch::Matchers::ContainsSubstring("empty cluster"));

  DenseMatrix same(2, 2);  // coincident centroids
  same(0, 0) = same(1, 0) = 1.0;
  REQUIRE_THROWS_WITH(cluster::davies_bouldin(X, {0, 1, 0, 1}, same),
                      Catch::Matchers::ContainsSubstring("degenerate clustering"));

  REQUIRE_THROWS_AS(cluster::davies_bouldin(X, {0, 0, 1, 1}, DenseMatrix(1, 2)), Error);
}

TEST_CASE("kmeans recovers well-separated blobs") {
  std::vector<std::size_t> planted;
  const auto X = gaussian_blobs({{0, 0}, {14, 0}, {0, 14}}, 40, 1717, &planted);
  for (std::uint64_t seed : {10, 20, 30}) {
    const auto res = cluster::kmeans(X, 3, seed, 10);
    REQUIRE(adjusted_rand_index(planted, res.assignments) == 1.0);
  }
}

TEST_CASE("kmeans is deterministic for a fixed seed and picks the best restart") {
  std::vector<std::size_t> planted;
  const auto X = gaussian_blobs({{0, 0}, {9, 0}, {5, 8}}, 25, 3434, &planted);
  const auto a = cluster::kmeans(X, 3, 7, 10);
  const auto b = cluster::kmeans(X, 3, 7, 10);
  REQUIRE(a.assignments == b.assignments);
  REQUIRE(a.inertia == b.inertia);
  REQUIRE(a.centroids.data == b.centroids.data);

  // the ten restarts include the single restart, so more can only help
  const auto single = cluster::kmeans(X, 3, 7, 1);
  REQUIRE(a.inertia <= single.inertia);
}

TEST_CASE("cluster recovery survives row permutation") {
  std::vector<std::size_t> planted;
  auto X = gaussian_blobs({{0, 0}, {15, 15}}, 30, 909, &planted);
  std::vector<std::size_t> perm(X.n_rows);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng::Xoshiro256ss gen(5);
  rng::fisher_yates(perm, gen);

  DenseMatrix shuffled(X.n_rows, X.n_cols);
  std::vector<std::size_t> shuffled_planted(X.n_rows);
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    shuffled(i, 0) = X(perm[i], 0);
    shuffled(i, 1) = X(perm[i], 1);
    shuffled_planted[i] = planted[perm[i]];
  }
  const auto res = cluster::kmeans(shuffled, 2, 31, 10);
  REQUIRE(adjusted_rand_index(shuffled_planted, res.assignments) == 1.0);
}

TEST_CASE("kmeans with one cluster reports no db score") {
  const auto X = four_points();
  const auto res = cluster::kmeans(X, 1, 0, 3);
  REQUIRE_FALSE(res.db_score.has_value());
  REQUIRE(res.assignments == std::vector<std::size_t>{0, 0, 0, 0});
  // total squared distance to the grand mean (5, 0.5)
  REQUIRE_THAT(res.inertia, WithinAbs(4 * 25.0 + 4 * 0.25, 1e-12));
}

TEST_CASE("kmeans on identical points leaves db unset for k > 1") {
  DenseMatrix X(4, 2);  // all zeros
  const auto res = cluster::kmeans(X, 2, 1, 2);
  REQUIRE(res.inertia == 0.0);
  REQUIRE_FALSE(res.db_score.has_value());
}

TEST_CASE("kmeans validates arguments") {
  const auto X = four_points();
  REQUIRE_THROWS_AS(cluster::kmeans(X, 0, 0), Error);
  REQUIRE_THROWS_AS(cluster::kmeans(X, 5, 0), Error);
  REQUIRE_THROWS_AS(cluster::kmeans(X, 2, 0, 0), Error);
}

TEST_CASE("elbow sweep suggests the planted number of blobs") {
  std::vector<std::size_t> planted;
  const auto X = gaussian_blobs({{0, 0}, {16, 0}, {0, 16}}, 30, 2121, &planted);
  const auto curve = cluster::elbow_sweep(X, 2, 7, 11, 10);
  REQUIRE(curve.ks == std::vector<std::size_t>{2, 3, 4, 5, 6, 7});
  REQUIRE(curve.scores.size() == 6);
  REQUIRE(curve.suggested_k == 3);
}

TEST_CASE("knee ties resolve to the smaller k") {
  const std::vector<std::size_t> ks = {2, 3, 4, 5};
  const std::vector<std::optional<double>> scores = {1.0, 0.4, 0.4, 1.0};
  REQUIRE(cluster::detail::knee(ks, scores) == 3);
}

TEST_CASE("knee skips degenerate entries") {
  const std::vector<std::size_t> ks = {2, 3, 4};
  const std::vector<std::optional<double>> scores = {std::nullopt, 0.3, std::nullopt};
  REQUIRE(cluster::detail::knee(ks, scores) == 3);
}

TEST_CASE("elbow sweep validates its range") {
  const auto X = four_points();
  REQUIRE_THROWS_AS(cluster::elbow_sweep(X, 1, 3, 0), Error);
  REQUIRE_THROWS_AS(cluster::elbow_sweep(X, 3, 3, 0), Error);
  REQUIRE_THROWS_AS(cluster::elbow_sweep(X, 2, 5, 0), Error);
}

TEST_CASE("elbow sweep and kmeans agree for the same derived seed") {
  std::vector<std::size_t> planted;
  const auto X = gaussian_blobs({{0, 0}, {12, 12}}, 20, 66, &planted);
  const auto curve = cluster::elbow_sweep(X, 2, 4, 5, 10);
  const auto direct = cluster::kmeans(X, 3, rng::derive_seed(5, 3), 10);
  REQUIRE(curve.scores[1].has_value());
  REQUIRE(*curve.scores[1] == *direct.db_score);
}

TEST_CASE("cluster_topics surfaces the planted keyword") {
  // "loan" and "dice" stay under the document count (5 of 10), so their log
  // factor is ln 2; the shared fillers land exactly at ln 1 and drop out.
  std::vector<std::vector<std::string>> tokens;
  std::vector<std::size_t> assignments;
  for (int d = 0; d < 5; ++d) {
    tokens.push_back({"loan", "value", "contract"});
    assignments.push_back(0);
  }
  for (int d = 0; d < 5; ++d) {
    tokens.push_back({"dice", "value", "contract"});
    assignments.push_back(1);
  }
  const auto topics = cluster::cluster_topics(assignments, tokens, 2, 3);
  REQUIRE(topics.size() == 2);
  REQUIRE(topics[0].size() == 1);
  REQUIRE(topics[0].front().first == "loan");
  REQUIRE(topics[1].front().first == "dice");
  REQUIRE(topics[0].front().second == Catch::Approx((1.0 / 3.0) * std::log(2.0)));

  REQUIRE_THROWS_AS(cluster::cluster_topics({0, 1}, tokens, 2), Error);
}
