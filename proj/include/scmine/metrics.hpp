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

#include "scmine/corpus.hpp"
#include "scmine/error.hpp"
#include "scmine/extract.hpp"
#include "scmine/features.hpp"
#include "scmine/linmodel.hpp"
#include "scmine/rng.hpp"

// Ranking metrics (ROC AUC, average precision), the Wilcoxon signed-rank
// test, and the seeded cross-validated comparison of feature modes.

namespace scmine::metrics {

// Probability that a random positive outranks a random negative; ties count
// half. Computed with the average-rank formula.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("roc_auc: scores/labels size mismatch");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int l : labels) pos += l != 0;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw Error("AUC undefined: need both classes");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) pos_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

// Step-wise (non-interpolated) average precision; tied scores collapse into
// one threshold.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw Error("average_precision: scores/labels size mismatch");
  const std::size_t n = scores.size();
  std::size_t total_pos = 0;
  for (int l : labels) total_pos += l != 0;
  if (total_pos == 0) throw Error("average precision undefined: no positive examples");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) ++tp;
      else ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

enum class Alternative { TwoSided, Less, Greater };

inline const char* to_string(Alternative a) {
  switch (a) {
    case Alternative::TwoSided: return "two_sided";
    case Alternative::Less: return "less";
    case Alternative::Greater: return "greater";
  }
  return "two_sided";
}

inline Alternative alternative_from_string(std::string_view s) {
  if (s == "two_sided" || s == "two-sided") return Alternative::TwoSided;
  if (s == "less") return Alternative::Less;
  if (s == "greater") return Alternative::Greater;
  throw Error("unknown alternative '" + std::string(s) + "'");
}

struct WilcoxonResult {
  std::size_t n_effective = 0;  // pairs left after dropping zero differences
  double w_plus = 0.0;          // sum of ranks of positive differences
  double p_value = 1.0;
  Alternative alternative = Alternative::TwoSided;
  std::string method;  // "exact", "normal_approx" or "degenerate_equal"
};

namespace detail {

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Subset-sum counts over the doubled ranks: counts[s] = number of sign
// assignments whose positive-rank sum equals s/2. Doubling makes average
// ranks integral; counts stay exact in doubles for n <= 25 (< 2^53).
inline std::vector<double> signed_rank_counts(const std::vector<long long>& doubled_ranks) {
  long long total = 0;
  for (long long r : doubled_ranks) total += r;
  std::vector<double> dp(static_cast<std::size_t>(total) + 1, 0.0);
  dp[0] = 1.0;
  for (long long r : doubled_ranks)
    for (long long s = total; s >= r; --s)
      dp[static_cast<std::size_t>(s)] += dp[static_cast<std::size_t>(s - r)];
  return dp;
}

}  // namespace detail

// Paired signed-rank test. Zero differences are dropped; |d| gets average
// ranks. Exact p by enumerating the 2^n sign-assignment null for
// n_effective <= 25, else a normal approximation with tie-corrected variance
// and 0.5 continuity correction.
inline WilcoxonResult wilcoxon(const std::vector<double>& x, const std::vector<double>& y,
                               Alternative alternative) {
  if (x.size() != y.size()) throw Error("wilcoxon: paired samples differ in length");
  if (x.empty()) throw Error("wilcoxon: empty input");
  std::vector<double> d;
  d.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  if (d.empty()) throw Error("no non-zero pairs");

  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });

  std::vector<double> rank(n, 0.0);
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }

  WilcoxonResult res;
  res.alternative = alternative;
  res.n_effective = n;
  for (std::size_t k = 0; k < n; ++k)
    if (d[k] > 0.0) res.w_plus += rank[k];

  const double nn = static_cast<double>(n);
  if (n <= 25) {
    std::vector<long long> doubled(n);
    for (std::size_t k = 0; k < n; ++k) doubled[k] = std::llround(2.0 * rank[k]);
    const auto counts = detail::signed_rank_counts(doubled);
    const long long total2 = static_cast<long long>(counts.size()) - 1;  // n(n+1)
    const long long w2 = std::llround(2.0 * res.w_plus);
    const double denom = std::ldexp(1.0, static_cast<int>(n));
    double mass = 0.0;
    switch (alternative) {
      case Alternative::Greater:
        for (long long s = w2; s <= total2; ++s) mass += counts[static_cast<std::size_t>(s)];
        break;
      case Alternative::Less:
        for (long long s = 0; s <= w2; ++s) mass += counts[static_cast<std::size_t>(s)];
        break;
      case Alternative::TwoSided: {
        const long long mu2 = total2 / 2;
        const long long dev = std::llabs(w2 - mu2);
        for (long long s = 0; s <= total2; ++s)
          if (std::llabs(s - mu2) >= dev) mass += counts[static_cast<std::size_t>(s)];
        break;
      }
    }
    res.p_value = mass / denom;
    res.method = "exact";
  } else {
    const double mu = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    switch (alternative) {
      case Alternative::Greater:
        res.p_value = detail::normal_sf((res.w_plus - mu - 0.5) / sd);
        break;
      case Alternative::Less:
        res.p_value = detail::normal_cdf((res.w_plus - mu + 0.5) / sd);
        break;
      case Alternative::TwoSided:
        res.p_value = std::min(1.0, 2.0 * detail::normal_sf((std::abs(res.w_plus - mu) - 0.5) / sd));
        break;
    }
    res.p_value = std::max(res.p_value, std::numeric_limits<double>::min());
    res.method = "normal_approx";
  }
  return res;
}

struct EvalRow {
  std::string class_name;
  std::optional<double> auc;  // absent when the class is single-sided in the eval set
  std::optional<double> ap;
  std::size_t positives = 0;
};

// Per-class binary evaluation of a score matrix (row x class) against true
// labels.
inline std::vector<EvalRow> evaluate_scores(const std::vector<std::vector<double>>& scores,
                                            const std::vector<std::string>& class_names,
                                            const std::vector<std::string>& labels) {
  if (scores.size() != labels.size()) throw Error("evaluate_scores: row/label count mismatch");
  std::vector<EvalRow> rows;
  rows.reserve(class_names.size());
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    EvalRow row;
    row.class_name = class_names[c];
    std::vector<double> s(labels.size());
    std::vector<int> b(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = scores[i][c];
      b[i] = labels[i] == class_names[c] ? 1 : 0;
      row.positives += b[i];
    }
    try {
      row.auc = roc_auc(s, b);
    } catch (const Error&) {
    }
    if (row.positives > 0) row.ap = average_precision(s, b);
    rows.push_back(std::move(row));
  }
  return rows;
}

struct CompareConfig {
  std::size_t n_seeds = 14;
  int folds = 3;
  std::uint64_t seed = 0;       // base seed; per-repetition fold seeds derive from it
  double lambda = 1.0;          // ridge strength for every cell
  linmodel::TrainConfig train;
  bool pooled = false;          // pool (document, class) pairs instead of macro-averaging
  std::string other_name = "other";
};

struct WilcoxonRow {
  std::string mode_a;
  std::string mode_b;
  std::string metric;  // "auc" or "ap"
  WilcoxonResult result;
};

struct ModeComparisonReport {
  std::vector<extract::FeatureMode> modes;
  std::vector<std::string> class_names;
  // Per mode: one sample per (seed, fold), seed-major, n_seeds * folds each.
  std::vector<std::vector<double>> auc_samples;
  std::vector<std::vector<double>> ap_samples;
  std::vector<WilcoxonRow> tests;
};

namespace detail {

struct CellScore {
  double auc = 0.0;
  double ap = 0.0;
};

inline CellScore evaluate_cell(const std::vector<std::vector<double>>& scores,
                               const std::vector<std::string>& class_names,
                               const std::vector<std::string>& labels, bool pooled) {
  CellScore cell;
  if (pooled) {
    std::vector<double> s;
    std::vector<int> b;
    s.reserve(scores.size() * class_names.size());
    b.reserve(scores.size() * class_names.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
      for (std::size_t c = 0; c < class_names.size(); ++c) {
        s.push_back(scores[i][c]);
        b.push_back(labels[i] == class_names[c] ? 1 : 0);
      }
    cell.auc = roc_auc(s, b);
    cell.ap = average_precision(s, b);
    return cell;
  }
  const auto rows = evaluate_scores(scores, class_names, labels);
  for (const auto& row : rows) {
    if (!row.auc || !row.ap)
      throw Error("class '" + row.class_name + "' has no positives or no negatives in the fold");
    cell.auc += *row.auc;
    cell.ap += *row.ap;
  }
  cell.auc /= static_cast<double>(rows.size());
  cell.ap /= static_cast<double>(rows.size());
  return cell;
}

}  // namespace detail

// The mode-comparison protocol: n_seeds seeded k-fold splits shared by every
// mode, a ridge one-vs-rest model per (seed, fold, mode) cell, class-averaged
// AUC/AP per cell, and Wilcoxon tests on the paired per-mode sample vectors
// for every mode pair, metric, and alternative. Self-comparison (all
// differences zero) is reported as equality with p = 1.
inline ModeComparisonReport compare_modes(const corpus::Corpus& corpus,
                                          const std::vector<extract::FeatureMode>& modes,
                                          const CompareConfig& cfg = {}) {
  if (modes.empty()) throw Error("compare_modes: no modes given");
  if (cfg.n_seeds < 1) throw Error("compare_modes: need at least one seed");

  ModeComparisonReport report;
  report.modes = modes;
  for (const auto& name : corpus.label_names)
    if (name != cfg.other_name) report.class_names.push_back(name);
  if (report.class_names.empty()) throw Error("compare_modes: no classes besides the other bucket");

  // One extraction pass per document, then per-mode token lists.
  std::vector<features::TokenLists> mode_tokens(modes.size());
  {
    std::vector<extract::ExtractionResult> views;
    views.reserve(corpus.size());
    for (const auto& doc : corpus.documents) views.push_back(extract::extract(doc.source));
    for (std::size_t m = 0; m < modes.size(); ++m) {
      mode_tokens[m].reserve(corpus.size());
      for (const auto& view : views) {
        std::string_view text;
        switch (modes[m]) {
          case extract::FeatureMode::FullCode: text = view.full_code; break;
          case extract::FeatureMode::OnlyCode: text = view.only_code; break;
          case extract::FeatureMode::OnlyComments: text = view.comments; break;
          case extract::FeatureMode::ExtractedFeatures: text = view.identifiers; break;
        }
        mode_tokens[m].push_back(features::tokens_for_mode(text, modes[m]));
      }
    }
  }
  std::vector<std::string> labels(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) labels[i] = corpus.documents[i].label;

  const std::size_t cells_per_seed = static_cast<std::size_t>(cfg.folds);
  auto run_seed = [&](std::size_t s) {
    // mode x fold cell scores for one seed
    std::vector<std::vector<detail::CellScore>> out(modes.size(),
                                                    std::vector<detail::CellScore>(cells_per_seed));
    const auto kf = corpus::kfold(corpus, cfg.folds, rng::derive_seed(cfg.seed, s));
    for (std::size_t f = 0; f < kf.folds.size(); ++f) {
      const auto& fold = kf.folds[f];
      std::vector<std::string> train_labels, val_labels;
      for (auto idx : fold.train) train_labels.push_back(labels[idx]);
      for (auto idx : fold.validation) val_labels.push_back(labels[idx]);
      for (std::size_t m = 0; m < modes.size(); ++m) {
        try {
          features::TokenLists train_tokens, val_tokens;
          for (auto idx : fold.train) train_tokens.push_back(mode_tokens[m][idx]);
          for (auto idx : fold.validation) val_tokens.push_back(mode_tokens[m][idx]);
          const auto vocab =
              features::fit_vocabulary(train_tokens, features::default_min_df(modes[m]));
          const auto x_train = features::tfidf(train_tokens, vocab);
          const auto x_val = features::tfidf(val_tokens, vocab);
          const auto ovr =
              linmodel::train_ovr(x_train, train_labels, report.class_names,
                                  linmodel::Penalty::L2, cfg.lambda, cfg.train);
          const auto pred = linmodel::predict_ovr(ovr, x_val, cfg.other_name);
          out[m][f] = detail::evaluate_cell(pred.scores, report.class_names, val_labels, cfg.pooled);
        } catch (const std::exception& e) {
          throw Error("compare_modes seed " + std::to_string(s) + " fold " + std::to_string(f) +
                      " mode " + extract::to_string(modes[m]) + ": " + e.what());
        }
      }
    }
    return out;
  };

  std::vector<std::future<std::vector<std::vector<detail::CellScore>>>> futures;
  futures.reserve(cfg.n_seeds);
  for (std::size_t s = 0; s < cfg.n_seeds; ++s)
    futures.push_back(std::async(std::launch::async, run_seed, s));

  report.auc_samples.assign(modes.size(), {});
  report.ap_samples.assign(modes.size(), {});
  for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
    const auto per_seed = futures[s].get();
    for (std::size_t m = 0; m < modes.size(); ++m)
      for (std::size_t f = 0; f < cells_per_seed; ++f) {
        report.auc_samples[m].push_back(per_seed[m][f].auc);
        report.ap_samples[m].push_back(per_seed[m][f].ap);
      }
  }

  const Alternative alts[] = {Alternative::TwoSided, Alternative::Less, Alternative::Greater};
  for (std::size_t a = 0; a < modes.size(); ++a)
    for (std::size_t b = a + 1; b < modes.size(); ++b)
      for (const char* metric : {"auc", "ap"})
        for (Alternative alt : alts) {
          const auto& xs = metric == std::string("auc") ? report.auc_samples[a] : report.ap_samples[a];
          const auto& ys = metric == std::string("auc") ? report.auc_samples[b] : report.ap_samples[b];
          WilcoxonRow row;
          row.mode_a = extract::to_string(modes[a]);
          row.mode_b = extract::to_string(modes[b]);
          row.metric = metric;
          try {
            row.result = wilcoxon(xs, ys, alt);
          } catch (const Error&) {
            row.result.alternative = alt;
            row.result.n_effective = 0;
            row.result.w_plus = 0.0;
            row.result.p_value = 1.0;
            row.result.method = "degenerate_equal";
          }
          report.tests.push_back(std::move(row));
        }
  return report;
}

}  // namespace scmine::metrics
