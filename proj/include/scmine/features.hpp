#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scmine/error.hpp"
#include "scmine/extract.hpp"
#include "scmine/sparse.hpp"

// Tokenization, vocabulary fitting, TF-IDF vectorization and class-based
// TF-IDF statistics.
//
// TF-IDF variant: tf = raw count, idf(t) = ln((1 + n_docs) / (1 + df_t)) + 1,
// rows L2-normalized (zero rows stay zero). Both idf and c-TF-IDF use the
// natural logarithm; the base only rescales weights and cannot change any
// ranking.

namespace scmine::features {

namespace detail {

inline bool ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == '$';
}
inline bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
inline bool number_char(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F') || c == 'x' ||
         c == '.';
}
inline bool punct_char(char c) {
  static constexpr std::string_view kPunct = "(){}[];,.=+-*/<>!&|^%~?:";
  return kPunct.find(c) != std::string_view::npos;
}

}  // namespace detail

// Code tokens: identifiers/keywords `[A-Za-z_$][A-Za-z0-9_$]*`, numbers
// `[0-9][0-9a-fA-Fx.]*`, and single-character punctuation from the set
// `(){}[];,.=+-*/<>!&|^%~?:`. Whitespace discarded, case preserved.
inline std::vector<std::string> tokenize_code(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (detail::ident_start(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && detail::ident_char(text[j])) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (c >= '0' && c <= '9') {
      std::size_t j = i + 1;
      while (j < text.size() && detail::number_char(text[j])) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (detail::punct_char(c)) {
      tokens.emplace_back(1, c);
      ++i;
    } else {
      ++i;
    }
  }
  return tokens;
}

// Natural-language tokens: lowercase, split on non-alphanumeric, tokens
// shorter than 2 characters dropped.
inline std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2) tokens.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'))
      cur += c;
    else
      flush();
  }
  flush();
  return tokens;
}

struct Vocabulary {
  std::vector<std::string> terms;  // sorted lexicographically
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::uint32_t> doc_freq;  // aligned with terms
  std::size_t n_docs = 0;

  std::size_t size() const { return terms.size(); }

  double idf(std::uint32_t term_id) const {
    return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(doc_freq[term_id]))) +
           1.0;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"terms", terms}, {"doc_freq", doc_freq}, {"n_docs", n_docs}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.terms = j.at("terms").get<std::vector<std::string>>();
    v.doc_freq = j.at("doc_freq").get<std::vector<std::uint32_t>>();
    v.n_docs = j.at("n_docs").get<std::size_t>();
    if (v.doc_freq.size() != v.terms.size()) throw Error("vocabulary: doc_freq/terms size mismatch");
    for (std::uint32_t i = 0; i < v.terms.size(); ++i) v.index[v.terms[i]] = i;
    return v;
  }
};

using TokenLists = std::vector<std::vector<std::string>>;

// Terms present in at least min_df documents, sorted lexicographically.
inline Vocabulary fit_vocabulary(const TokenLists& docs, std::uint32_t min_df = 1) {
  if (min_df < 1) throw Error("fit_vocabulary: min_df must be >= 1");
  if (docs.empty()) throw Error("fit_vocabulary: empty corpus");
  std::map<std::string, std::uint32_t> df;
  std::vector<std::string_view> seen;
  for (const auto& doc : docs) {
    seen.clear();
    for (const auto& tok : doc) seen.push_back(tok);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto tok : seen) {
      auto it = df.find(std::string(tok));
      if (it == df.end())
        df.emplace(std::string(tok), 1);
      else
        ++it->second;
    }
  }
  Vocabulary v;
  v.n_docs = docs.size();
  for (auto& [term, count] : df) {
    if (count < min_df) continue;
    v.index[term] = static_cast<std::uint32_t>(v.terms.size());
    v.terms.push_back(term);
    v.doc_freq.push_back(count);
  }
  return v;
}

// weight(d,t) = tf * idf, rows L2-normalized; out-of-vocabulary tokens
// ignored so unseen documents transform cleanly.
inline SparseMatrix tfidf(const TokenLists& docs, const Vocabulary& vocab) {
  SparseMatrix m;
  m.n_rows = docs.size();
  m.n_cols = vocab.size();
  m.rows.resize(docs.size());
  std::unordered_map<std::uint32_t, double> counts;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    counts.clear();
    for (const auto& tok : docs[d]) {
      auto it = vocab.index.find(tok);
      if (it != vocab.index.end()) counts[it->second] += 1.0;
    }
    auto& row = m.rows[d];
    row.reserve(counts.size());
    for (const auto& [col, tf] : counts) row.push_back({col, tf * vocab.idf(col)});
    std::sort(row.begin(), row.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.col < b.col; });
    double norm = 0.0;
    for (const auto& e : row) norm += e.value * e.value;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& e : row) e.value /= norm;
  }
  return m;
}

inline std::pair<Vocabulary, SparseMatrix> fit_transform(const TokenLists& docs,
                                                         std::uint32_t min_df = 1) {
  Vocabulary v = fit_vocabulary(docs, min_df);
  return {v, tfidf(docs, v)};
}

// Raw per-class term counts feeding the c-TF-IDF weighting. Terms are the
// union of tokens over all documents, sorted lexicographically.
struct ClassTermStats {
  std::vector<std::string> class_names;
  std::vector<std::string> terms;
  std::unordered_map<std::string, std::uint32_t> term_index;
  std::vector<std::vector<double>> term_freq;  // class x term counts t_i
  std::vector<double> class_word_total;        // w_i
  std::vector<double> term_total;              // sum_j t_j per term
  std::size_t m = 0;                           // number of documents
};

inline ClassTermStats class_term_stats(const TokenLists& docs,
                                       const std::vector<std::size_t>& class_ids,
                                       const std::vector<std::string>& class_names) {
  if (docs.size() != class_ids.size())
    throw Error("class_term_stats: documents and class assignments differ in length");
  ClassTermStats s;
  s.class_names = class_names;
  s.m = docs.size();

  std::map<std::string, std::uint32_t> term_set;
  for (const auto& doc : docs)
    for (const auto& tok : doc) term_set.emplace(tok, 0);
  s.terms.reserve(term_set.size());
  for (auto& [term, id] : term_set) {
    id = static_cast<std::uint32_t>(s.terms.size());
    s.terms.push_back(term);
  }
  s.term_index.insert(term_set.begin(), term_set.end());

  s.term_freq.assign(class_names.size(), std::vector<double>(s.terms.size(), 0.0));
  s.class_word_total.assign(class_names.size(), 0.0);
  s.term_total.assign(s.terms.size(), 0.0);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const std::size_t c = class_ids[d];
    if (c >= class_names.size()) throw Error("class_term_stats: class id out of range");
    for (const auto& tok : docs[d]) {
      const std::uint32_t t = s.term_index.at(tok);
      s.term_freq[c][t] += 1.0;
      s.class_word_total[c] += 1.0;
      s.term_total[t] += 1.0;
    }
  }
  return s;
}

// weight(i,t) = (t_i / w_i) * ln(m / sum_j t_j). The log factor may be
// negative when a term's corpus frequency exceeds m; rankings use the raw
// weight. With m_is_classes the document count is replaced by the class
// count.
inline std::vector<std::vector<double>> ctfidf(const ClassTermStats& s, bool m_is_classes = false) {
  const double m = m_is_classes ? static_cast<double>(s.class_names.size())
                                : static_cast<double>(s.m);
  std::vector<std::vector<double>> w(s.class_names.size(),
                                     std::vector<double>(s.terms.size(), 0.0));
  for (std::size_t c = 0; c < s.class_names.size(); ++c) {
    if (s.class_word_total[c] <= 0.0) continue;  // empty class: zero row
    for (std::size_t t = 0; t < s.terms.size(); ++t) {
      if (s.term_freq[c][t] == 0.0) continue;
      w[c][t] = (s.term_freq[c][t] / s.class_word_total[c]) * std::log(m / s.term_total[t]);
    }
  }
  return w;
}

// Top-n positive-weight terms of one class, weight descending, ties broken
// lexicographically.
inline std::vector<std::pair<std::string, double>> top_terms(
    const std::vector<std::vector<double>>& weights, const ClassTermStats& s,
    const std::string& class_name, std::size_t n) {
  if (n < 1) throw Error("top_terms: n must be >= 1");
  auto it = std::find(s.class_names.begin(), s.class_names.end(), class_name);
  if (it == s.class_names.end()) throw Error("top_terms: unknown class '" + class_name + "'");
  const std::size_t c = static_cast<std::size_t>(it - s.class_names.begin());

  std::vector<std::pair<std::string, double>> ranked;
  for (std::size_t t = 0; t < s.terms.size(); ++t)
    if (weights[c][t] > 0.0) ranked.emplace_back(s.terms[t], weights[c][t]);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > n) ranked.resize(n);
  return ranked;
}

// Comments are natural language, everything else is code.
inline std::vector<std::string> tokens_for_mode(std::string_view text,
                                                extract::FeatureMode mode) {
  return mode == extract::FeatureMode::OnlyComments ? tokenize_text(text) : tokenize_code(text);
}

inline std::uint32_t default_min_df(extract::FeatureMode mode) {
  return mode == extract::FeatureMode::OnlyComments ? 1 : 2;
}

}  // namespace scmine::features
