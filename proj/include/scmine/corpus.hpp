#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scmine/error.hpp"
#include "scmine/io.hpp"
#include "scmine/rng.hpp"

// Corpus model: JSONL ingestion, directory ingestion, label consolidation
// into the K most frequent categories plus "other", seeded stratified
// splitting / k-folding, and the short-comment filter.
//
// Randomized procedures use one Xoshiro256ss seeded from the user seed (see
// rng.hpp); classes are visited in sorted label order and documents within a
// class in corpus order, each class's index list shuffled by Fisher-Yates.
// This fixes the exact byte-level outcome for a given (corpus, seed).

namespace scmine::corpus {

struct Document {
  std::string address;  // "0x" + 40 lowercase hex, or empty
  std::string source;
  std::string label;  // empty = unlabeled
  std::string dapp;   // empty = unknown
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<std::string> label_names;  // distinct labels in first-appearance order

  std::size_t size() const { return documents.size(); }

  void rebuild_label_names() {
    label_names.clear();
    for (const auto& d : documents) {
      if (d.label.empty()) continue;
      if (std::find(label_names.begin(), label_names.end(), d.label) == label_names.end())
        label_names.push_back(d.label);
    }
  }
};

struct LabelMap {
  std::vector<std::string> kept;
  std::string other_name = "other";

  std::string map(const std::string& label) const {
    if (std::find(kept.begin(), kept.end(), label) != kept.end()) return label;
    return other_name;
  }
};

struct SplitSpec {
  double test_fraction = 0.2;
  int folds = 3;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string normalize_address(const std::string& a, std::size_t line_no) {
  if (a.empty()) return a;
  if (a.size() != 42 || a[0] != '0' || (a[1] != 'x' && a[1] != 'X'))
    throw Error("invalid address at line " + std::to_string(line_no) + ": " + a);
  std::string out = "0x";
  for (std::size_t i = 2; i < a.size(); ++i) {
    char c = a[i];
    if (c >= 'A' && c <= 'F') c = static_cast<char>(c - 'A' + 'a');
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')))
      throw Error("invalid address at line " + std::to_string(line_no) + ": " + a);
    out += c;
  }
  return out;
}

inline bool is_blank(std::string_view line) {
  for (char c : line)
    if (c != ' ' && c != '\t' && c != '\r') return false;
  return true;
}

}  // namespace detail

// One JSON object per non-blank line: {"source": str required,
// "address"/"label"/"dapp": str optional}; unknown fields ignored.
inline Corpus load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed JSON at line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw Error("expected object at line " + std::to_string(line_no));
    if (!j.contains("source") || !j["source"].is_string() ||
        j["source"].get<std::string>().empty())
      throw Error("missing source at line " + std::to_string(line_no));
    Document d;
    d.source = j["source"].get<std::string>();
    if (j.contains("address") && j["address"].is_string())
      d.address = detail::normalize_address(j["address"].get<std::string>(), line_no);
    if (j.contains("label") && j["label"].is_string()) d.label = j["label"].get<std::string>();
    if (j.contains("dapp") && j["dapp"].is_string()) d.dapp = j["dapp"].get<std::string>();
    corpus.documents.push_back(std::move(d));
  }
  corpus.rebuild_label_names();
  return corpus;
}

inline std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents) {
    nlohmann::json j;
    if (!d.address.empty()) j["address"] = d.address;
    j["source"] = d.source;
    if (!d.label.empty()) j["label"] = d.label;
    if (!d.dapp.empty()) j["dapp"] = d.dapp;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void save_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  io::atomic_write(path, to_jsonl(corpus));
}

// Every *.sol file under `dir` (recursive) becomes a Document, in sorted
// path order. With labels_from_dirs the immediate parent directory name is
// the label.
inline Corpus ingest_dir(const std::filesystem::path& dir, bool labels_from_dirs) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir) || !fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".sol")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Corpus corpus;
  for (const auto& f : files) {
    Document d;
    d.source = io::read_file(f);
    if (d.source.empty()) continue;
    if (labels_from_dirs) d.label = f.parent_path().filename().string();
    corpus.documents.push_back(std::move(d));
  }
  corpus.rebuild_label_names();
  return corpus;
}

// Keep the k most frequent labels (ties to the lexicographically smaller),
// rewrite every other label to "other"; unlabeled documents untouched.
// "other" itself never competes for a slot, so reconsolidating is a no-op.
inline std::pair<Corpus, LabelMap> consolidate_labels(const Corpus& corpus, std::size_t k) {
  if (k < 1) throw Error("consolidate_labels: k must be >= 1");
  std::map<std::string, std::size_t> counts;
  bool any_labeled = false;
  for (const auto& d : corpus.documents)
    if (!d.label.empty()) {
      any_labeled = true;
      if (d.label != "other") ++counts[d.label];
    }
  if (!any_labeled) throw Error("consolidate_labels: corpus has no labeled documents");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;  // tie: lexicographically smaller kept first
  });

  LabelMap map;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) map.kept.push_back(ranked[i].first);

  Corpus out = corpus;
  for (auto& d : out.documents)
    if (!d.label.empty()) d.label = map.map(d.label);
  out.rebuild_label_names();
  return {std::move(out), std::move(map)};
}

namespace detail {

// label -> document indices, labels sorted, indices in corpus order.
inline std::map<std::string, std::vector<std::size_t>> by_class(const Corpus& corpus) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    const auto& d = corpus.documents[i];
    if (d.label.empty())
      throw Error("unlabeled document at index " + std::to_string(i) +
                  " (consolidate labels first)");
    groups[d.label].push_back(i);
  }
  return groups;
}

inline Corpus take(const Corpus& corpus, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  Corpus out;
  for (std::size_t i : indices) out.documents.push_back(corpus.documents[i]);
  out.rebuild_label_names();
  return out;
}

}  // namespace detail

// Stratified train/test split: per class, round-half-up(test_fraction *
// class_size) documents go to test, chosen by seeded shuffle.
inline std::pair<Corpus, Corpus> train_test_split(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw Error("test_fraction must lie in (0,1)");
  auto groups = detail::by_class(corpus);
  rng::Xoshiro256ss gen(spec.seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [label, idx] : groups) {
    if (idx.size() < 2)
      throw Error("cannot stratify: class '" + label + "' has fewer than 2 documents");
    rng::fisher_yates(idx, gen);
    const auto n_test =
        static_cast<std::size_t>(std::floor(spec.test_fraction * static_cast<double>(idx.size()) + 0.5));
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < n_test ? test_idx : train_idx).push_back(idx[i]);
  }
  return {detail::take(corpus, std::move(train_idx)), detail::take(corpus, std::move(test_idx))};
}

struct Fold {
  std::vector<std::size_t> train;       // document indices into the input corpus
  std::vector<std::size_t> validation;  // fold i's validation = fold i
};

struct KFoldResult {
  std::vector<Fold> folds;
  std::vector<std::string> warnings;
};

// Seeded stratified k-fold: per class the shuffled indices are dealt
// round-robin, so per-class fold sizes differ by at most one. A class
// smaller than k is distributed best-effort with a warning.
inline KFoldResult kfold(const Corpus& corpus, int k, std::uint64_t seed) {
  if (k < 2) throw Error("kfold: k must be >= 2");
  if (corpus.size() < static_cast<std::size_t>(k))
    throw Error("kfold: corpus smaller than fold count");
  auto groups = detail::by_class(corpus);
  rng::Xoshiro256ss gen(seed);

  KFoldResult result;
  std::vector<std::vector<std::size_t>> fold_members(static_cast<std::size_t>(k));
  for (auto& [label, idx] : groups) {
    if (idx.size() < static_cast<std::size_t>(k))
      result.warnings.push_back("class '" + label + "' has fewer documents (" +
                                std::to_string(idx.size()) + ") than folds (" + std::to_string(k) +
                                "); distributed best-effort");
    rng::fisher_yates(idx, gen);
    for (std::size_t i = 0; i < idx.size(); ++i)
      fold_members[i % static_cast<std::size_t>(k)].push_back(idx[i]);
  }

  for (std::size_t f = 0; f < fold_members.size(); ++f) {
    Fold fold;
    fold.validation = fold_members[f];
    std::sort(fold.validation.begin(), fold.validation.end());
    for (std::size_t g = 0; g < fold_members.size(); ++g) {
      if (g == f) continue;
      fold.train.insert(fold.train.end(), fold_members[g].begin(), fold_members[g].end());
    }
    std::sort(fold.train.begin(), fold.train.end());
    result.folds.push_back(std::move(fold));
  }
  return result;
}

inline Corpus subset(const Corpus& corpus, const std::vector<std::size_t>& indices) {
  return detail::take(corpus, indices);
}

// Comment-length filter: keep documents whose comment view has at least 10
// Unicode scalars AND at least 5 whitespace-delimited words (boundaries
// retained).
inline bool comments_long_enough(std::string_view comments) {
  std::size_t scalars = 0;
  for (unsigned char c : comments)
    if ((c & 0xC0) != 0x80) ++scalars;
  std::size_t words = 0;
  bool in_word = false;
  for (char c : comments) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return scalars >= 10 && words >= 5;
}

struct CommentFilterResult {
  std::vector<std::size_t> retained;  // indices into the input list
  std::size_t excluded = 0;
  double excluded_fraction = 0.0;
};

inline CommentFilterResult filter_short_comments(const std::vector<std::string>& comment_views) {
  CommentFilterResult r;
  for (std::size_t i = 0; i < comment_views.size(); ++i) {
    if (comments_long_enough(comment_views[i]))
      r.retained.push_back(i);
    else
      ++r.excluded;
  }
  r.excluded_fraction =
      comment_views.empty() ? 0.0
                            : static_cast<double>(r.excluded) / static_cast<double>(comment_views.size());
  return r;
}

}  // namespace scmine::corpus
