#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "scmine/corpus.hpp"
#include "scmine/io.hpp"
#include "scmine/rng.hpp"

using namespace scmine;
using corpus::Corpus;
using corpus::Document;

namespace {

Corpus make_corpus(const std::vector<std::pair<std::string, int>>& class_sizes) {
  Corpus c;
  for (const auto& [label, n] : class_sizes)
    for (int i = 0; i < n; ++i) {
      Document d;
      d.source = "contract " + label + std::to_string(i) + " {}";
      d.label = label;
      c.documents.push_back(std::move(d));
    }
  c.rebuild_label_names();
  return c;
}

std::map<std::string, std::size_t> label_counts(const Corpus& c) {
  std::map<std::string, std::size_t> out;
  for (const auto& d : c.documents) ++out[d.label];
  return out;
}

}  // namespace

TEST_CASE("load_jsonl basics") {
  const auto path = std::filesystem::temp_directory_path() / "scmine_corpus_basic.jsonl";
  io::atomic_write(path,
                   "{\"address\":\"0xAB00000000000000000000000000000000000001\","
                   "\"source\":\"contract A{}\",\"label\":\"Finance\"}\n"
                   "\n"
                   "{\"source\":\"contract B{}\",\"dapp\":\"dex\",\"extra\":1}\n");
  const auto c = corpus::load_jsonl(path);
  REQUIRE(c.size() == 2);
  REQUIRE(c.documents[0].label == "Finance");
  REQUIRE(c.documents[0].address == "0xab00000000000000000000000000000000000001");
  REQUIRE(c.documents[1].dapp == "dex");
  REQUIRE(c.label_names == std::vector<std::string>{"Finance"});
}

TEST_CASE("load_jsonl reports the failing line") {
  const auto path = std::filesystem::temp_directory_path() / "scmine_corpus_bad.jsonl";
  io::atomic_write(path, "{\"source\":\"a\"}\n{\"label\":\"Games\"}\n");
  REQUIRE_THROWS_WITH(corpus::load_jsonl(path), Catch::Matchers::ContainsSubstring("line 2"));

  io::atomic_write(path, "{\"source\":\"a\"}\nnot json\n");
  REQUIRE_THROWS_WITH(corpus::load_jsonl(path), Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("jsonl round-trip is lossless and reload deterministic") {
  auto c = make_corpus({{"A", 3}, {"B", 2}});
  c.documents[0].address = "0x00000000000000000000000000000000000000ff";
  c.documents[1].dapp = "thing";
  const auto path = std::filesystem::temp_directory_path() / "scmine_corpus_rt.jsonl";
  corpus::save_jsonl(c, path);
  const auto c2 = corpus::load_jsonl(path);
  REQUIRE(c2.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    REQUIRE(c2.documents[i].source == c.documents[i].source);
    REQUIRE(c2.documents[i].label == c.documents[i].label);
    REQUIRE(c2.documents[i].address == c.documents[i].address);
    REQUIRE(c2.documents[i].dapp == c.documents[i].dapp);
  }
  REQUIRE(io::read_file(path) == corpus::to_jsonl(c2));
}

TEST_CASE("consolidate keeps the k most frequent labels") {
  const auto c = make_corpus({{"Exchanges", 470},
                              {"Finance", 317},
                              {"Games", 272},
                              {"Gambling", 71},
                              {"High-risk", 60},
                              {"Marketplaces", 44},
                              {"Social", 9}});
  const auto [out, map] = corpus::consolidate_labels(c, 5);
  REQUIRE(map.kept == std::vector<std::string>{"Exchanges", "Finance", "Games", "Gambling",
                                               "High-risk"});
  const auto counts = label_counts(out);
  REQUIRE(counts.at("other") == 53);
  REQUIRE(counts.at("Exchanges") == 470);
  REQUIRE(counts.count("Marketplaces") == 0);
}

TEST_CASE("consolidate breaks rank ties lexicographically") {
  const auto c = make_corpus({{"beta", 5}, {"alpha", 5}, {"gamma", 7}});
  const auto [out, map] = corpus::consolidate_labels(c, 2);
  REQUIRE(map.kept == std::vector<std::string>{"gamma", "alpha"});
  REQUIRE(label_counts(out).at("other") == 5);
}

TEST_CASE("consolidate with exactly k labels relabels nothing") {
  const auto c = make_corpus({{"A", 2}, {"B", 3}});
  const auto [out, map] = corpus::consolidate_labels(c, 2);
  REQUIRE(label_counts(out).count("other") == 0);
}

TEST_CASE("consolidate is idempotent") {
  const auto c = make_corpus({{"A", 5}, {"B", 4}, {"C", 3}, {"D", 2}});
  const auto [once, m1] = corpus::consolidate_labels(c, 2);
  const auto [twice, m2] = corpus::consolidate_labels(once, 2);
  for (std::size_t i = 0; i < once.size(); ++i)
    REQUIRE(once.documents[i].label == twice.documents[i].label);
}

TEST_CASE("split is stratified with round-half-up per class") {
  const auto c = make_corpus({{"A", 10}, {"B", 5}});
  corpus::SplitSpec spec;
  spec.test_fraction = 0.2;
  spec.seed = 11;
  const auto [train, test] = corpus::train_test_split(c, spec);
  const auto tc = label_counts(test);
  REQUIRE(tc.at("A") == 2);
  REQUIRE(tc.at("B") == 1);
  REQUIRE(train.size() + test.size() == c.size());
}

TEST_CASE("split of one 100-doc class at 0.2 yields 20") {
  const auto c = make_corpus({{"A", 100}});
  corpus::SplitSpec spec;
  spec.test_fraction = 0.2;
  spec.seed = 3;
  const auto [train, test] = corpus::train_test_split(c, spec);
  REQUIRE(test.size() == 20);
  REQUIRE(train.size() == 80);
}

TEST_CASE("split is deterministic and disjoint") {
  const auto c = make_corpus({{"A", 20}, {"B", 9}});
  corpus::SplitSpec spec;
  spec.test_fraction = 0.3;
  spec.seed = 42;
  const auto [tr1, te1] = corpus::train_test_split(c, spec);
  const auto [tr2, te2] = corpus::train_test_split(c, spec);
  REQUIRE(corpus::to_jsonl(tr1) == corpus::to_jsonl(tr2));
  REQUIRE(corpus::to_jsonl(te1) == corpus::to_jsonl(te2));

  std::set<std::string> seen;
  for (const auto& d : tr1.documents) seen.insert(d.source);
  for (const auto& d : te1.documents) REQUIRE(seen.count(d.source) == 0);
}

TEST_CASE("split rejects a class with fewer than 2 documents") {
  const auto c = make_corpus({{"A", 5}, {"Tiny", 1}});
  corpus::SplitSpec spec;
  REQUIRE_THROWS_WITH(corpus::train_test_split(c, spec),
                      Catch::Matchers::ContainsSubstring("Tiny"));
}

TEST_CASE("split requires consolidated labels") {
  auto c = make_corpus({{"A", 4}});
  c.documents[2].label.clear();
  corpus::SplitSpec spec;
  REQUIRE_THROWS_WITH(corpus::train_test_split(c, spec),
                      Catch::Matchers::ContainsSubstring("consolidate"));
}

TEST_CASE("kfold partitions the corpus") {
  const auto c = make_corpus({{"A", 6}, {"B", 3}});
  const auto result = corpus::kfold(c, 3, 5);
  REQUIRE(result.folds.size() == 3);
  std::vector<std::size_t> all;
  for (const auto& f : result.folds) {
    REQUIRE(f.validation.size() == 3);
    all.insert(all.end(), f.validation.begin(), f.validation.end());
    std::set<std::size_t> train_set(f.train.begin(), f.train.end());
    for (std::size_t v : f.validation) REQUIRE(train_set.count(v) == 0);
    REQUIRE(f.train.size() + f.validation.size() == c.size());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(all[i] == i);
}

TEST_CASE("kfold stratification: per-class fold sizes differ by at most one") {
  rng::Xoshiro256ss gen(123);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(gen.below(4));
    std::vector<std::pair<std::string, int>> sizes;
    const std::size_t n_classes = 1 + gen.below(4);
    for (std::size_t ci = 0; ci < n_classes; ++ci)
      sizes.emplace_back("c" + std::to_string(ci), k + static_cast<int>(gen.below(20)));
    const auto c = make_corpus(sizes);
    const auto result = corpus::kfold(c, k, gen.next());
    for (const auto& [label, n] : sizes) {
      std::vector<std::size_t> per_fold;
      for (const auto& f : result.folds) {
        std::size_t count = 0;
        for (std::size_t v : f.validation)
          if (c.documents[v].label == label) ++count;
        per_fold.push_back(count);
      }
      const auto [lo, hi] = std::minmax_element(per_fold.begin(), per_fold.end());
      REQUIRE(*hi - *lo <= 1);
    }
  }
}

TEST_CASE("kfold warns about classes smaller than k") {
  const auto c = make_corpus({{"A", 6}, {"Rare", 2}});
  const auto result = corpus::kfold(c, 3, 1);
  REQUIRE(result.warnings.size() == 1);
  REQUIRE(result.warnings[0].find("Rare") != std::string::npos);
}

TEST_CASE("comment filter boundaries") {
  REQUIRE(!corpus::comments_long_enough("abc"));
  REQUIRE(corpus::comments_long_enough("one two three four five six"));
  REQUIRE(corpus::comments_long_enough("ab c d e f"));      // exactly 10 scalars, 5 words
  REQUIRE(!corpus::comments_long_enough("ab cd ef gh"));    // 11 scalars but 4 words
  REQUIRE(!corpus::comments_long_enough("a b c d e"));      // 5 words but 9 scalars
  REQUIRE(corpus::comments_long_enough("a b c d e f"));     // 11 scalars, 6 words
}

TEST_CASE("comment filter counts unicode scalars, not bytes") {
  // Five two-byte scalars plus four spaces: 9 scalars in 14 bytes.
  REQUIRE(!corpus::comments_long_enough("ä ö ü å é"));
  // Ten scalars across five words.
  REQUIRE(corpus::comments_long_enough("ää öö üü åå éé"));
}

TEST_CASE("filter_short_comments reports retained indices and excluded fraction") {
  const std::vector<std::string> views = {"", "plenty of words in this comment view",
                                          "tiny", "five words make the cut"};
  const auto r = corpus::filter_short_comments(views);
  REQUIRE(r.retained == std::vector<std::size_t>{1, 3});
  REQUIRE(r.excluded == 2);
  REQUIRE(r.excluded_fraction == Catch::Approx(0.5));
}

TEST_CASE("ingest_dir walks sorted and labels from parent directories") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "scmine_ingest_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "games");
  fs::create_directories(dir / "finance");
  io::atomic_write(dir / "games" / "b.sol", "contract B {}");
  io::atomic_write(dir / "games" / "a.sol", "contract A {}");
  io::atomic_write(dir / "finance" / "c.sol", "contract C {}");
  io::atomic_write(dir / "finance" / "skip.txt", "not solidity");
  io::atomic_write(dir / "finance" / "empty.sol", "");

  const auto labeled = corpus::ingest_dir(dir, true);
  REQUIRE(labeled.size() == 3);
  REQUIRE(labeled.documents[0].label == "finance");
  REQUIRE(labeled.documents[0].source == "contract C {}");
  REQUIRE(labeled.documents[1].label == "games");
  REQUIRE(labeled.documents[1].source == "contract A {}");

  const auto unlabeled = corpus::ingest_dir(dir, false);
  REQUIRE(unlabeled.documents[0].label.empty());
  fs::remove_all(dir);
}

TEST_CASE("subset keeps corpus order") {
  const auto c = make_corpus({{"A", 5}});
  const auto s = corpus::subset(c, {4, 1});
  REQUIRE(s.size() == 2);
  REQUIRE(s.documents[0].source == c.documents[1].source);
  REQUIRE(s.documents[1].source == c.documents[4].source);
}
