#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scmine/cluster.hpp"
#include "scmine/corpus.hpp"
#include "scmine/embed.hpp"
#include "scmine/error.hpp"
#include "scmine/extract.hpp"
#include "scmine/features.hpp"
#include "scmine/fetch.hpp"
#include "scmine/io.hpp"
#include "scmine/linmodel.hpp"
#include "scmine/manifest.hpp"
#include "scmine/metrics.hpp"
#include "scmine/rng.hpp"
#include "scmine/svg.hpp"
#include "scmine/version.hpp"

namespace scmine::cli {

inline int run(std::vector<std::string> args);

namespace detail {

inline void emit_manifest(const std::string& command, const std::vector<std::string>& raw_args,
                          const std::map<std::string, std::string>& inputs,
                          const std::vector<std::string>& outputs, const std::string& primary) {
  manifest::RunManifest m;
  m.command = command;
  m.args = raw_args;
  m.created_utc = io::utc_now_iso();
  m.inputs = inputs;
  m.outputs = outputs;
  manifest::write(m, manifest::path_for(primary));
}

inline std::map<std::string, std::string> file_inputs(const std::vector<std::string>& paths) {
  std::map<std::string, std::string> out;
  for (const auto& p : paths) out[p] = manifest::fingerprint_file(p);
  return out;
}

inline std::string vocabulary_fingerprint(const features::Vocabulary& vocab) {
  std::string joined;
  for (const auto& t : vocab.terms) {
    joined += t;
    joined += '\n';
  }
  return io::fnv1a64_hex(joined);
}

inline features::TokenLists mode_tokens(const corpus::Corpus& c, extract::FeatureMode mode) {
  features::TokenLists lists;
  lists.reserve(c.size());
  for (const auto& d : c.documents)
    lists.push_back(features::tokens_for_mode(extract::render(d.source, mode), mode));
  return lists;
}

inline corpus::Corpus drop_unlabeled(const corpus::Corpus& c, const char* context) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!c.documents[i].label.empty()) keep.push_back(i);
  if (keep.size() < c.size())
    std::cerr << context << ": skipping " << (c.size() - keep.size())
              << " unlabeled document(s)\n";
  return corpus::subset(c, keep);
}

inline std::string csv_opt(const std::optional<double>& v) {
  return v ? io::fmt_double(*v) : std::string();
}

struct ModelBundle {
  linmodel::OvRModel ovr;
  features::Vocabulary vocab;
  extract::FeatureMode mode = extract::FeatureMode::FullCode;
  std::uint32_t min_df = 1;
  linmodel::Penalty penalty = linmodel::Penalty::L2;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  return nlohmann::json{{"format", "scmine-model"},
                        {"version", kVersion},
                        {"mode", extract::to_string(b.mode)},
                        {"min_df", b.min_df},
                        {"penalty", linmodel::to_string(b.penalty)},
                        {"lambda", b.lambda},
                        {"seed", b.seed},
                        {"vocabulary", b.vocab.to_json()},
                        {"vocabulary_fingerprint", vocabulary_fingerprint(b.vocab)},
                        {"model", linmodel::ovr_to_json(b.ovr)}};
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "scmine-model")
    throw Error("not a model file");
  ModelBundle b;
  b.mode = extract::mode_from_string(j.at("mode").get<std::string>());
  b.min_df = j.at("min_df").get<std::uint32_t>();
  b.penalty = linmodel::penalty_from_string(j.at("penalty").get<std::string>());
  b.lambda = j.at("lambda").get<double>();
  b.seed = j.value("seed", std::uint64_t{0});
  b.vocab = features::Vocabulary::from_json(j.at("vocabulary"));
  b.ovr = linmodel::ovr_from_json(j.at("model"));
  const auto expect = j.at("vocabulary_fingerprint").get<std::string>();
  if (vocabulary_fingerprint(b.vocab) != expect)
    throw Error("model file is corrupt: vocabulary fingerprint mismatch");
  return b;
}

inline ModelBundle load_bundle(const std::string& path) {
  try {
    return bundle_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("cannot read model " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- fetch

struct FetchOpts {
  std::string addresses;
  std::string out = "corpus.jsonl";
  std::string base_url = "https://api.etherscan.io/api";
  std::string cache_dir = "cache";
  double rate_limit = 5.0;
  double timeout = 30.0;
  int max_retries = 3;
};

inline std::vector<std::string> read_address_lines(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<std::string> out;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    if (line[start] == '#') continue;
    out.push_back(line.substr(start));
  }
  return out;
}

inline void cmd_fetch(const FetchOpts& o, const std::vector<std::string>& raw) {
  const auto addresses = read_address_lines(o.addresses);
  if (addresses.empty()) throw Error("no addresses in " + o.addresses);

  fetch::FetchConfig cfg;
  cfg.base_url = o.base_url;
  cfg.cache_dir = o.cache_dir;
  cfg.rate_limit = o.rate_limit;
  cfg.timeout = o.timeout;
  cfg.max_retries = o.max_retries;
  if (const char* key = std::getenv("SCMINE_API_KEY"); key != nullptr)
    cfg.api_key = key;
  if (cfg.api_key.empty()) std::cerr << "fetch: SCMINE_API_KEY is not set\n";

  fetch::SystemClock clock;
  fetch::Client client(cfg, clock);
  const auto batch = client.fetch_batch(addresses);
  for (const auto& e : batch.errors) std::cerr << "fetch: " << e.input << ": " << e.message << '\n';

  corpus::save_jsonl(fetch::to_corpus(batch.records), o.out);
  std::cerr << "fetch: wrote " << batch.records.size() << " of " << addresses.size()
            << " contract(s) to " << o.out << '\n';
  emit_manifest("fetch", raw, file_inputs({o.addresses}), {o.out}, o.out);
}

// ---------------------------------------------------------------- ingest

struct IngestOpts {
  std::string dir;
  std::string jsonl;
  std::string out = "corpus.jsonl";
  bool labels_from_dirs = false;
};

inline std::string dir_fingerprint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".sol")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += f.string();
    acc += '\0';
    acc += manifest::fingerprint_file(f);
    acc += '\n';
  }
  return io::fnv1a64_hex(acc);
}

inline void cmd_ingest(const IngestOpts& o, const std::vector<std::string>& raw) {
  corpus::Corpus c;
  std::map<std::string, std::string> inputs;
  if (!o.dir.empty()) {
    c = corpus::ingest_dir(o.dir, o.labels_from_dirs);
    inputs[o.dir] = dir_fingerprint(o.dir);
  } else {
    c = corpus::load_jsonl(o.jsonl);
    inputs = file_inputs({o.jsonl});
  }
  if (c.size() == 0) throw Error("no documents");
  corpus::save_jsonl(c, o.out);
  std::cerr << "ingest: wrote " << c.size() << " document(s) to " << o.out << '\n';
  emit_manifest("ingest", raw, inputs, {o.out}, o.out);
}

// ---------------------------------------------------------------- extract

struct ExtractOpts {
  std::string corpus;
  std::string mode = "fc";
  std::string out = "extracted.jsonl";
};

inline void cmd_extract(const ExtractOpts& o, const std::vector<std::string>& raw) {
  const auto mode = extract::mode_from_string(o.mode);
  const auto c = corpus::load_jsonl(o.corpus);
  if (c.size() == 0) throw Error("no documents");
  std::string body;
  for (const auto& d : c.documents) {
    nlohmann::json j;
    if (!d.address.empty()) j["address"] = d.address;
    if (!d.label.empty()) j["label"] = d.label;
    j["mode"] = extract::to_string(mode);
    j["text"] = extract::render(d.source, mode);
    body += j.dump();
    body += '\n';
  }
  io::atomic_write(o.out, body);
  emit_manifest("extract", raw, file_inputs({o.corpus}), {o.out}, o.out);
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string corpus;
  std::string mode = "fc";
  std::string model = "ridge";
  std::string lambda;
  int folds = 3;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  std::size_t classes = 5;
  double threshold = 0.5;
  int min_df = -1;
  int max_iter = 1000;
  double tol = 1e-6;
  std::string out = "model.json";
  std::string report;
};

inline std::optional<double> macro_auc(const std::vector<metrics::EvalRow>& rows) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.auc) {
      sum += *r.auc;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline void cmd_train(const TrainOpts& o, const std::vector<std::string>& raw) {
  const auto mode = extract::mode_from_string(o.mode);
  const auto penalty = linmodel::penalty_from_string(o.model);
  const std::uint32_t min_df =
      o.min_df < 0 ? features::default_min_df(mode) : static_cast<std::uint32_t>(o.min_df);

  auto c = drop_unlabeled(corpus::load_jsonl(o.corpus), "train");
  if (c.size() == 0) throw Error("no labeled documents");
  auto [cons, label_map] = corpus::consolidate_labels(c, o.classes);
  const std::vector<std::string> class_names = label_map.kept;

  corpus::SplitSpec spec;
  spec.test_fraction = o.test_fraction;
  spec.folds = o.folds;
  spec.seed = o.seed;
  auto [train_set, test_set] = corpus::train_test_split(cons, spec);
  if (train_set.size() == 0) throw Error("training split is empty");

  const auto train_tokens = mode_tokens(train_set, mode);
  std::vector<std::string> train_labels;
  for (const auto& d : train_set.documents) train_labels.push_back(d.label);

  linmodel::TrainConfig tcfg;
  tcfg.max_iter = o.max_iter;
  tcfg.tol = o.tol;
  tcfg.seed = o.seed;

  std::vector<double> candidates;
  if (o.lambda.empty()) {
    candidates = {penalty == linmodel::Penalty::L1 ? 0.01 : 1.0};
  } else if (o.lambda == "grid") {
    candidates = {0.001, 0.01, 0.1, 1.0, 10.0};
  } else {
    try {
      std::size_t pos = 0;
      candidates = {std::stod(o.lambda, &pos)};
      if (pos != o.lambda.size()) throw std::invalid_argument(o.lambda);
    } catch (const std::exception&) {
      throw Error("--lambda expects a number or 'grid', got '" + o.lambda + "'");
    }
  }
  for (double l : candidates)
    if (!(l > 0.0)) throw Error("--lambda must be positive");

  const auto folds = corpus::kfold(train_set, o.folds, rng::derive_seed(o.seed, 1));
  for (const auto& w : folds.warnings) std::cerr << "train: " << w << '\n';

  struct FoldEval {
    std::vector<metrics::EvalRow> rows;
  };
  auto eval_fold = [&](const corpus::Fold& fold, double lambda) {
    features::TokenLists tr, va;
    std::vector<std::string> ytr, yva;
    for (std::size_t i : fold.train) {
      tr.push_back(train_tokens[i]);
      ytr.push_back(train_labels[i]);
    }
    for (std::size_t i : fold.validation) {
      va.push_back(train_tokens[i]);
      yva.push_back(train_labels[i]);
    }
    const auto vocab = features::fit_vocabulary(tr, min_df);
    const auto Xtr = features::tfidf(tr, vocab);
    const auto Xva = features::tfidf(va, vocab);
    const auto ovr = linmodel::train_ovr(Xtr, ytr, class_names, penalty, lambda, tcfg, o.threshold);
    const auto pred = linmodel::predict_ovr(ovr, Xva);
    FoldEval out;
    out.rows = metrics::evaluate_scores(pred.scores, class_names, yva);
    return out;
  };

  double lambda = candidates.front();
  if (candidates.size() > 1) {
    double best = -std::numeric_limits<double>::infinity();
    for (double cand : candidates) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& fold : folds.folds) {
        if (fold.validation.empty()) continue;
        const auto m = macro_auc(eval_fold(fold, cand).rows);
        if (m) {
          sum += *m;
          ++n;
        }
      }
      const double score = n ? sum / static_cast<double>(n)
                             : -std::numeric_limits<double>::infinity();
      if (score > best) {
        best = score;
        lambda = cand;
      }
    }
    std::cerr << "train: grid selected lambda " << io::fmt_double(lambda) << '\n';
  }

  std::string report_body = "mode,seed,fold,class,auc,ap\n";
  auto append_rows = [&](const std::string& fold_id, const std::vector<metrics::EvalRow>& rows) {
    for (const auto& r : rows) {
      report_body += io::csv_field(extract::to_string(mode)) + "," + std::to_string(o.seed) +
                     "," + fold_id + "," + io::csv_field(r.class_name) + "," +
                     csv_opt(r.auc) + "," + csv_opt(r.ap) + "\n";
    }
  };
  if (!o.report.empty()) {
    for (std::size_t f = 0; f < folds.folds.size(); ++f) {
      if (folds.folds[f].validation.empty()) continue;
      append_rows(std::to_string(f), eval_fold(folds.folds[f], lambda).rows);
    }
  }

  ModelBundle bundle;
  bundle.vocab = features::fit_vocabulary(train_tokens, min_df);
  const auto Xtr = features::tfidf(train_tokens, bundle.vocab);
  bundle.ovr = linmodel::train_ovr(Xtr, train_labels, class_names, penalty, lambda, tcfg,
                                   o.threshold);
  bundle.mode = mode;
  bundle.min_df = min_df;
  bundle.penalty = penalty;
  bundle.lambda = lambda;
  bundle.seed = o.seed;

  if (!o.report.empty() && test_set.size() > 0) {
    const auto test_tokens = mode_tokens(test_set, mode);
    std::vector<std::string> yte;
    for (const auto& d : test_set.documents) yte.push_back(d.label);
    const auto Xte = features::tfidf(test_tokens, bundle.vocab);
    const auto pred = linmodel::predict_ovr(bundle.ovr, Xte);
    append_rows("test", metrics::evaluate_scores(pred.scores, class_names, yte));
  }

  io::atomic_write(o.out, bundle_to_json(bundle).dump(2) + "\n");
  std::vector<std::string> outputs = {o.out};
  if (!o.report.empty()) {
    io::atomic_write(o.report, report_body);
    outputs.push_back(o.report);
  }
  emit_manifest("train", raw, file_inputs({o.corpus}), outputs, o.out);
}

// ---------------------------------------------------------------- predict

struct PredictOpts {
  std::string model;
  std::string corpus;
  double threshold = -1.0;
  std::string out = "predictions.csv";
  std::string freq_report;
};

inline void cmd_predict(const PredictOpts& o, const std::vector<std::string>& raw) {
  auto bundle = load_bundle(o.model);
  if (o.threshold >= 0.0) bundle.ovr.other_threshold = o.threshold;
  const auto c = corpus::load_jsonl(o.corpus);
  if (c.size() == 0) throw Error("no documents");

  const auto tokens = mode_tokens(c, bundle.mode);
  const auto X = features::tfidf(tokens, bundle.vocab);
  const auto pred = linmodel::predict_ovr(bundle.ovr, X);

  std::string body = "id,address,assigned";
  for (const auto& name : bundle.ovr.class_names) body += "," + io::csv_field(name);
  body += '\n';
  for (std::size_t i = 0; i < c.size(); ++i) {
    body += std::to_string(i) + "," + io::csv_field(c.documents[i].address) + "," +
            io::csv_field(pred.assigned[i]);
    for (double s : pred.scores[i]) body += "," + io::fmt_double(s);
    body += '\n';
  }
  io::atomic_write(o.out, body);

  std::vector<std::string> outputs = {o.out};
  if (!o.freq_report.empty()) {
    std::map<std::string, std::size_t> counts;
    for (const auto& name : bundle.ovr.class_names) counts[name] = 0;
    counts["other"] = 0;
    for (const auto& a : pred.assigned) ++counts[a];
    std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::string freq = "category,count,fraction\n";
    for (const auto& [name, count] : order)
      freq += io::csv_field(name) + "," + std::to_string(count) + "," +
              io::fmt_double(static_cast<double>(count) / static_cast<double>(c.size())) + "\n";
    io::atomic_write(o.freq_report, freq);
    outputs.push_back(o.freq_report);
  }
  emit_manifest("predict", raw, file_inputs({o.model, o.corpus}), outputs, o.out);
}

// ---------------------------------------------------------------- cluster / embed2d shared

struct ProjectedDocs {
  std::vector<std::size_t> doc_ids;  // original corpus indices
  features::TokenLists tokens;
  SparseMatrix X;
};

// In ocom mode documents whose comments fall below the length floor are
// excluded, and doc_ids keep the original corpus indexing so downstream
// files can be joined.
inline ProjectedDocs prepare_docs(const corpus::Corpus& c, extract::FeatureMode mode,
                                  std::uint32_t min_df, const char* context) {
  std::vector<std::string> texts;
  texts.reserve(c.size());
  for (const auto& d : c.documents) texts.push_back(extract::render(d.source, mode));

  ProjectedDocs out;
  if (mode == extract::FeatureMode::OnlyComments) {
    const auto filter = corpus::filter_short_comments(texts);
    out.doc_ids = filter.retained;
    if (filter.excluded > 0)
      std::cerr << context << ": excluded " << filter.excluded << " of " << c.size()
                << " document(s) with too little comment text\n";
  } else {
    out.doc_ids.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out.doc_ids[i] = i;
  }
  if (out.doc_ids.empty()) throw Error("no documents with usable text");

  for (std::size_t i : out.doc_ids)
    out.tokens.push_back(features::tokens_for_mode(texts[i], mode));
  const auto vocab = features::fit_vocabulary(out.tokens, min_df);
  if (vocab.size() == 0) throw Error("empty vocabulary; lower --min-df or check the corpus");
  out.X = features::tfidf(out.tokens, vocab);
  return out;
}

struct ClusterOpts {
  std::string corpus;
  std::string mode = "ocom";
  std::size_t dims = 5;
  std::size_t k_min = 2;
  std::size_t k_max = 20;
  std::size_t k = 0;  // 0 = pick by elbow sweep
  std::uint64_t seed = 0;
  std::size_t n_init = 10;
  int min_df = -1;
  std::string out = "clusters.csv";
  std::string elbow;
};

inline void cmd_cluster(const ClusterOpts& o, const std::vector<std::string>& raw) {
  const auto mode = extract::mode_from_string(o.mode);
  const std::uint32_t min_df =
      o.min_df < 0 ? features::default_min_df(mode) : static_cast<std::uint32_t>(o.min_df);
  const auto c = corpus::load_jsonl(o.corpus);
  const auto docs = prepare_docs(c, mode, min_df, "cluster");
  const std::size_t n = docs.doc_ids.size();

  const std::size_t dims = std::min({o.dims, n, docs.X.n_cols});
  if (dims < 1) throw Error("cannot reduce to zero dimensions");
  const auto svd = embed::truncated_svd(docs.X, dims, rng::derive_seed(o.seed, 101));
  if (!svd.warning.empty()) std::cerr << "cluster: " << svd.warning << '\n';
  const auto proj = embed::svd_projection(svd);

  std::size_t chosen_k = o.k;
  std::optional<cluster::ElbowCurve> curve;
  if (chosen_k == 0) {
    const std::size_t k_max = std::min(o.k_max, n);
    if (o.k_min < 2 || o.k_min >= k_max)
      throw Error("need 2 <= k-min < k-max <= document count (" + std::to_string(n) + ")");
    curve = cluster::elbow_sweep(proj, o.k_min, k_max, o.seed, o.n_init);
    chosen_k = curve->suggested_k;
    std::cerr << "cluster: elbow suggests k = " << chosen_k << '\n';
  } else if (!o.elbow.empty()) {
    throw Error("--elbow requires the k sweep; drop --k");
  }

  const auto result = cluster::kmeans(proj, chosen_k, rng::derive_seed(o.seed, chosen_k), o.n_init);

  std::string body = "doc_id,cluster\n";
  for (std::size_t i = 0; i < n; ++i)
    body += std::to_string(docs.doc_ids[i]) + "," + std::to_string(result.assignments[i]) + "\n";
  io::atomic_write(o.out, body);

  std::vector<std::string> outputs = {o.out};
  if (!o.elbow.empty()) {
    std::string elbow = "k,db_score,suggested\n";
    for (std::size_t i = 0; i < curve->ks.size(); ++i)
      elbow += std::to_string(curve->ks[i]) + "," + csv_opt(curve->scores[i]) + "," +
               (curve->ks[i] == curve->suggested_k ? "1" : "0") + "\n";
    io::atomic_write(o.elbow, elbow);
    outputs.push_back(o.elbow);
  }
  emit_manifest("cluster", raw, file_inputs({o.corpus}), outputs, o.out);
}

// ---------------------------------------------------------------- topics

struct TopicsOpts {
  std::string clusters;
  std::string corpus;
  std::size_t top = 10;
  std::string ctfidf_m = "documents";
  std::string out = "topics.csv";
};

inline std::vector<std::pair<std::size_t, std::size_t>> read_cluster_rows(
    const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("doc_id", 0) == 0) continue;
    const auto fields = io::csv_split(line);
    if (fields.size() < 2)
      throw Error(path + ": line " + std::to_string(line_no) + ": expected doc_id,cluster");
    try {
      rows.emplace_back(std::stoull(fields[0]), std::stoull(fields[1]));
    } catch (const std::exception&) {
      throw Error(path + ": line " + std::to_string(line_no) + ": expected doc_id,cluster");
    }
  }
  if (rows.empty()) throw Error(path + ": no cluster assignments");
  return rows;
}

inline void cmd_topics(const TopicsOpts& o, const std::vector<std::string>& raw) {
  const auto c = corpus::load_jsonl(o.corpus);
  const auto rows = read_cluster_rows(o.clusters);

  std::size_t k = 0;
  features::TokenLists tokens;
  std::vector<std::size_t> assignments;
  for (const auto& [doc_id, cluster_id] : rows) {
    if (doc_id >= c.size())
      throw Error(o.clusters + ": doc_id " + std::to_string(doc_id) + " out of range");
    tokens.push_back(
        features::tokenize_text(extract::extract(c.documents[doc_id].source).comments));
    assignments.push_back(cluster_id);
    k = std::max(k, cluster_id + 1);
  }

  const auto topics =
      cluster::cluster_topics(assignments, tokens, k, o.top, o.ctfidf_m == "classes");

  std::string body = "cluster,rank,term,weight\n";
  for (std::size_t cid = 0; cid < topics.size(); ++cid)
    for (std::size_t r = 0; r < topics[cid].size(); ++r)
      body += std::to_string(cid) + "," + std::to_string(r + 1) + "," +
              io::csv_field(topics[cid][r].first) + "," + io::fmt_double(topics[cid][r].second) +
              "\n";
  io::atomic_write(o.out, body);
  emit_manifest("topics", raw, file_inputs({o.clusters, o.corpus}), {o.out}, o.out);
}

// ---------------------------------------------------------------- embed2d

struct EmbedOpts {
  std::string corpus;
  std::string mode = "ocom";
  double perplexity = 30.0;
  int iters = 1000;
  std::uint64_t seed = 0;
  int min_df = -1;
  std::string clusters;
  std::string out = "coords.csv";
  std::string svg;
};

inline void cmd_embed2d(const EmbedOpts& o, const std::vector<std::string>& raw) {
  const auto mode = extract::mode_from_string(o.mode);
  const std::uint32_t min_df =
      o.min_df < 0 ? features::default_min_df(mode) : static_cast<std::uint32_t>(o.min_df);
  const auto c = corpus::load_jsonl(o.corpus);
  const auto docs = prepare_docs(c, mode, min_df, "embed2d");

  embed::TsneConfig cfg;
  cfg.perplexity = o.perplexity;
  cfg.iterations = o.iters;
  cfg.seed = o.seed;
  const auto result = embed::tsne(docs.X, cfg);

  std::map<std::size_t, std::size_t> cluster_of;
  if (!o.clusters.empty())
    for (const auto& [doc_id, cluster_id] : read_cluster_rows(o.clusters))
      cluster_of[doc_id] = cluster_id;

  std::string body = "id,x,y,cluster,label\n";
  std::vector<std::string> categories;
  for (std::size_t i = 0; i < docs.doc_ids.size(); ++i) {
    const std::size_t doc_id = docs.doc_ids[i];
    const auto it = cluster_of.find(doc_id);
    const std::string cluster_str =
        it == cluster_of.end() ? std::string() : std::to_string(it->second);
    const std::string& label = c.documents[doc_id].label;
    body += std::to_string(doc_id) + "," + io::fmt_double(result.Y(i, 0)) + "," +
            io::fmt_double(result.Y(i, 1)) + "," + cluster_str + "," + io::csv_field(label) +
            "\n";
    if (!o.clusters.empty())
      categories.push_back(cluster_str.empty() ? "unassigned" : cluster_str);
    else
      categories.push_back(label.empty() ? "all" : label);
  }
  io::atomic_write(o.out, body);

  std::vector<std::string> outputs = {o.out};
  if (!o.svg.empty()) {
    svg::emit_scatter_svg(result.Y, categories, o.svg);
    outputs.push_back(o.svg);
  }
  std::vector<std::string> input_files = {o.corpus};
  if (!o.clusters.empty()) input_files.push_back(o.clusters);
  emit_manifest("embed2d", raw, file_inputs(input_files), outputs, o.out);
}

// ---------------------------------------------------------------- compare-modes

struct CompareOpts {
  std::string corpus;
  std::string modes = "fc,oc,ocom,ef";
  int seeds = 14;
  int folds = 3;
  std::uint64_t seed = 0;
  double lambda = 1.0;
  std::size_t classes = 5;
  std::string average = "macro";
  std::string out = "wilcoxon.csv";
  std::string samples;
};

inline std::vector<extract::FeatureMode> parse_modes(const std::string& s) {
  std::vector<extract::FeatureMode> modes;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, ',')) {
    while (!part.empty() && part.front() == ' ') part.erase(part.begin());
    while (!part.empty() && part.back() == ' ') part.pop_back();
    if (part.empty()) continue;
    modes.push_back(extract::mode_from_string(part));
  }
  if (modes.empty()) throw Error("--modes is empty");
  return modes;
}

inline void cmd_compare(const CompareOpts& o, const std::vector<std::string>& raw) {
  const auto modes = parse_modes(o.modes);
  auto c = drop_unlabeled(corpus::load_jsonl(o.corpus), "compare-modes");
  if (c.size() == 0) throw Error("no labeled documents");
  auto [cons, label_map] = corpus::consolidate_labels(c, o.classes);

  metrics::CompareConfig cfg;
  cfg.n_seeds = o.seeds;
  cfg.folds = o.folds;
  cfg.seed = o.seed;
  cfg.lambda = o.lambda;
  cfg.pooled = o.average == "pooled";
  const auto report = metrics::compare_modes(cons, modes, cfg);

  std::string body = "mode_a,mode_b,metric,alternative,W,p,method\n";
  for (const auto& t : report.tests)
    body += t.mode_a + "," + t.mode_b + "," + t.metric + "," +
            metrics::to_string(t.result.alternative) + "," + io::fmt_double(t.result.w_plus) +
            "," + io::fmt_double(t.result.p_value) + "," + t.result.method + "\n";
  io::atomic_write(o.out, body);

  std::vector<std::string> outputs = {o.out};
  if (!o.samples.empty()) {
    std::string samples = "mode,seed,fold,auc,ap\n";
    for (std::size_t m = 0; m < modes.size(); ++m)
      for (std::size_t i = 0; i < report.auc_samples[m].size(); ++i)
        samples += std::string(extract::to_string(modes[m])) + "," +
                   std::to_string(i / o.folds) + "," +
                   std::to_string(i % o.folds) + "," + io::fmt_double(report.auc_samples[m][i]) +
                   "," + io::fmt_double(report.ap_samples[m][i]) + "\n";
    io::atomic_write(o.samples, samples);
    outputs.push_back(o.samples);
  }
  emit_manifest("compare-modes", raw, file_inputs({o.corpus}), outputs, o.out);
}

// ---------------------------------------------------------------- replay

inline void cmd_replay(const std::string& manifest_path) {
  const auto m = manifest::load(manifest_path);
  if (m.command == "replay") throw Error("refusing to replay a replay manifest");
  std::cerr << "replay: " << m.command;
  for (const auto& a : m.args) std::cerr << ' ' << a;
  std::cerr << '\n';
  const int rc = cli::run(m.args);
  if (rc != 0) throw Error("replayed command exited with code " + std::to_string(rc));
}

}  // namespace detail

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 on success (including --help/--version), 1 on runtime failure,
// 2 on a usage error.
inline int run(std::vector<std::string> args) {
  CLI::App app{"smart-contract corpus mining"};
  app.name("scmine");
  app.set_version_flag("--version", std::string("scmine ") + kVersion);
  app.require_subcommand(1);
  const std::vector<std::string> raw = args;

  detail::FetchOpts fetch_opts;
  auto* fetch_cmd = app.add_subcommand("fetch", "download verified contract sources");
  fetch_cmd->add_option("--addresses", fetch_opts.addresses, "file with one address per line")
      ->required();
  fetch_cmd->add_option("--out", fetch_opts.out, "output corpus (JSONL)");
  fetch_cmd->add_option("--base-url", fetch_opts.base_url, "API endpoint");
  fetch_cmd->add_option("--cache-dir", fetch_opts.cache_dir, "response cache directory");
  fetch_cmd->add_option("--rate-limit", fetch_opts.rate_limit, "max requests per second");
  fetch_cmd->add_option("--timeout", fetch_opts.timeout, "HTTP timeout in seconds");
  fetch_cmd->add_option("--max-retries", fetch_opts.max_retries, "retries per address");
  fetch_cmd->callback([&] { detail::cmd_fetch(fetch_opts, raw); });

  detail::IngestOpts ingest_opts;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a corpus from local files");
  auto* ingest_src = ingest_cmd->add_option_group("source");
  ingest_src->add_option("--dir", ingest_opts.dir, "directory of .sol files");
  ingest_src->add_option("--jsonl", ingest_opts.jsonl, "existing corpus file");
  ingest_src->require_option(1);
  ingest_cmd->add_option("--out", ingest_opts.out, "output corpus (JSONL)");
  ingest_cmd->add_flag("--labels-from-dirs", ingest_opts.labels_from_dirs,
                       "label each file with its parent directory name");
  ingest_cmd->callback([&] { detail::cmd_ingest(ingest_opts, raw); });

  const std::vector<std::string> mode_values = {"fc", "oc", "ocom", "ef"};

  detail::ExtractOpts extract_opts;
  auto* extract_cmd = app.add_subcommand("extract", "write per-document feature text");
  extract_cmd->add_option("--corpus", extract_opts.corpus, "corpus JSONL")->required();
  extract_cmd->add_option("--mode", extract_opts.mode, "feature mode")
      ->check(CLI::IsMember(mode_values));
  extract_cmd->add_option("--out", extract_opts.out, "output JSONL");
  extract_cmd->callback([&] { detail::cmd_extract(extract_opts, raw); });

  detail::TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "fit a one-vs-rest category model");
  train_cmd->add_option("--corpus", train_opts.corpus, "labeled corpus JSONL")->required();
  train_cmd->add_option("--mode", train_opts.mode, "feature mode")
      ->check(CLI::IsMember(mode_values));
  train_cmd->add_option("--model", train_opts.model, "ridge, lasso, or svm")
      ->check(CLI::IsMember({"ridge", "lasso", "svm"}));
  train_cmd->add_option("--lambda", train_opts.lambda,
                        "regularization strength, or 'grid' to cross-validate");
  train_cmd->add_option("--folds", train_opts.folds, "cross-validation folds")
      ->check(CLI::Range(2, 1000));
  train_cmd->add_option("--seed", train_opts.seed, "random seed");
  train_cmd->add_option("--test-fraction", train_opts.test_fraction, "held-out fraction");
  train_cmd->add_option("--classes", train_opts.classes, "labels kept before the other bucket");
  train_cmd->add_option("--threshold", train_opts.threshold, "probability floor for assignment");
  train_cmd->add_option("--min-df", train_opts.min_df, "minimum document frequency");
  train_cmd->add_option("--max-iter", train_opts.max_iter, "optimizer iteration cap");
  train_cmd->add_option("--tol", train_opts.tol, "optimizer stopping tolerance");
  train_cmd->add_option("--out", train_opts.out, "model output (JSON)");
  train_cmd->add_option("--report", train_opts.report, "per-fold evaluation CSV");
  train_cmd->callback([&] { detail::cmd_train(train_opts, raw); });

  detail::PredictOpts predict_opts;
  auto* predict_cmd = app.add_subcommand("predict", "score documents with a trained model");
  predict_cmd->add_option("--model", predict_opts.model, "model JSON")->required();
  predict_cmd->add_option("--corpus", predict_opts.corpus, "corpus JSONL")->required();
  predict_cmd->add_option("--threshold", predict_opts.threshold,
                          "override the stored assignment threshold");
  predict_cmd->add_option("--out", predict_opts.out, "predictions CSV");
  predict_cmd->add_option("--freq-report", predict_opts.freq_report,
                          "category frequency CSV");
  predict_cmd->callback([&] { detail::cmd_predict(predict_opts, raw); });

  detail::ClusterOpts cluster_opts;
  auto* cluster_cmd = app.add_subcommand("cluster", "group documents by comment text");
  cluster_cmd->add_option("--corpus", cluster_opts.corpus, "corpus JSONL")->required();
  cluster_cmd->add_option("--mode", cluster_opts.mode, "feature mode")
      ->check(CLI::IsMember(mode_values));
  cluster_cmd->add_option("--dims", cluster_opts.dims, "SVD dimensions before clustering");
  cluster_cmd->add_option("--k-min", cluster_opts.k_min, "smallest k in the sweep");
  cluster_cmd->add_option("--k-max", cluster_opts.k_max, "largest k in the sweep");
  cluster_cmd->add_option("--k", cluster_opts.k, "fixed cluster count (skips the sweep)");
  cluster_cmd->add_option("--seed", cluster_opts.seed, "random seed");
  cluster_cmd->add_option("--n-init", cluster_opts.n_init, "k-means restarts");
  cluster_cmd->add_option("--min-df", cluster_opts.min_df, "minimum document frequency");
  cluster_cmd->add_option("--out", cluster_opts.out, "assignments CSV");
  cluster_cmd->add_option("--elbow", cluster_opts.elbow, "Davies-Bouldin sweep CSV");
  cluster_cmd->callback([&] { detail::cmd_cluster(cluster_opts, raw); });

  detail::TopicsOpts topics_opts;
  auto* topics_cmd = app.add_subcommand("topics", "rank keywords per cluster");
  topics_cmd->add_option("--clusters", topics_opts.clusters, "assignments CSV")->required();
  topics_cmd->add_option("--corpus", topics_opts.corpus, "corpus JSONL")->required();
  topics_cmd->add_option("--top", topics_opts.top, "terms per cluster");
  topics_cmd->add_option("--ctfidf-m", topics_opts.ctfidf_m,
                         "normalizer for the keyword idf term")
      ->check(CLI::IsMember({"documents", "classes"}));
  topics_cmd->add_option("--out", topics_opts.out, "topics CSV");
  topics_cmd->callback([&] { detail::cmd_topics(topics_opts, raw); });

  detail::EmbedOpts embed_opts;
  auto* embed_cmd = app.add_subcommand("embed2d", "project documents to 2-D");
  embed_cmd->add_option("--corpus", embed_opts.corpus, "corpus JSONL")->required();
  embed_cmd->add_option("--mode", embed_opts.mode, "feature mode")
      ->check(CLI::IsMember(mode_values));
  embed_cmd->add_option("--perplexity", embed_opts.perplexity, "neighborhood size target");
  embed_cmd->add_option("--iters", embed_opts.iters, "gradient descent iterations");
  embed_cmd->add_option("--seed", embed_opts.seed, "random seed");
  embed_cmd->add_option("--min-df", embed_opts.min_df, "minimum document frequency");
  embed_cmd->add_option("--clusters", embed_opts.clusters, "join cluster ids from this CSV");
  embed_cmd->add_option("--out", embed_opts.out, "coordinates CSV");
  embed_cmd->add_option("--svg", embed_opts.svg, "scatter plot SVG");
  embed_cmd->callback([&] { detail::cmd_embed2d(embed_opts, raw); });

  detail::CompareOpts compare_opts;
  auto* compare_cmd = app.add_subcommand("compare-modes", "paired significance tests");
  compare_cmd->add_option("--corpus", compare_opts.corpus, "labeled corpus JSONL")->required();
  compare_cmd->add_option("--modes", compare_opts.modes, "comma-separated feature modes");
  compare_cmd->add_option("--seeds", compare_opts.seeds, "resampling repetitions")
      ->check(CLI::Range(1, 10000));
  compare_cmd->add_option("--folds", compare_opts.folds, "cross-validation folds")
      ->check(CLI::Range(2, 1000));
  compare_cmd->add_option("--seed", compare_opts.seed, "base random seed");
  compare_cmd->add_option("--lambda", compare_opts.lambda, "ridge regularization strength");
  compare_cmd->add_option("--classes", compare_opts.classes,
                          "labels kept before the other bucket");
  compare_cmd->add_option("--average", compare_opts.average, "per-fold score aggregation")
      ->check(CLI::IsMember({"macro", "pooled"}));
  compare_cmd->add_option("--out", compare_opts.out, "test results CSV");
  compare_cmd->add_option("--samples", compare_opts.samples, "per-fold score samples CSV");
  compare_cmd->callback([&] { detail::cmd_compare(compare_opts, raw); });

  std::string replay_path;
  auto* replay_cmd = app.add_subcommand("replay", "re-run the command in a manifest");
  replay_cmd->add_option("manifest", replay_path, "path to a .manifest.json file")->required();
  replay_cmd->callback([&] { detail::cmd_replay(replay_path); });

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace scmine::cli
