#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "scmine/cli.hpp"
#include "scmine/corpus.hpp"
#include "scmine/io.hpp"
#include "scmine/manifest.hpp"
#include "scmine/svg.hpp"

using namespace scmine;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  std::stringstream captured;
  auto* old = std::cerr.rdbuf(captured.rdbuf());
  CliResult res;
  try {
    res.code = cli::run(std::move(args));
  } catch (...) {
    std::cerr.rdbuf(old);
    throw;
  }
  std::cerr.rdbuf(old);
  res.err = captured.str();
  return res;
}

std::vector<std::string> read_lines(const fs::path& path) {
  const std::string text = io::read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

fs::path workspace(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("scmine-cli-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kFixtures = FIXTURE_DIR;

// Etherscan-shaped endpoint that answers per address.
struct MockEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::string seen_apikey;

  MockEndpoint() {
    server.Get("/api", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      seen_apikey = req.get_param_value("apikey");
      const std::string address = req.get_param_value("address");
      nlohmann::json envelope;
      if (address == "0xaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa") {
        envelope = {{"status", "1"},
                    {"message", "OK"},
                    {"result", nlohmann::json::array({{{"SourceCode", ""}}})}};
      } else {
        envelope = {{"status", "1"},
                    {"message", "OK"},
                    {"result",
                     nlohmann::json::array(
                         {{{"SourceCode", "pragma solidity ^0.5.0;\ncontract Fetched { // demo\n }"},
                           {"ContractName", "Fetched"},
                           {"CompilerVersion", "v0.5.17"}}})}};
      }
      res.set_content(envelope.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~MockEndpoint() {
    server.stop();
    thread.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/api"; }
};

}  // namespace

TEST_CASE("cli exit codes") {
  REQUIRE(run_cli({}).code == 2);
  REQUIRE(run_cli({"frobnicate"}).code == 2);
  REQUIRE(run_cli({"--help"}).code == 0);
  REQUIRE(run_cli({"--version"}).code == 0);
  REQUIRE(run_cli({"train"}).code == 2);  // missing --corpus
  REQUIRE(run_cli({"extract", "--corpus", "x.jsonl", "--mode", "sideways"}).code == 2);

  const auto missing = run_cli({"train", "--corpus", "/nonexistent/corpus.jsonl"});
  REQUIRE(missing.code == 1);
  REQUIRE_THAT(missing.err, ContainsSubstring("error:"));

  REQUIRE(run_cli({"replay", "/nonexistent/run.manifest.json"}).code == 1);
}

TEST_CASE("ingest requires exactly one source") {
  const auto dir = workspace("ingest-args");
  REQUIRE(run_cli({"ingest", "--out", (dir / "c.jsonl").string()}).code == 2);
  REQUIRE(run_cli({"ingest", "--dir", kFixtures + "/contracts", "--jsonl", "x.jsonl", "--out",
                   (dir / "c.jsonl").string()})
              .code == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli pipeline on the bundled corpus") {
  const auto dir = workspace("pipeline");
  const std::string corpus_path = (dir / "corpus.jsonl").string();

  // ---- ingest
  const auto ingest = run_cli(
      {"ingest", "--dir", kFixtures + "/contracts", "--labels-from-dirs", "--out", corpus_path});
  REQUIRE(ingest.code == 0);
  const auto corpus = corpus::load_jsonl(corpus_path);
  REQUIRE(corpus.size() == 60);
  REQUIRE(corpus.label_names == std::vector<std::string>{"exchanges", "finance", "games"});

  const auto ingest_manifest = manifest::load(manifest::path_for(corpus_path));
  REQUIRE(ingest_manifest.command == "ingest");
  REQUIRE(ingest_manifest.tool == "scmine");
  REQUIRE(ingest_manifest.outputs == std::vector<std::string>{corpus_path});
  REQUIRE(ingest_manifest.args.front() == "ingest");

  // ---- extract
  const std::string extracted = (dir / "extracted.jsonl").string();
  REQUIRE(run_cli({"extract", "--corpus", corpus_path, "--mode", "ocom", "--out", extracted})
              .code == 0);
  const auto extract_lines = read_lines(extracted);
  REQUIRE(extract_lines.size() == 60);
  const auto first = nlohmann::json::parse(extract_lines[0]);
  REQUIRE(first.at("mode") == "ocom");
  REQUIRE_FALSE(first.at("text").get<std::string>().empty());

  // ---- train
  const std::string model_path = (dir / "model.json").string();
  const std::string report_path = (dir / "report.csv").string();
  const std::vector<std::string> train_args = {
      "train", "--corpus", corpus_path,  "--mode",   "fc",       "--folds", "3",
      "--seed", "1",        "--test-fraction", "0.2", "--out",    model_path, "--report",
      report_path};
  REQUIRE(run_cli(train_args).code == 0);

  const auto report = read_lines(report_path);
  REQUIRE(report[0] == "mode,seed,fold,class,auc,ap");
  REQUIRE(report.size() == 1 + 3 * 3 + 3);  // three folds and a test block, three classes each
  std::set<std::string> fold_ids;
  for (std::size_t i = 1; i < report.size(); ++i) {
    const auto fields = split_commas(report[i]);
    REQUIRE(fields.size() == 6);
    REQUIRE(fields[0] == "fc");
    REQUIRE(fields[1] == "1");
    fold_ids.insert(fields[2]);
    REQUIRE((fields[3] == "exchanges" || fields[3] == "finance" || fields[3] == "games"));
  }
  REQUIRE(fold_ids == std::set<std::string>{"0", "1", "2", "test"});

  const auto model_json = nlohmann::json::parse(io::read_file(model_path));
  REQUIRE(model_json.at("format") == "scmine-model");
  REQUIRE(model_json.at("mode") == "fc");
  REQUIRE(model_json.at("penalty") == "l2");
  REQUIRE(model_json.contains("vocabulary"));
  REQUIRE(model_json.contains("vocabulary_fingerprint"));
  REQUIRE(model_json.at("model").at("class_names") ==
          std::vector<std::string>{"exchanges", "finance", "games"});

  // ---- deterministic re-run
  const std::string model2 = (dir / "model2.json").string();
  const std::string report2 = (dir / "report2.csv").string();
  auto train_args2 = train_args;
  train_args2[12] = model2;
  train_args2[14] = report2;
  REQUIRE(run_cli(train_args2).code == 0);
  REQUIRE(io::read_file(model2) == io::read_file(model_path));
  REQUIRE(io::read_file(report2) == io::read_file(report_path));

  // ---- replay restores deleted outputs byte for byte
  const std::string model_bytes = io::read_file(model_path);
  const std::string report_bytes = io::read_file(report_path);
  fs::remove(model_path);
  fs::remove(report_path);
  const auto replay = run_cli({"replay", manifest::path_for(model_path).string()});
  REQUIRE(replay.code == 0);
  REQUIRE(io::read_file(model_path) == model_bytes);
  REQUIRE(io::read_file(report_path) == report_bytes);

  // ---- predict
  const std::string pred_path = (dir / "predictions.csv").string();
  const std::string freq_path = (dir / "freq.csv").string();
  REQUIRE(run_cli({"predict", "--model", model_path, "--corpus", corpus_path, "--out", pred_path,
                   "--freq-report", freq_path})
              .code == 0);

  const auto pred = read_lines(pred_path);
  REQUIRE(pred[0] == "id,address,assigned,exchanges,finance,games");
  REQUIRE(pred.size() == 61);
  for (std::size_t i = 1; i < pred.size(); ++i) {
    const auto fields = split_commas(pred[i]);
    REQUIRE(fields.size() == 6);
    REQUIRE(fields[0] == std::to_string(i - 1));
    REQUIRE((fields[2] == "exchanges" || fields[2] == "finance" || fields[2] == "games" ||
             fields[2] == "other"));
  }

  const auto freq = read_lines(freq_path);
  REQUIRE(freq[0] == "category,count,fraction");
  REQUIRE(freq.size() == 5);  // three classes plus other
  std::size_t total = 0;
  double fraction_sum = 0.0;
  std::set<std::string> categories;
  for (std::size_t i = 1; i < freq.size(); ++i) {
    const auto fields = split_commas(freq[i]);
    categories.insert(fields[0]);
    total += std::stoul(fields[1]);
    fraction_sum += std::stod(fields[2]);
  }
  REQUIRE(total == 60);
  REQUIRE_THAT(fraction_sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  REQUIRE(categories == std::set<std::string>{"exchanges", "finance", "games", "other"});

  // threshold flag path
  REQUIRE(run_cli({"predict", "--model", model_path, "--corpus", corpus_path, "--threshold",
                   "0.5", "--out", (dir / "p2.csv").string()})
              .code == 0);

  // ---- cluster with fixed k
  const std::string clusters_path = (dir / "clusters.csv").string();
  REQUIRE(run_cli({"cluster", "--corpus", corpus_path, "--k", "3", "--seed", "4", "--out",
                   clusters_path})
              .code == 0);
  const auto cluster_lines = read_lines(clusters_path);
  REQUIRE(cluster_lines[0] == "doc_id,cluster");
  REQUIRE(cluster_lines.size() == 61);
  std::set<std::string> cluster_ids;
  for (std::size_t i = 1; i < cluster_lines.size(); ++i) {
    const auto fields = split_commas(cluster_lines[i]);
    REQUIRE(fields[0] == std::to_string(i - 1));
    cluster_ids.insert(fields[1]);
  }
  REQUIRE(cluster_ids.size() == 3);

  // ---- cluster elbow sweep
  const std::string elbow_path = (dir / "elbow.csv").string();
  const auto elbow_run = run_cli({"cluster", "--corpus", corpus_path, "--k-min", "2", "--k-max",
                                  "6", "--seed", "4", "--out", (dir / "clusters2.csv").string(),
                                  "--elbow", elbow_path});
  REQUIRE(elbow_run.code == 0);
  REQUIRE_THAT(elbow_run.err, ContainsSubstring("elbow suggests k ="));
  const auto elbow = read_lines(elbow_path);
  REQUIRE(elbow[0] == "k,db_score,suggested");
  REQUIRE(elbow.size() == 6);  // k = 2..6
  int suggested = 0;
  for (std::size_t i = 1; i < elbow.size(); ++i) {
    const auto fields = split_commas(elbow[i]);
    REQUIRE(fields.size() == 3);
    REQUIRE(fields[0] == std::to_string(i + 1));
    suggested += fields[2] == "1";
  }
  REQUIRE(suggested == 1);

  const auto conflict = run_cli({"cluster", "--corpus", corpus_path, "--k", "3", "--elbow",
                                 elbow_path, "--out", (dir / "c3.csv").string()});
  REQUIRE(conflict.code == 1);
  REQUIRE_THAT(conflict.err, ContainsSubstring("drop --k"));

  // ---- topics
  const std::string topics_path = (dir / "topics.csv").string();
  REQUIRE(run_cli({"topics", "--clusters", clusters_path, "--corpus", corpus_path, "--top", "5",
                   "--out", topics_path})
              .code == 0);
  const auto topics = read_lines(topics_path);
  REQUIRE(topics[0] == "cluster,rank,term,weight");
  REQUIRE(topics.size() > 3);
  std::map<std::string, int> last_rank;
  for (std::size_t i = 1; i < topics.size(); ++i) {
    const auto fields = split_commas(topics[i]);
    REQUIRE(fields.size() == 4);
    const int rank = std::stoi(fields[1]);
    REQUIRE(rank == last_rank[fields[0]] + 1);  // 1-based, dense per cluster
    last_rank[fields[0]] = rank;
    REQUIRE(rank <= 5);
    REQUIRE_FALSE(fields[2].empty());
    REQUIRE(std::stod(fields[3]) >= 0.0);
  }
  REQUIRE(last_rank.size() == 3);

  // ---- embed2d joined with clusters
  const std::string coords_path = (dir / "coords.csv").string();
  const std::string svg_path = (dir / "map.svg").string();
  REQUIRE(run_cli({"embed2d", "--corpus", corpus_path, "--iters", "60", "--perplexity", "10",
                   "--seed", "2", "--clusters", clusters_path, "--out", coords_path, "--svg",
                   svg_path})
              .code == 0);
  const auto coords = read_lines(coords_path);
  REQUIRE(coords[0] == "id,x,y,cluster,label");
  REQUIRE(coords.size() == 61);
  for (std::size_t i = 1; i < coords.size(); ++i) {
    const auto fields = split_commas(coords[i]);
    REQUIRE(fields.size() == 5);
    REQUIRE_FALSE(fields[3].empty());  // every doc got a cluster above
    REQUIRE((fields[4] == "exchanges" || fields[4] == "finance" || fields[4] == "games"));
  }

  const std::string svg = io::read_file(svg_path);
  REQUIRE_THAT(svg, ContainsSubstring("viewBox=\"0 0 1000 1000\""));
  std::size_t circles = 0;
  std::set<std::string> fills;
  for (std::size_t pos = svg.find("<circle"); pos != std::string::npos;
       pos = svg.find("<circle", pos + 1)) {
    ++circles;
    for (const char* attr : {"cx=\"", "cy=\""}) {
      const auto at = svg.find(attr, pos) + 4;
      const double v = std::stod(svg.substr(at, svg.find('"', at) - at));
      REQUIRE(v >= 50.0);
      REQUIRE(v <= 950.0);
    }
    const auto fill_at = svg.find("fill=\"", pos) + 6;
    fills.insert(svg.substr(fill_at, svg.find('"', fill_at) - fill_at));
  }
  REQUIRE(circles == 60);
  REQUIRE(fills.size() == 3);

  // ---- compare-modes
  const std::string wilcoxon_path = (dir / "wilcoxon.csv").string();
  const std::string samples_path = (dir / "samples.csv").string();
  REQUIRE(run_cli({"compare-modes", "--corpus", corpus_path, "--modes", "fc,ef", "--seeds", "2",
                   "--folds", "2", "--seed", "3", "--out", wilcoxon_path, "--samples",
                   samples_path})
              .code == 0);
  const auto wilcoxon = read_lines(wilcoxon_path);
  REQUIRE(wilcoxon[0] == "mode_a,mode_b,metric,alternative,W,p,method");
  REQUIRE(wilcoxon.size() == 7);  // one pair, two metrics, three alternatives
  for (std::size_t i = 1; i < wilcoxon.size(); ++i) {
    const auto fields = split_commas(wilcoxon[i]);
    REQUIRE(fields[0] == "fc");
    REQUIRE(fields[1] == "ef");
    REQUIRE((fields[2] == "auc" || fields[2] == "ap"));
    const double p = std::stod(fields[5]);
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
  }
  const auto samples = read_lines(samples_path);
  REQUIRE(samples[0] == "mode,seed,fold,auc,ap");
  REQUIRE(samples.size() == 1 + 2 * 4);  // two modes, 2 seeds x 2 folds each

  // ---- train with a lambda grid
  const auto grid = run_cli({"train", "--corpus", corpus_path, "--mode", "ef", "--folds", "2",
                             "--lambda", "grid", "--out", (dir / "grid.json").string()});
  REQUIRE(grid.code == 0);
  REQUIRE_THAT(grid.err, ContainsSubstring("train: grid selected lambda"));

  // ---- unlabeled corpora are rejected by train
  const std::string unlabeled = (dir / "unlabeled.jsonl").string();
  REQUIRE(run_cli({"ingest", "--dir", kFixtures + "/contracts", "--out", unlabeled}).code == 0);
  const auto no_labels = run_cli({"train", "--corpus", unlabeled});
  REQUIRE(no_labels.code == 1);
  REQUIRE_THAT(no_labels.err, ContainsSubstring("no labeled documents"));

  fs::remove_all(dir);
}

TEST_CASE("scatter svg basics") {
  DenseMatrix pts(3, 2);
  pts(0, 0) = 0.0;
  pts(0, 1) = 0.0;
  pts(1, 0) = 1.0;
  pts(1, 1) = 1.0;
  pts(2, 0) = 2.0;
  pts(2, 1) = 0.5;
  const auto svg = svg::scatter_svg(pts, {"a", "b", "a"});
  REQUIRE_THAT(svg, ContainsSubstring("viewBox=\"0 0 1000 1000\""));
  // category a appears first and takes the first palette slot
  REQUIRE_THAT(svg, ContainsSubstring(std::string("fill=\"") + svg::kPalette[0] + "\""));
  REQUIRE_THAT(svg, ContainsSubstring(std::string("fill=\"") + svg::kPalette[1] + "\""));
  REQUIRE_THAT(svg, !ContainsSubstring(svg::kPalette[2]));

  DenseMatrix one(1, 2);
  const auto single = svg::scatter_svg(one, {"solo"});
  REQUIRE_THAT(single, ContainsSubstring("cx=\"500\""));
  REQUIRE_THAT(single, ContainsSubstring("cy=\"500\""));

  REQUIRE_THROWS_AS(svg::scatter_svg(DenseMatrix(0, 2), {}), Error);
  REQUIRE_THROWS_AS(svg::scatter_svg(pts, {"a"}), Error);
  REQUIRE_THROWS_AS(svg::scatter_svg(DenseMatrix(2, 3), {"a", "b"}), Error);
}

TEST_CASE("fetch command keeps the api key out of every artifact") {
  MockEndpoint endpoint;
  const auto dir = workspace("fetch");
  const std::string addresses = (dir / "addresses.txt").string();
  io::atomic_write(addresses,
                   "# watchlist\n"
                   "0x5554455445544554455445544554455445544554\n"
                   "\n"
                   "0xaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa\n"
                   "not-an-address\n");

  const std::string out = (dir / "fetched.jsonl").string();
  const std::string cache = (dir / "cache").string();
  const std::string key = "hush-dont-tell-7";
  REQUIRE(setenv("SCMINE_API_KEY", key.c_str(), 1) == 0);
  const auto fetched = run_cli({"fetch", "--addresses", addresses, "--out", out, "--base-url",
                                endpoint.url(), "--cache-dir", cache, "--rate-limit", "10000"});
  REQUIRE(fetched.code == 0);

  // the key reached the API but nothing else
  REQUIRE(endpoint.seen_apikey == key);
  REQUIRE_THAT(fetched.err, !ContainsSubstring(key));
  REQUIRE_THAT(fetched.err, ContainsSubstring("not-an-address"));
  REQUIRE_THAT(fetched.err, ContainsSubstring("no verified source code"));

  const std::string corpus_bytes = io::read_file(out);
  REQUIRE_THAT(corpus_bytes, !ContainsSubstring(key));
  const auto fetched_corpus = corpus::load_jsonl(out);
  REQUIRE(fetched_corpus.size() == 1);
  REQUIRE(fetched_corpus.documents[0].address == "0x5554455445544554455445544554455445544554");
  REQUIRE_THAT(fetched_corpus.documents[0].source, ContainsSubstring("contract Fetched"));

  const std::string manifest_bytes = io::read_file(manifest::path_for(out));
  REQUIRE_THAT(manifest_bytes, !ContainsSubstring(key));
  const auto m = manifest::load(manifest::path_for(out));
  REQUIRE(m.command == "fetch");
  REQUIRE(m.inputs.count(addresses) == 1);

  // cached record round-trips without the key as well
  const fs::path cache_file =
      fs::path(cache) / "0x5554455445544554455445544554455445544554.json";
  REQUIRE(fs::exists(cache_file));
  REQUIRE_THAT(io::read_file(cache_file), !ContainsSubstring(key));

  // without the key the command still runs (cache hit) and warns
  REQUIRE(unsetenv("SCMINE_API_KEY") == 0);
  fs::remove(out);
  const auto again = run_cli({"fetch", "--addresses", addresses, "--out", out, "--base-url",
                              endpoint.url(), "--cache-dir", cache, "--rate-limit", "10000"});
  REQUIRE(again.code == 0);
  REQUIRE_THAT(again.err, ContainsSubstring("SCMINE_API_KEY is not set"));
  REQUIRE(corpus::load_jsonl(out).size() == 1);

  fs::remove_all(dir);
}
