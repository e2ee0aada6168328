#pragma once

#include <chrono>
#include <filesystem>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "scmine/corpus.hpp"
#include "scmine/error.hpp"
#include "scmine/io.hpp"

// Client for an Etherscan-compatible verified-source API: cache-first reads,
// exponential-backoff retries, and a rate limiter that spaces requests by
// 1/rate seconds so no sliding one-second window ever exceeds the limit.
//
// The API key comes from config (the CLI reads SCMINE_API_KEY) and is never
// written into error messages, logs, cache files, or corpus output.

namespace scmine::fetch {

// Injectable time source; tests drive rate limiting and backoff with a fake.
struct Clock {
  virtual ~Clock() = default;
  virtual double now() = 0;  // seconds on a monotonic axis
  virtual void sleep(double seconds) = 0;
};

struct SystemClock final : Clock {
  double now() override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
  void sleep(double seconds) override {
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }
};

struct FakeClock final : Clock {
  double time = 0.0;
  double total_slept = 0.0;
  double now() override { return time; }
  void sleep(double seconds) override {
    time += seconds;
    total_slept += seconds;
  }
};

struct FetchConfig {
  std::string base_url = "https://api.etherscan.io/api";
  std::string api_key;
  double rate_limit = 5.0;  // requests per second
  double timeout = 30.0;    // seconds
  std::filesystem::path cache_dir = "cache";
  int max_retries = 3;      // retries after the first attempt, backoff 1s/2s/4s
};

struct SourceRecord {
  std::string address;
  std::string source;
  std::string contract_name;
  std::string compiler_version;
  std::string fetched_at;  // UTC, ISO 8601

  nlohmann::json to_json() const {
    return nlohmann::json{{"address", address},
                          {"source", source},
                          {"contract_name", contract_name},
                          {"compiler_version", compiler_version},
                          {"fetched_at", fetched_at}};
  }

  static SourceRecord from_json(const nlohmann::json& j) {
    SourceRecord r;
    r.address = j.at("address").get<std::string>();
    r.source = j.at("source").get<std::string>();
    r.contract_name = j.value("contract_name", "");
    r.compiler_version = j.value("compiler_version", "");
    r.fetched_at = j.value("fetched_at", "");
    return r;
  }
};

inline std::string validate_address(std::string_view s) {
  if (s.size() != 42 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X'))
    throw Error("invalid address '" + std::string(s) + "': expected 0x followed by 40 hex digits");
  std::string out = "0x";
  for (std::size_t i = 2; i < s.size(); ++i) {
    const char c = s[i];
    if (c >= '0' && c <= '9') out += c;
    else if (c >= 'a' && c <= 'f') out += c;
    else if (c >= 'A' && c <= 'F') out += static_cast<char>(c - 'A' + 'a');
    else
      throw Error("invalid address '" + std::string(s) +
                  "': expected 0x followed by 40 hex digits");
  }
  return out;
}

// Minimum-interval limiter: consecutive acquisitions are at least 1/rate
// seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double rate_per_second) {
    if (rate_per_second <= 0.0) throw Error("rate limit must be positive");
    interval_ = 1.0 / rate_per_second;
  }

  void acquire(Clock& clock) {
    double t = clock.now();
    if (t < next_) {
      clock.sleep(next_ - t);
      t = clock.now();
    }
    next_ = t + interval_;
  }

 private:
  double interval_;
  double next_ = -std::numeric_limits<double>::infinity();
};

namespace detail {

struct HttpResponse {
  int status = 0;  // 0 = transport failure
  std::string body;
};

// base_url -> (scheme://host[:port], path); the path defaults to "/".
inline std::pair<std::string, std::string> split_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw Error("base URL must start with http:// or https://");
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, "/"};
  return {base_url.substr(0, path_start), base_url.substr(path_start)};
}

inline HttpResponse http_get(const FetchConfig& config, const std::string& query) {
  const auto [host, path] = split_url(config.base_url);
  httplib::Client client(host);
  const auto timeout = std::chrono::duration<double>(config.timeout);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(timeout));
  auto result = client.Get(path + query);
  if (!result) return {};
  return {result->status, result->body};
}

}  // namespace detail

class Client {
 public:
  explicit Client(FetchConfig config, Clock& clock)
      : config_(std::move(config)), clock_(clock), limiter_(config_.rate_limit) {}

  // Cache-first single-address fetch. Network results are cached only when
  // the contract is verified, so every cache file is a complete record.
  SourceRecord fetch_source(const std::string& raw_address) {
    const std::string address = validate_address(raw_address);
    const auto cache_path = config_.cache_dir / (address + ".json");
    if (std::filesystem::exists(cache_path)) {
      try {
        return SourceRecord::from_json(nlohmann::json::parse(io::read_file(cache_path)));
      } catch (const std::exception&) {
        throw Error("corrupt cache file " + cache_path.string());
      }
    }

    const std::string query = "?module=contract&action=getsourcecode&address=" + address +
                              "&apikey=" + config_.api_key;
    std::string failure = "no attempt made";
    for (int attempt = 0;; ++attempt) {
      limiter_.acquire(clock_);
      const auto response = detail::http_get(config_, query);
      bool retryable = true;
      if (response.status == 0) {
        failure = "transport error";
      } else if (response.status != 200) {
        failure = "HTTP status " + std::to_string(response.status);
      } else {
        nlohmann::json envelope;
        try {
          envelope = nlohmann::json::parse(response.body);
        } catch (const std::exception&) {
          envelope = nullptr;
        }
        if (envelope.is_null() || !envelope.contains("status")) {
          failure = "malformed response body";
        } else if (envelope["status"] == "1" && envelope.contains("result") &&
                   envelope["result"].is_array() && !envelope["result"].empty()) {
          const auto& item = envelope["result"][0];
          SourceRecord record;
          record.address = address;
          record.source = item.value("SourceCode", "");
          if (record.source.empty()) throw UnverifiedContractError(address);
          record.contract_name = item.value("ContractName", "");
          record.compiler_version = item.value("CompilerVersion", "");
          record.fetched_at = io::utc_now_iso();
          std::filesystem::create_directories(config_.cache_dir);
          io::atomic_write(cache_path, record.to_json().dump(2) + "\n");
          return record;
        } else {
          std::string api_message;
          if (envelope.contains("result") && envelope["result"].is_string())
            api_message = envelope["result"].get<std::string>();
          else if (envelope.contains("message") && envelope["message"].is_string())
            api_message = envelope["message"].get<std::string>();
          failure = "API error: " + api_message;
          // Rate-limit responses wait and retry; other envelope errors are final.
          retryable = api_message.find("rate limit") != std::string::npos;
        }
      }
      if (!retryable || attempt >= config_.max_retries)
        throw Error("fetch failed for " + address + ": " + failure);
      clock_.sleep(std::ldexp(1.0, attempt));  // 1s, 2s, 4s, ...
    }
  }

  struct ItemError {
    std::string input;
    std::string message;
  };

  struct BatchResult {
    std::vector<SourceRecord> records;
    std::vector<ItemError> errors;
  };

  // Attempts every address; per-item failures are collected, not fatal.
  BatchResult fetch_batch(const std::vector<std::string>& addresses) {
    BatchResult out;
    for (const auto& input : addresses) {
      try {
        out.records.push_back(fetch_source(input));
      } catch (const std::exception& e) {
        out.errors.push_back({input, e.what()});
      }
    }
    return out;
  }

 private:
  FetchConfig config_;
  Clock& clock_;
  RateLimiter limiter_;
};

// Corpus-compatible documents for batch output, ready for save_jsonl.
inline corpus::Corpus to_corpus(const std::vector<SourceRecord>& records) {
  corpus::Corpus c;
  for (const auto& r : records) {
    corpus::Document doc;
    doc.address = r.address;
    doc.source = r.source;
    c.documents.push_back(std::move(doc));
  }
  c.rebuild_label_names();
  return c;
}

}  // namespace scmine::fetch
