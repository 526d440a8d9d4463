#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <unordered_map>
#include <vector>

#include "its/error.hpp"
#include "json.hpp"

namespace its::llm {

struct EndpointConfig {
  std::string base_url;     // e.g. http://127.0.0.1:8000/v1
  std::string model_name;
  std::string api_key_env;  // empty: no Authorization header
  double timeout_seconds = 600.0;
  int max_parallel = 4;

  // Throws its::Error(kConfig) when an invariant does not hold.
  void validate() const;
};

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;  // 0 means greedy decoding
  int max_tokens = 32768;

  bool greedy() const { return temperature == 0.0; }
};

// Deterministic SHA-256 over the canonical JSON of (model, messages,
// temperature, max_tokens).
std::string request_key(const std::string& model_name, const ChatRequest& request);

// Request body sent to POST {base_url}/chat/completions.
nlohmann::json request_body(const std::string& model_name, const ChatRequest& request);

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::set<int> retryable_statuses{408, 409, 425, 429, 500, 502, 503, 504};
  bool retry_transport_errors = true;
};

struct Completion {
  std::string text;
  std::string finish_reason;
  std::string request_key;
  int attempts = 0;  // network attempts made; 0 when served from the ledger
  bool from_ledger = false;
};

struct RequestFailure {
  ErrorCode code = ErrorCode::kTransport;
  int status = 0;  // last HTTP status, 0 for transport-level failures
  std::string message;
};

// One slot of complete_batch output: exactly one of the two is set.
struct BatchResult {
  std::optional<Completion> completion;
  std::optional<RequestFailure> failure;

  bool ok() const { return completion.has_value(); }
};

struct LedgerEntry {
  std::string key;
  std::string model;
  std::string response;
  std::string finish_reason;
  std::string timestamp;
};

// Append-only store of (request_key -> response). Each line of the backing
// file is one JSON object; a damaged trailing line (interrupted write) is
// truncated away on load.
class Ledger {
 public:
  // In-memory ledger with no backing file.
  Ledger() = default;
  explicit Ledger(std::filesystem::path path);

  Ledger(const Ledger&) = delete;
  Ledger& operator=(const Ledger&) = delete;

  std::optional<LedgerEntry> find(const std::string& key) const;
  void append(const LedgerEntry& entry);

  std::size_t size() const;
  // Bytes dropped from a damaged tail when the file was loaded.
  std::size_t truncated_bytes() const { return truncated_bytes_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  mutable std::mutex mutex_;
  std::filesystem::path path_;
  std::unordered_map<std::string, LedgerEntry> entries_;
  std::ofstream out_;
  std::size_t truncated_bytes_ = 0;
};

// Connects to the endpoint and issues GET <base_url>/models. Any HTTP
// response counts as reachable. Returns a description of the failure.
std::optional<std::string> probe_endpoint(const EndpointConfig& config, double timeout_seconds);

class Client {
 public:
  Client(EndpointConfig config, RetryPolicy policy, std::shared_ptr<Ledger> ledger);

  // Ledger hit, else POST with retries; successes are appended to the ledger
  // before being returned. Throws its::Error on failure.
  Completion complete(const ChatRequest& request);

  // Results align with `requests`. At most config.max_parallel requests are
  // in flight. Failures are reported per item. Once `stop` is requested no
  // new request is started and unstarted items fail with kInterrupted.
  std::vector<BatchResult> complete_batch(const std::vector<ChatRequest>& requests,
                                          std::stop_token stop = {});

  // Number of HTTP attempts issued by this client.
  std::size_t network_calls() const { return network_calls_.load(); }

  const EndpointConfig& config() const { return config_; }
  Ledger& ledger() { return *ledger_; }

 private:
  Completion post_with_retries(const ChatRequest& request, const std::string& key);

  EndpointConfig config_;
  RetryPolicy policy_;
  std::shared_ptr<Ledger> ledger_;
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace its::llm
