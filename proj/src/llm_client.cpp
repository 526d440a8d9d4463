#include "its/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "its/util.hpp"

namespace its::llm {
namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfig, "base_url must start with http:// or https://: " + url);
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::kConfig, "unsupported scheme in base_url: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  if (path_start == std::string::npos) {
    parsed.scheme_host_port = url;
  } else {
    parsed.scheme_host_port = url.substr(0, path_start);
    parsed.path_prefix = url.substr(path_start);
  }
  while (!parsed.path_prefix.empty() && parsed.path_prefix.back() == '/') {
    parsed.path_prefix.pop_back();
  }
  return parsed;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

void set_timeout(httplib::Client& client, double seconds) {
  const auto sec = static_cast<time_t>(seconds);
  const auto usec = static_cast<time_t>((seconds - static_cast<double>(sec)) * 1e6);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

}  // namespace

void EndpointConfig::validate() const {
  if (base_url.empty()) throw Error(ErrorCode::kConfig, "endpoint base_url is empty");
  parse_base_url(base_url);
  if (model_name.empty()) throw Error(ErrorCode::kConfig, "endpoint model_name is empty");
  if (max_parallel < 1) throw Error(ErrorCode::kConfig, "endpoint max_parallel must be >= 1");
  if (!(timeout_seconds > 0)) throw Error(ErrorCode::kConfig, "endpoint timeout must be > 0");
}

nlohmann::json request_body(const std::string& model_name, const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  return {{"model", model_name},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

std::string request_key(const std::string& model_name, const ChatRequest& request) {
  // nlohmann::json orders object keys, so dump() is canonical.
  return sha256_hex(request_body(model_name, request).dump());
}

// --- Ledger -----------------------------------------------------------------

Ledger::Ledger(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_)) {
    const auto content = read_file(path_);
    std::size_t offset = 0;
    std::size_t good_end = 0;
    while (offset < content.size()) {
      const auto newline = content.find('\n', offset);
      const bool complete = newline != std::string::npos;
      const auto line_end = complete ? newline : content.size();
      const auto line = std::string_view(content).substr(offset, line_end - offset);
      const bool last = !complete || newline + 1 == content.size();
      if (!trim(line).empty()) {
        nlohmann::json j;
        bool parsed = complete;
        if (parsed) {
          try {
            j = nlohmann::json::parse(line);
            parsed = j.is_object() && j.contains("key") && j.contains("response");
          } catch (const nlohmann::json::exception&) {
            parsed = false;
          }
        }
        if (!parsed) {
          if (!last) {
            throw Error(ErrorCode::kParse,
                        "corrupt ledger entry in " + path_.string() + " at byte " +
                            std::to_string(offset));
          }
          break;
        }
        LedgerEntry e;
        e.key = j.at("key").get<std::string>();
        e.model = j.value("model", "");
        e.response = j.at("response").get<std::string>();
        e.finish_reason = j.value("finish_reason", "");
        e.timestamp = j.value("timestamp", "");
        entries_.try_emplace(e.key, std::move(e));
      }
      good_end = complete ? newline + 1 : content.size();
      offset = good_end;
    }
    if (good_end < content.size()) {
      truncated_bytes_ = content.size() - good_end;
      std::filesystem::resize_file(path_, good_end);
    }
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorCode::kIo, "cannot open ledger for append: " + path_.string());
}

std::optional<LedgerEntry> Ledger::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void Ledger::append(const LedgerEntry& entry) {
  std::lock_guard lock(mutex_);
  if (!entries_.try_emplace(entry.key, entry).second) return;
  if (out_.is_open()) {
    nlohmann::json j = {{"key", entry.key},
                        {"model", entry.model},
                        {"response", entry.response},
                        {"finish_reason", entry.finish_reason},
                        {"timestamp", entry.timestamp}};
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::kIo, "ledger append failed: " + path_.string());
  }
}

std::size_t Ledger::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// --- Client -----------------------------------------------------------------

Client::Client(EndpointConfig config, RetryPolicy policy, std::shared_ptr<Ledger> ledger)
    : config_(std::move(config)), policy_(std::move(policy)), ledger_(std::move(ledger)) {
  config_.validate();
  if (policy_.max_attempts < 1) throw Error(ErrorCode::kConfig, "max_attempts must be >= 1");
  if (!ledger_) ledger_ = std::make_shared<Ledger>();
}

Completion Client::complete(const ChatRequest& request) {
  const auto key = request_key(config_.model_name, request);
  if (auto hit = ledger_->find(key)) {
    return Completion{hit->response, hit->finish_reason, key, 0, true};
  }
  auto completion = post_with_retries(request, key);
  ledger_->append(LedgerEntry{key, config_.model_name, completion.text,
                              completion.finish_reason, utc_timestamp()});
  return completion;
}

Completion Client::post_with_retries(const ChatRequest& request, const std::string& key) {
  std::string api_key;
  if (!config_.api_key_env.empty()) {
    const char* value = std::getenv(config_.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
      throw Error(ErrorCode::kConfig,
                  "environment variable " + config_.api_key_env + " is not set");
    }
    api_key = value;
  }
  const auto url = parse_base_url(config_.base_url);
  const auto path = url.path_prefix + "/chat/completions";
  const auto body = request_body(config_.model_name, request).dump();
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  auto delay = policy_.initial_delay;
  Error last_error(ErrorCode::kTransport, "no attempt made");
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<std::int64_t>(std::llround(static_cast<double>(delay.count()) *
                                                 policy_.multiplier)));
    }
    ++network_calls_;
    httplib::Client http(url.scheme_host_port);
    set_timeout(http, config_.timeout_seconds);
    auto res = http.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = Error(ErrorCode::kTransport, "request to " + config_.base_url + " failed: " +
                                                    httplib::to_string(res.error()));
      if (policy_.retry_transport_errors) continue;
      throw last_error;
    }
    if (res->status != 200) {
      last_error = Error(ErrorCode::kHttpStatus,
                         "HTTP " + std::to_string(res->status) + " from " + config_.base_url +
                             ": " + excerpt(res->body),
                         res->status);
      if (policy_.retryable_statuses.count(res->status)) continue;
      throw last_error;
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      const auto& choice = j.at("choices").at(0);
      const auto& content = choice.at("message").at("content");
      Completion c;
      c.text = content.get<std::string>();
      if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string()) {
        c.finish_reason = fr->get<std::string>();
      }
      c.request_key = key;
      c.attempts = attempt;
      return c;
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::kBadResponse,
                  "malformed completion response: " + excerpt(res->body));
    }
  }
  throw Error(last_error.code(),
              last_error.what() + std::string(" (after ") +
                  std::to_string(policy_.max_attempts) + " attempts)",
              last_error.http_status());
}

std::optional<std::string> probe_endpoint(const EndpointConfig& config, double timeout_seconds) {
  ParsedUrl url;
  try {
    url = parse_base_url(config.base_url);
  } catch (const Error& e) {
    return std::string(e.what());
  }
  httplib::Client http(url.scheme_host_port);
  set_timeout(http, timeout_seconds);
  auto res = http.Get(url.path_prefix + "/models");
  if (!res) return "cannot reach " + config.base_url + ": " + httplib::to_string(res.error());
  return std::nullopt;
}

std::vector<BatchResult> Client::complete_batch(const std::vector<ChatRequest>& requests,
                                                std::stop_token stop) {
  std::vector<BatchResult> results(requests.size());
  if (requests.empty()) return results;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= requests.size()) return;
      if (stop.stop_requested()) {
        results[i].failure = RequestFailure{ErrorCode::kInterrupted, 0, "interrupted"};
        continue;
      }
      try {
        results[i].completion = complete(requests[i]);
      } catch (const Error& e) {
        results[i].failure = RequestFailure{e.code(), e.http_status(), e.what()};
      } catch (const std::exception& e) {
        results[i].failure = RequestFailure{ErrorCode::kTransport, 0, e.what()};
      }
    }
  };

  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(config_.max_parallel),
                                             requests.size());
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();  // joins
  return results;
}

}  // namespace its::llm
