#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace httplib {
class Server;
}

namespace its::mock {

// What the server sends back for one request.
struct Reply {
  int status = 200;
  std::string content;
  std::string finish_reason = "stop";
  std::optional<std::string> raw_body;  // sent verbatim instead of a completion
  int delay_ms = 0;
};

// A rule matches when every condition holds. Matched requests consume the
// script in order; the final reply repeats once the script is exhausted.
struct Rule {
  std::optional<std::string> model;
  std::vector<std::string> contains;      // substrings of the joined message contents
  std::vector<std::string> not_contains;
  std::vector<Reply> script;
};

struct Fixture {
  std::vector<Rule> rules;
  std::optional<Reply> fallback;  // unset: unmatched requests get HTTP 404
  int latency_min_ms = 0;
  int latency_max_ms = 0;
  std::uint64_t seed = 0;

  static Fixture from_json(const nlohmann::json& j);
};

// Chat-completions server on 127.0.0.1 driven by a Fixture. Counts requests
// and the high-water mark of concurrently handled requests.
class MockModelServer {
 public:
  explicit MockModelServer(Fixture fixture, int port = 0);
  ~MockModelServer();

  MockModelServer(const MockModelServer&) = delete;
  MockModelServer& operator=(const MockModelServer&) = delete;

  std::string base_url() const;
  int port() const { return port_; }

  std::size_t request_count() const { return requests_.load(); }
  std::size_t max_in_flight() const { return max_in_flight_.load(); }
  std::vector<nlohmann::json> captured_requests() const;
  // Authorization header of each request, empty when absent.
  std::vector<std::string> captured_authorizations() const;
  void reset_counters();

  // Invoked with the 1-based request sequence number before replying.
  void set_on_request(std::function<void(std::size_t)> hook);

  // Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  Reply match(const nlohmann::json& body);

  Fixture fixture_;
  std::vector<std::size_t> cursor_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;

  mutable std::mutex mutex_;
  std::vector<nlohmann::json> captured_;
  std::vector<std::string> authorizations_;
  std::function<void(std::size_t)> hook_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
};

}  // namespace its::mock
