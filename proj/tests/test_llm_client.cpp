#include <cstdlib>
#include <unordered_set>

#include "doctest.h"
#include "its/llm_client.hpp"
#include "its/mock_server.hpp"
#include "its/util.hpp"
#include "support.hpp"

using namespace its;
using namespace its::llm;
using its::mock::Fixture;
using its::mock::MockModelServer;

namespace {

ChatRequest ask(const std::string& text) {
  ChatRequest r;
  r.messages = {{"user", text}};
  r.max_tokens = 64;
  return r;
}

EndpointConfig endpoint(const MockModelServer& server, int parallel = 2) {
  EndpointConfig c;
  c.base_url = server.base_url();
  c.model_name = "m";
  c.timeout_seconds = 5;
  c.max_parallel = parallel;
  return c;
}

RetryPolicy fast_retries(int attempts = 4) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.initial_delay = std::chrono::milliseconds(1);
  return p;
}

Fixture fixture(const char* text) { return Fixture::from_json(nlohmann::json::parse(text)); }

}  // namespace

TEST_CASE("request keys are stable and content-sensitive") {
  const auto a = request_key("m", ask("hello"));
  CHECK(a == request_key("m", ask("hello")));
  CHECK(a.size() == 64);
  CHECK(a != request_key("n", ask("hello")));
  CHECK(a != request_key("m", ask("hello ")));
  auto warm = ask("hello");
  warm.temperature = 0.7;
  CHECK(a != request_key("m", warm));
  auto longer = ask("hello");
  longer.max_tokens = 65;
  CHECK(a != request_key("m", longer));
  auto system = ask("hello");
  system.messages[0].role = "system";
  CHECK(a != request_key("m", system));
  // Message boundaries are part of the key.
  ChatRequest split;
  split.max_tokens = 64;
  split.messages = {{"user", "hel"}, {"user", "lo"}};
  CHECK(a != request_key("m", split));
}

TEST_CASE("request keys do not collide over a million synthetic requests") {
  std::unordered_set<std::string> seen;
  seen.reserve(1000000);
  for (int i = 0; i < 1000000; ++i) {
    REQUIRE(seen.insert(request_key("m", ask("q" + std::to_string(i)))).second);
  }
}

TEST_CASE("request body uses the chat-completions shape") {
  auto r = ask("hi");
  r.messages.insert(r.messages.begin(), {"system", "be brief"});
  const auto body = request_body("model-x", r);
  CHECK(body.at("model") == "model-x");
  CHECK(body.at("messages").size() == 2);
  CHECK(body.at("messages")[0].at("role") == "system");
  CHECK(body.at("messages")[1].at("content") == "hi");
  CHECK(body.at("temperature") == 0.0);
  CHECK(body.at("max_tokens") == 64);
  CHECK(r.greedy());
}

TEST_CASE("endpoint invariants") {
  EndpointConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.model_name = "m";
  CHECK_NOTHROW(c.validate());
  c.max_parallel = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.max_parallel = 1;
  c.timeout_seconds = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.timeout_seconds = 1;
  c.base_url = "ftp://host";
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("a completion is returned and recorded") {
  MockModelServer server(fixture(R"({"default": {"response": "PERSONA: a harbor pilot"}})"));
  auto ledger = std::make_shared<Ledger>();
  Client client(endpoint(server), fast_retries(), ledger);
  const auto c = client.complete(ask("who?"));
  CHECK(c.text == "PERSONA: a harbor pilot");
  CHECK(c.finish_reason == "stop");
  CHECK(c.attempts == 1);
  CHECK_FALSE(c.from_ledger);
  CHECK(ledger->size() == 1);

  const auto again = client.complete(ask("who?"));
  CHECK(again.text == c.text);
  CHECK(again.from_ledger);
  CHECK(server.request_count() == 1);
  CHECK(client.network_calls() == 1);
  CHECK(server.captured_authorizations() == std::vector<std::string>{""});
}

TEST_CASE("retryable failures are retried until success") {
  MockModelServer server(fixture(R"({"rules": [{"script": [
      {"status": 503, "response": "busy"}, {"status": 503, "response": "busy"},
      {"response": "ok"}]}]})"));
  Client client(endpoint(server), fast_retries(), nullptr);
  const auto c = client.complete(ask("x"));
  CHECK(c.text == "ok");
  CHECK(c.attempts == 3);
  CHECK(server.request_count() == 3);
}

TEST_CASE("exhausted retries carry the last status") {
  MockModelServer server(fixture(R"({"default": {"status": 503, "response": "busy"}})"));
  Client client(endpoint(server), fast_retries(2), nullptr);
  try {
    client.complete(ask("x"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kHttpStatus);
    CHECK(e.http_status() == 503);
    CHECK(std::string(e.what()).find("2 attempts") != std::string::npos);
  }
  CHECK(server.request_count() == 2);
}

TEST_CASE("non-retryable statuses fail immediately") {
  MockModelServer server(fixture(R"({"default": {"status": 400, "response": "bad request"}})"));
  Client client(endpoint(server), fast_retries(5), nullptr);
  CHECK_THROWS_AS(client.complete(ask("x")), Error);
  CHECK(server.request_count() == 1);
}

TEST_CASE("malformed bodies are reported with an excerpt") {
  MockModelServer server(fixture(R"({"default": {"raw_body": "{\"choices\": \"oops\"}"}})"));
  Client client(endpoint(server), fast_retries(), nullptr);
  try {
    client.complete(ask("x"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadResponse);
    CHECK(std::string(e.what()).find("oops") != std::string::npos);
  }
}

TEST_CASE("a missing api key is a config error and nothing is sent") {
  MockModelServer server(fixture(R"({"default": {"response": "x"}})"));
  auto cfg = endpoint(server);
  cfg.api_key_env = "ITS_TEST_KEY_THAT_IS_NOT_SET";
  unsetenv(cfg.api_key_env.c_str());
  Client client(cfg, fast_retries(), nullptr);
  try {
    client.complete(ask("x"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    CHECK(std::string(e.what()).find("ITS_TEST_KEY_THAT_IS_NOT_SET") != std::string::npos);
  }
  CHECK(server.request_count() == 0);
}

TEST_CASE("the api key travels as a bearer token") {
  MockModelServer server(fixture(R"({"default": {"response": "x"}})"));
  auto cfg = endpoint(server);
  cfg.api_key_env = "ITS_TEST_KEY";
  setenv("ITS_TEST_KEY", "sekrit", 1);
  Client client(cfg, fast_retries(), nullptr);
  CHECK(client.complete(ask("x")).text == "x");
  const auto captured = server.captured_requests();
  REQUIRE(captured.size() == 1);
  CHECK(captured[0].at("model") == "m");
  CHECK(server.captured_authorizations() == std::vector<std::string>{"Bearer sekrit"});
  unsetenv("ITS_TEST_KEY");
}

TEST_CASE("batches keep input order under random latency and bounded parallelism") {
  nlohmann::json fx = {{"latency_ms", {5, 40}}, {"seed", 3}, {"rules", nlohmann::json::array()}};
  for (int i = 0; i < 10; ++i) {
    fx["rules"].push_back({{"match", {{"contains", "item " + std::to_string(i) + "."}}},
                           {"response", "answer " + std::to_string(i)}});
  }
  MockModelServer server(Fixture::from_json(fx));
  Client client(endpoint(server, 3), fast_retries(), nullptr);
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 10; ++i) reqs.push_back(ask("item " + std::to_string(i) + "."));
  const auto results = client.complete_batch(reqs);
  REQUIRE(results.size() == 10);
  for (int i = 0; i < 10; ++i) {
    REQUIRE(results[i].ok());
    CHECK(results[i].completion->text == "answer " + std::to_string(i));
  }
  CHECK(server.max_in_flight() <= 3);
  CHECK(server.max_in_flight() >= 1);
}

TEST_CASE("in-flight requests never exceed max_parallel") {
  MockModelServer server(fixture(R"({"default": {"response": "x"}, "latency_ms": [10, 20]})"));
  for (int parallel : {1, 2, 4}) {
    server.reset_counters();
    auto cfg = endpoint(server, parallel);
    Client client(cfg, fast_retries(), nullptr);
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 16; ++i) reqs.push_back(ask("p" + std::to_string(parallel) + "-" + std::to_string(i)));
    const auto results = client.complete_batch(reqs);
    for (const auto& r : results) REQUIRE(r.ok());
    CHECK(server.request_count() == 16);
    CHECK(server.max_in_flight() <= static_cast<std::size_t>(parallel));
  }
}

TEST_CASE("empty batches and per-item failures") {
  MockModelServer server(fixture(R"({
      "rules": [{"match": {"contains": "item 3"}, "status": 400, "response": "no"}],
      "default": {"response": "fine"}})"));
  Client client(endpoint(server, 2), fast_retries(), nullptr);
  CHECK(client.complete_batch({}).empty());
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 5; ++i) reqs.push_back(ask("item " + std::to_string(i)));
  const auto results = client.complete_batch(reqs);
  REQUIRE(results.size() == 5);
  int ok = 0;
  for (const auto& r : results) ok += r.ok() ? 1 : 0;
  CHECK(ok == 4);
  REQUIRE_FALSE(results[3].ok());
  CHECK(results[3].failure->status == 400);
  CHECK(results[3].failure->code == ErrorCode::kHttpStatus);
}

TEST_CASE("a stopped batch starts nothing new") {
  MockModelServer server(fixture(R"({"default": {"response": "x"}})"));
  Client client(endpoint(server, 2), fast_retries(), nullptr);
  std::stop_source source;
  source.request_stop();
  const auto results = client.complete_batch({ask("a"), ask("b"), ask("c")}, source.get_token());
  for (const auto& r : results) {
    REQUIRE_FALSE(r.ok());
    CHECK(r.failure->code == ErrorCode::kInterrupted);
  }
  CHECK(server.request_count() == 0);
}

TEST_CASE("ledger replay makes no network calls and yields identical results") {
  testing::TempDir dir;
  const auto path = dir / "ledger.jsonl";
  MockModelServer server(fixture(R"({"default": {"response": "first"}, "latency_ms": [0, 5]})"));
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 8; ++i) reqs.push_back(ask("r" + std::to_string(i)));

  std::vector<std::string> first;
  {
    Client client(endpoint(server, 3), fast_retries(), std::make_shared<Ledger>(path));
    for (const auto& r : client.complete_batch(reqs)) first.push_back(r.completion->text);
  }
  const auto ledger_bytes = read_file(path);
  server.reset_counters();
  {
    Client client(endpoint(server, 3), fast_retries(), std::make_shared<Ledger>(path));
    const auto again = client.complete_batch(reqs);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      CHECK(again[i].completion->text == first[i]);
      CHECK(again[i].completion->from_ledger);
    }
    CHECK(client.network_calls() == 0);
  }
  CHECK(server.request_count() == 0);
  CHECK(read_file(path) == ledger_bytes);
}

TEST_CASE("a damaged trailing ledger entry is truncated on load") {
  testing::TempDir dir;
  const auto path = dir / "ledger.jsonl";
  {
    Ledger ledger(path);
    ledger.append({"k1", "m", "one", "stop", "t"});
    ledger.append({"k2", "m", "two", "stop", "t"});
  }
  const auto intact = read_file(path);
  write_file_atomic(path, intact + "{\"key\":\"k3\",\"resp");
  Ledger reloaded(path);
  CHECK(reloaded.size() == 2);
  CHECK(reloaded.truncated_bytes() == 17);
  CHECK(reloaded.find("k2")->response == "two");
  CHECK_FALSE(reloaded.find("k3").has_value());
  CHECK(read_file(path) == intact);
  reloaded.append({"k3", "m", "three", "stop", "t"});
  Ledger third(path);
  CHECK(third.size() == 3);
  CHECK(third.truncated_bytes() == 0);
}

TEST_CASE("corruption before the tail is an error") {
  testing::TempDir dir;
  const auto path = dir / "ledger.jsonl";
  write_file_atomic(path,
                    "garbage\n{\"key\":\"k\",\"model\":\"m\",\"response\":\"r\",\"timestamp\":\"t\"}\n");
  CHECK_THROWS_AS(Ledger{path}, Error);
}

TEST_CASE("probing reports unreachable endpoints") {
  MockModelServer server(fixture(R"({"default": {"response": "x"}})"));
  CHECK_FALSE(probe_endpoint(endpoint(server), 2).has_value());
  EndpointConfig dead;
  dead.base_url = "http://127.0.0.1:1/v1";
  dead.model_name = "m";
  CHECK(probe_endpoint(dead, 1).has_value());
}
