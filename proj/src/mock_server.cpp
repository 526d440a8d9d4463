#include "its/mock_server.hpp"

#include <chrono>
#include <random>

#include "httplib.h"
#include "its/error.hpp"
#include "its/random.hpp"

namespace its::mock {
namespace {

Reply reply_from_json(const nlohmann::json& j) {
  Reply r;
  r.status = j.value("status", 200);
  r.content = j.value("response", std::string{});
  r.finish_reason = j.value("finish_reason", std::string("stop"));
  if (j.contains("raw_body")) r.raw_body = j.at("raw_body").get<std::string>();
  r.delay_ms = j.value("delay_ms", 0);
  return r;
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* field) {
  std::vector<std::string> out;
  auto it = j.find(field);
  if (it == j.end()) return out;
  if (it->is_string()) {
    out.push_back(it->get<std::string>());
  } else {
    for (const auto& v : *it) out.push_back(v.get<std::string>());
  }
  return out;
}

std::string joined_contents(const nlohmann::json& body) {
  std::string text;
  if (auto it = body.find("messages"); it != body.end() && it->is_array()) {
    for (const auto& m : *it) {
      if (m.contains("content") && m["content"].is_string()) {
        text += m["content"].get<std::string>();
        text.push_back('\n');
      }
    }
  }
  return text;
}

}  // namespace

Fixture Fixture::from_json(const nlohmann::json& j) {
  Fixture f;
  try {
    for (const auto& rj : j.value("rules", nlohmann::json::array())) {
      Rule rule;
      const auto& m = rj.contains("match") ? rj.at("match") : nlohmann::json::object();
      if (m.contains("model")) rule.model = m.at("model").get<std::string>();
      rule.contains = string_list(m, "contains");
      rule.not_contains = string_list(m, "not_contains");
      if (rj.contains("script")) {
        for (const auto& step : rj.at("script")) rule.script.push_back(reply_from_json(step));
      } else {
        rule.script.push_back(reply_from_json(rj));
      }
      f.rules.push_back(std::move(rule));
    }
    if (j.contains("default")) f.fallback = reply_from_json(j.at("default"));
    if (j.contains("latency_ms")) {
      f.latency_min_ms = j.at("latency_ms").at(0).get<int>();
      f.latency_max_ms = j.at("latency_ms").at(1).get<int>();
    }
    f.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid mock fixture: ") + e.what());
  }
  return f;
}

MockModelServer::MockModelServer(Fixture fixture, int port)
    : fixture_(std::move(fixture)),
      cursor_(fixture_.rules.size(), 0),
      server_(std::make_unique<httplib::Server>()) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const auto seq = ++requests_;
    const auto now = ++in_flight_;
    auto high = max_in_flight_.load();
    while (now > high && !max_in_flight_.compare_exchange_weak(high, now)) {
    }

    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      body = nlohmann::json::object();
    }
    std::function<void(std::size_t)> hook;
    {
      std::lock_guard lock(mutex_);
      captured_.push_back(body);
      authorizations_.push_back(req.get_header_value("Authorization"));
      hook = hook_;
    }
    if (hook) hook(seq);

    const auto reply = match(body);
    int delay = reply.delay_ms;
    if (fixture_.latency_max_ms > 0) {
      std::mt19937_64 rng(keyed_seed(fixture_.seed, std::to_string(seq)));
      const auto span = static_cast<std::uint64_t>(fixture_.latency_max_ms -
                                                    fixture_.latency_min_ms + 1);
      delay += fixture_.latency_min_ms + static_cast<int>(bounded_draw(rng, span));
    }
    if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));

    res.status = reply.status;
    if (reply.raw_body) {
      res.set_content(*reply.raw_body, "application/json");
    } else if (reply.status != 200) {
      res.set_content(nlohmann::json{{"error", {{"message", reply.content}}}}.dump(),
                      "application/json");
    } else {
      nlohmann::json out = {
          {"id", "mock-" + std::to_string(seq)},
          {"object", "chat.completion"},
          {"model", body.value("model", std::string{})},
          {"choices",
           {{{"index", 0},
             {"message", {{"role", "assistant"}, {"content", reply.content}}},
             {"finish_reason", reply.finish_reason}}}}};
      res.set_content(out.dump(), "application/json");
    }
    --in_flight_;
  };
  server_->Post("/chat/completions", handler);
  server_->Post("/v1/chat/completions", handler);

  port_ = port == 0 ? server_->bind_to_any_port("127.0.0.1")
                    : (server_->bind_to_port("127.0.0.1", port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::kIo, "mock server could not bind a port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockModelServer::~MockModelServer() {
  stop();
  if (thread_.joinable()) thread_.join();
}

void MockModelServer::stop() { server_->stop(); }

void MockModelServer::wait() {
  if (thread_.joinable()) thread_.join();
}

std::string MockModelServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

std::vector<std::string> MockModelServer::captured_authorizations() const {
  std::lock_guard lock(mutex_);
  return authorizations_;
}

std::vector<nlohmann::json> MockModelServer::captured_requests() const {
  std::lock_guard lock(mutex_);
  return captured_;
}

void MockModelServer::reset_counters() {
  std::lock_guard lock(mutex_);
  captured_.clear();
  authorizations_.clear();
  requests_ = 0;
  max_in_flight_ = 0;
}

void MockModelServer::set_on_request(std::function<void(std::size_t)> hook) {
  std::lock_guard lock(mutex_);
  hook_ = std::move(hook);
}

Reply MockModelServer::match(const nlohmann::json& body) {
  const auto model = body.value("model", std::string{});
  const auto text = joined_contents(body);
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < fixture_.rules.size(); ++i) {
    const auto& rule = fixture_.rules[i];
    if (rule.model && *rule.model != model) continue;
    bool ok = true;
    for (const auto& s : rule.contains) ok = ok && text.find(s) != std::string::npos;
    for (const auto& s : rule.not_contains) ok = ok && text.find(s) == std::string::npos;
    if (!ok || rule.script.empty()) continue;
    const auto step = std::min(cursor_[i], rule.script.size() - 1);
    ++cursor_[i];
    return rule.script[step];
  }
  if (fixture_.fallback) return *fixture_.fallback;
  Reply missing;
  missing.status = 404;
  missing.content = "no fixture rule matched";
  return missing;
}

}  // namespace its::mock
