#pragma once

#include <memory>
#include <string>
#include <vector>

#include "its/mock_server.hpp"
#include "its/util.hpp"
#include "support.hpp"

namespace its::testing {

inline const std::vector<std::string> kPipeline = {"ingest", "personas", "build", "manifest", "eval",
                                                    "grade",  "matrix",   "vote",  "report"};

inline nlohmann::json e2e_mock_fixture() {
  return nlohmann::json::parse(read_file(fixture("e2e/mock.json")));
}

// A scratch workspace with an in-process mock server and a rendered config
// pointing at it. The CLI runs as a child process.
class Workspace {
 public:
  explicit Workspace(const nlohmann::json& mock = e2e_mock_fixture()) { serve(mock); }

  // Replaces the mock server and rewrites the config for its port.
  void serve(const nlohmann::json& mock) {
    server_.reset();
    server_ = std::make_unique<mock::MockModelServer>(mock::Fixture::from_json(mock));
    write_config();
  }

  mock::MockModelServer& server() { return *server_; }
  const fs::path& root() const { return dir_.path(); }
  fs::path out() const { return dir_ / "out"; }
  fs::path config() const { return dir_ / "its.json"; }
  fs::path templates() const { return templates_; }

  void set_templates(const fs::path& dir) {
    templates_ = dir;
    write_config();
  }

  std::map<std::string, std::string> env() const {
    return {{"ITS_MOCK_API_KEY", "test-key"}, {"SOURCE_DATE_EPOCH", "1700000000"}};
  }

  std::vector<std::string> argv(const std::vector<std::string>& args) const {
    std::vector<std::string> a = {ITS_CLI_PATH, "-c", config().string()};
    a.insert(a.end(), args.begin(), args.end());
    return a;
  }

  ProcessResult run(const std::vector<std::string>& args) const {
    return run_process(argv(args), root(), env());
  }

  std::unique_ptr<Process> start(const std::vector<std::string>& args) const {
    return std::make_unique<Process>(argv(args), root(), env());
  }

  // Runs the subcommands in order and stops at the first failure.
  std::vector<ProcessResult> run_all(const std::vector<std::string>& subcommands) const {
    std::vector<ProcessResult> results;
    for (const auto& s : subcommands) {
      results.push_back(run({s}));
      if (results.back().exit_code != 0) break;
    }
    return results;
  }

 private:
  void write_config() {
    const auto text = read_file(fixture("e2e/config.json.in"));
    auto rendered = replace_all(text, "{{PORT}}", std::to_string(server_->port()));
    rendered = replace_all(rendered, "{{OUT}}", out().string());
    rendered = replace_all(rendered, "{{TEMPLATES}}", templates_.string());
    rendered = replace_all(rendered, "{{FIXTURES}}", fixture("e2e").string());
    write_file_atomic(config(), rendered);
  }

  TempDir dir_;
  fs::path templates_ = source_dir() / "templates";
  std::unique_ptr<mock::MockModelServer> server_;
};

// Every regular file under `dir`, keyed by relative path.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

inline std::size_t network_calls(const ProcessResult& r) {
  const std::string key = "its: network_calls=";
  const auto pos = r.err.rfind(key);
  if (pos == std::string::npos) return static_cast<std::size_t>(-1);
  return std::stoul(r.err.substr(pos + key.size()));
}

}  // namespace its::testing
