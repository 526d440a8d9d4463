#include "doctest.h"
#include "e2e.hpp"
#include "its/variant.hpp"

using namespace its;
using namespace its::testing;

namespace {

nlohmann::json header_of(const fs::path& path) {
  const auto text = read_file(path);
  if (path.extension() == ".json") return nlohmann::json::parse(text);
  return nlohmann::json::parse(first_line(text));
}

// The object holding config_hash: the whole document, or the meta/run/summary
// line of a JSONL file.
nlohmann::json provenance_of(const fs::path& path) {
  const auto text = read_file(path);
  if (path.extension() == ".json") return nlohmann::json::parse(text);
  for (const auto& line : split_lines(text)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"meta", "run", "summary"}) {
      if (j.contains(key) && j[key].contains("config_hash")) return j[key];
    }
  }
  return nlohmann::json::object();
}

// The machine-readable error line; the startup log may precede it.
std::string error_line(const std::string& err) {
  for (const auto& line : split_lines(err)) {
    if (line.rfind("its-error ", 0) == 0) return line;
  }
  return "";
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("unknown subcommand is a usage error with a machine-readable first line") {
  Workspace ws;
  const auto r = ws.run({"frobnicate"});
  CHECK(r.exit_code == 1);
  CHECK(first_line(r.err).rfind("its-error code=usage exit=1", 0) == 0);
  CHECK(contains(r.err, "\nits: "));
}

TEST_CASE("unreadable or malformed config is a config error") {
  Workspace ws;
  auto r = run_process({ITS_CLI_PATH, "-c", (ws.root() / "nope.json").string(), "ingest"}, ws.root());
  CHECK(r.exit_code == 1);
  CHECK(error_line(r.err) == "its-error code=config exit=1 subcommand=ingest");
  CHECK(contains(r.err, "nope.json"));

  write_file_atomic(ws.root() / "bad.json", "{\"seed\": ");
  r = run_process({ITS_CLI_PATH, "-c", (ws.root() / "bad.json").string(), "ingest"}, ws.root());
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "malformed JSON"));
}

TEST_CASE("validate passes on the bundled configuration and writes nothing") {
  Workspace ws;
  const auto r = ws.run({"validate"});
  CHECK(r.exit_code == 0);
  CHECK(contains(r.err, "config ok"));
  CHECK_FALSE(fs::exists(ws.out()));
  CHECK(ws.server().request_count() == 0);
}

TEST_CASE("validate names a missing template file") {
  Workspace ws;
  const auto copy = ws.root() / "templates";
  fs::copy(ws.templates(), copy);
  fs::remove(copy / "similar.txt");
  ws.set_templates(copy);
  const auto r = ws.run({"validate", "--offline"});
  CHECK(r.exit_code != 0);
  CHECK(error_line(r.err).rfind("its-error code=config", 0) == 0);
  CHECK(contains(r.err, (copy / "similar.txt").string()));
}

TEST_CASE("validate reports a missing API key and an unreachable endpoint") {
  Workspace ws;
  auto env = ws.env();
  env["ITS_MOCK_API_KEY"] = "";
  auto r = run_process(ws.argv({"validate"}), ws.root(), env);
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "ITS_MOCK_API_KEY is not set"));

  auto text = read_file(ws.config());
  text = replace_all(text, "127.0.0.1:" + std::to_string(ws.server().port()), "127.0.0.1:1");
  write_file_atomic(ws.config(), text);
  r = ws.run({"validate"});
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "127.0.0.1:1"));
  r = ws.run({"validate", "--offline"});
  CHECK(r.exit_code == 0);
}

TEST_CASE("a missing API key stops a networked subcommand before any request") {
  Workspace ws;
  REQUIRE(ws.run({"ingest"}).exit_code == 0);
  auto env = ws.env();
  env["ITS_MOCK_API_KEY"] = "";
  const auto r = run_process(ws.argv({"personas"}), ws.root(), env);
  CHECK(r.exit_code == 1);
  CHECK(error_line(r.err) == "its-error code=config exit=1 subcommand=personas");
  CHECK(ws.server().request_count() == 0);
}

TEST_CASE("flags override the config and the precedence is logged") {
  Workspace ws;
  auto r = ws.run({"ingest"});
  REQUIRE(r.exit_code == 0);
  CHECK(contains(r.err, "its: seed=7 (config)"));
  CHECK(contains(r.err, "its: output_dir=" + ws.out().string() + " (config)"));

  const auto other = ws.root() / "other";
  r = ws.run({"--seed", "9", "--out", other.string(), "ingest"});
  REQUIRE(r.exit_code == 0);
  CHECK(contains(r.err, "its: seed=9 (flag)"));
  CHECK(contains(r.err, "its: output_dir=" + other.string() + " (flag)"));
  CHECK(header_of(other / "bases" / "mini.jsonl").at("meta").at("seed") == 9);
  CHECK(read_file(other / "bases" / "mini.jsonl") != read_file(ws.out() / "bases" / "mini.jsonl"));
}

TEST_CASE("build with a selection emits exactly the requested variant") {
  Workspace ws;
  REQUIRE(ws.run({"ingest"}).exit_code == 0);
  REQUIRE(ws.run({"personas", "--base", "mini", "--strategy", "S"}).exit_code == 0);
  const auto r = ws.run({"build", "--base", "mini", "--strategy", "S", "--split", "train"});
  REQUIRE(r.exit_code == 0);
  const auto variants = snapshot(ws.out() / "variants");
  REQUIRE(variants.size() == 1);
  CHECK(variants.begin()->first == "mini__S__train.jsonl");
  const auto v = variant::load_variant(ws.out() / "variants" / "mini__S__train.jsonl");
  CHECK(v.strategy == Strategy::kSimilar);
  CHECK(v.split == variant::Split::kTrain);
  CHECK(v.records.size() == 16);
}

TEST_CASE("bad selections are usage errors") {
  Workspace ws;
  auto r = ws.run({"build", "--strategy", "X"});
  CHECK(r.exit_code == 1);
  r = ws.run({"build", "--split", "dev"});
  CHECK(r.exit_code == 1);
  r = ws.run({"manifest", "--set", "novalue"});
  CHECK(r.exit_code == 1);
  CHECK(error_line(r.err).rfind("its-error code=usage exit=1 subcommand=manifest", 0) == 0);
}

TEST_CASE("a subcommand run before its inputs exist is a runtime error") {
  Workspace ws;
  const auto r = ws.run({"build"});
  CHECK(r.exit_code == 2);
  CHECK(error_line(r.err).rfind("its-error code=", 0) == 0);
  CHECK(contains(error_line(r.err), "exit=2 subcommand=build"));
}

TEST_CASE("full pipeline, then every subcommand again with no network calls") {
  Workspace ws;
  const auto first = ws.run_all(kPipeline);
  REQUIRE(first.size() == kPipeline.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    INFO(kPipeline[i] << ": " << first[i].err);
    REQUIRE(first[i].exit_code == 0);
  }
  // 160 questions plus one scripted 503 that is retried.
  CHECK(network_calls(first[4]) == 161);
  const auto before = snapshot(ws.out());
  const auto requests = ws.server().request_count();

  for (const auto& sub : kPipeline) {
    const auto r = ws.run({sub});
    INFO(sub << ": " << r.err);
    CHECK(r.exit_code == 0);
    CHECK(network_calls(r) == 0);
  }
  CHECK(ws.server().request_count() == requests);
  CHECK(snapshot(ws.out()) == before);
}

TEST_CASE("every artifact carries the config hash and seed") {
  Workspace ws;
  for (const auto& r : ws.run_all(kPipeline)) REQUIRE(r.exit_code == 0);
  const auto files = snapshot(ws.out());
  CHECK(files.size() > 40);
  std::string hash;
  for (const auto& [rel, text] : files) {
    if (rel.rfind("ledger/", 0) == 0) continue;
    INFO(rel);
    CHECK(contains(text, "config_hash"));
    CHECK(contains(text, "seed"));
    if (fs::path(rel).extension() == ".md") continue;
    const auto stamp = provenance_of(ws.out() / rel);
    REQUIRE(stamp.contains("config_hash"));
    CHECK(stamp.at("seed") == 7);
    if (hash.empty()) hash = stamp["config_hash"];
    CHECK(stamp["config_hash"] == hash);
  }
}
