#include "doctest.h"
#include "its/error.hpp"
#include "its/util.hpp"
#include "its/variant.hpp"
#include "support.hpp"

using namespace its;
using namespace its::variant;
using persona::Persona;

namespace {

std::vector<corpus::SourceRecord> base(std::size_t n) {
  std::vector<corpus::SourceRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::SourceRecord r;
    r.id = "ot-" + std::to_string(i);
    r.query = "Problem " + std::to_string(i) + ": find $x$ with {braces} and \\boxed{}.";
    r.output = "Think...\nfinal answer \\boxed{" + std::to_string(i) + "}\n  ";
    r.gold_answer = std::to_string(i);
    r.source = "ot";
    out.push_back(r);
  }
  return out;
}

std::vector<Persona> personas_for(const std::vector<corpus::SourceRecord>& records, Strategy s) {
  std::vector<Persona> out;
  for (const auto& r : records) {
    out.push_back(Persona{"persona for " + r.id, s,
                          s == Strategy::kRandom ? std::optional<std::string>("law") : std::nullopt,
                          r.id});
  }
  return out;
}

VariantMetadata meta() {
  VariantMetadata m;
  m.seed = 42;
  m.template_hash = "t";
  m.generator_model = "gen";
  m.created_at = "2026-01-01T00:00:00Z";
  m.config_hash = "c";
  return m;
}

DatasetVariant build(const std::vector<corpus::SourceRecord>& records, Strategy s,
                     Split split = Split::kTrain) {
  return build_variant(records, "OT-1k", s, split,
                       s == Strategy::kNone ? PersonaSource{} : personas_from_list(personas_for(records, s)),
                       meta());
}

}  // namespace

TEST_CASE("N is the identity") {
  const auto records = base(3);
  const auto v = build(records, Strategy::kNone);
  REQUIRE(v.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(v.records[i].query.rendered == records[i].query);
    CHECK_FALSE(v.records[i].query.persona.has_value());
    CHECK(v.records[i].query.strategy == Strategy::kNone);
  }
}

TEST_CASE("persona strategies keep the query and carry the persona") {
  const auto records = base(5);
  for (auto s : {Strategy::kSimilar, Strategy::kDissimilar, Strategy::kRandom}) {
    const auto v = build(records, s);
    REQUIRE(v.records.size() == records.size());
    CHECK(v.strategy == s);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = v.records[i];
      CHECK(r.query.strategy == s);
      CHECK(r.query.query_id == records[i].id);
      CHECK(r.query.rendered.find(records[i].query) != std::string::npos);
      CHECK(r.query.rendered.find("persona for " + records[i].id) != std::string::npos);
      CHECK(r.output == records[i].output);
      CHECK_FALSE(r.gold_answer.has_value());
    }
  }
}

TEST_CASE("all four variants align on query ids") {
  const auto records = base(7);
  std::vector<std::vector<std::string>> orders;
  for (auto s : kStrategyOrder) {
    std::vector<std::string> ids;
    for (const auto& r : build(records, s).records) ids.push_back(r.query.query_id);
    orders.push_back(ids);
  }
  for (const auto& o : orders) CHECK(o == orders.front());
}

TEST_CASE("test split keeps gold answers and requires them") {
  auto records = base(3);
  const auto v = build(records, Strategy::kSimilar, Split::kTest);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(v.records[i].gold_answer == records[i].gold_answer);
    CHECK_FALSE(v.records[i].output.has_value());
  }
  records[1].gold_answer.reset();
  CHECK_THROWS_AS(build(records, Strategy::kNone, Split::kTest), Error);
}

TEST_CASE("a persona failure fails the whole build and names the queries") {
  const auto records = base(4);
  auto personas = personas_for(records, Strategy::kDissimilar);
  personas.erase(personas.begin() + 2);
  try {
    build_variant(records, "OT-1k", Strategy::kDissimilar, Split::kTrain,
                  personas_from_list(personas), meta());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kGeneration);
    CHECK(std::string(e.what()).find("ot-2") != std::string::npos);
    CHECK(std::string(e.what()).find("1 persona") != std::string::npos);
  }
}

TEST_CASE("build preconditions") {
  CHECK_THROWS_AS(build({}, Strategy::kNone), Error);
  CHECK_THROWS_AS(build_variant(base(1), "b", Strategy::kSimilar, Split::kTrain, {}, meta()), Error);
  auto m = meta();
  m.concat_template = "{query} only";
  CHECK_THROWS_AS(build_variant(base(1), "b", Strategy::kNone, Split::kTrain, {}, m), Error);
  CHECK(split_from_string("test") == Split::kTest);
  CHECK_THROWS_AS(split_from_string("dev"), Error);
}

TEST_CASE("variant files round trip exactly") {
  testing::TempDir dir;
  for (auto s : kStrategyOrder) {
    for (auto split : {Split::kTrain, Split::kTest}) {
      auto v = build(base(4), s, split);
      v.metadata.extra = {{"note", "x"}};
      const auto path = dir / ("v" + std::string(tag(s)) + std::string(to_string(split)) + ".jsonl");
      CHECK(save_variant(path, v));
      CHECK(load_variant(path) == v);
    }
  }
}

TEST_CASE("variant file layout") {
  const auto v = build(base(2), Strategy::kRandom);
  const auto lines = split_lines(serialize_variant(v));
  const auto header = nlohmann::json::parse(lines[0]);
  REQUIRE(header.contains("meta"));
  CHECK(header["meta"].at("count") == 2);
  CHECK(header["meta"].at("content_hash") == v.content_hash());
  const auto rec = nlohmann::json::parse(lines[1]);
  CHECK(rec.at("query_id") == "ot-0");
  CHECK(rec.at("strategy") == "R");
  CHECK(rec.at("persona_text") == "persona for ot-0");
  CHECK(rec.at("domain") == "law");
  CHECK(rec.at("original_query") == base(1)[0].query);
  CHECK(rec.contains("output"));
  CHECK_FALSE(rec.contains("gold_answer"));
}

TEST_CASE("rebuilding writes byte-identical files and skips unchanged content") {
  testing::TempDir dir;
  const auto path = dir / "v.jsonl";
  auto first = build(base(5), Strategy::kSimilar);
  CHECK(save_variant(path, first));
  const auto bytes = read_file(path);
  auto second = build(base(5), Strategy::kSimilar);
  second.metadata.created_at = "2030-01-01T00:00:00Z";
  CHECK(second.content_hash() == first.content_hash());
  CHECK_FALSE(save_variant(path, second));
  CHECK(read_file(path) == bytes);
  CHECK(serialize_variant(build(base(5), Strategy::kSimilar)) == bytes);

  auto changed = build(base(6), Strategy::kSimilar);
  CHECK(save_variant(path, changed));
  CHECK(load_variant(path).records.size() == 6);
}

TEST_CASE("corrupt variant files are rejected") {
  const auto text = serialize_variant(build(base(3), Strategy::kNone));
  const auto cut = text.substr(0, text.rfind('{'));
  CHECK_THROWS_AS(parse_variant(cut, "v"), Error);
  CHECK_THROWS_AS(parse_variant("", "v"), Error);
}

TEST_CASE("manifest defaults") {
  const auto v = build(base(5), Strategy::kSimilar);
  const auto m = emit_manifest(v, "Qwen2.5-32B-Instruct", "variants/OT-1k__S__train.jsonl");
  CHECK(m.update_steps == 240);
  CHECK(m.batch_size == 120);
  CHECK(m.learning_rate == 5e-6);
  CHECK(m.schedule == "cosine");
  CHECK(m.max_token_length == 32768);
  CHECK(m.packing == false);
  CHECK(m.variant_hash == v.content_hash());
  CHECK(m.deviations.empty());
  const auto j = to_json(m);
  for (const char* key : {"update_steps", "batch_size", "learning_rate", "schedule",
                          "max_token_length", "packing", "dataset_path", "base_model"}) {
    CHECK(j.contains(key));
  }
  CHECK(manifest_from_json(j) == m);
}

TEST_CASE("manifest overrides are applied and flagged") {
  const auto v = build(base(2), Strategy::kDissimilar);
  const auto m = emit_manifest(v, "m", "p", {{"learning_rate", 1e-5}});
  CHECK(m.learning_rate == 1e-5);
  CHECK(m.deviations == std::vector<std::string>{"learning_rate"});
  CHECK(m.update_steps == 240);
  // Overriding to the default value is not a deviation.
  CHECK(emit_manifest(v, "m", "p", {{"batch_size", 120}}).deviations.empty());
  CHECK_THROWS_AS(emit_manifest(v, "m", "p", {{"epochs", 15}}), Error);
  CHECK_THROWS_AS(emit_manifest(v, "m", "p", {{"batch_size", "big"}}), Error);
}

TEST_CASE("manifests are refused for test variants") {
  const auto v = build(base(2), Strategy::kSimilar, Split::kTest);
  CHECK_THROWS_AS(emit_manifest(v, "m", "p"), Error);
}

TEST_CASE("saved manifests round trip") {
  testing::TempDir dir;
  const auto m = emit_manifest(build(base(2), Strategy::kNone), "m", "p", {{"packing", true}});
  save_manifest(dir / "m.json", m);
  CHECK(manifest_from_json(nlohmann::json::parse(read_file(dir / "m.json"))) == m);
}
