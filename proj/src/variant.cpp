#include "its/variant.hpp"

#include <map>

#include "its/error.hpp"
#include "its/util.hpp"

namespace its::variant {
namespace {

nlohmann::json meta_json(const DatasetVariant& v, bool with_time) {
  nlohmann::json m = {{"base_name", v.base_name},
                      {"strategy", std::string(tag(v.strategy))},
                      {"split", std::string(to_string(v.split))},
                      {"count", v.records.size()},
                      {"seed", v.metadata.seed},
                      {"template_hash", v.metadata.template_hash},
                      {"concat_template", v.metadata.concat_template},
                      {"generator_model", v.metadata.generator_model},
                      {"config_hash", v.metadata.config_hash},
                      {"extra", v.metadata.extra}};
  if (with_time) m["created_at"] = v.metadata.created_at;
  return m;
}

nlohmann::json record_json(const VariantRecord& r) {
  nlohmann::json j = {{"query_id", r.query.query_id},
                      {"rendered_query", r.query.rendered},
                      {"original_query", r.query.original},
                      {"strategy", std::string(tag(r.query.strategy))}};
  if (r.query.persona) {
    j["persona_text"] = r.query.persona->text;
    if (r.query.persona->domain) j["domain"] = *r.query.persona->domain;
  }
  if (r.output) j["output"] = *r.output;
  if (r.gold_answer) j["gold_answer"] = *r.gold_answer;
  return j;
}

std::string records_jsonl(const DatasetVariant& v) {
  std::string out;
  for (const auto& r : v.records) {
    out += record_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw Error(ErrorCode::kUsage, "unknown split '" + std::string(text) + "' (train or test)");
}

std::string DatasetVariant::content_hash() const {
  return sha256_hex(meta_json(*this, false).dump() + "\n" + records_jsonl(*this));
}

DatasetVariant build_variant(const std::vector<corpus::SourceRecord>& base,
                             const std::string& base_name, Strategy strategy, Split split,
                             const PersonaSource& personas, VariantMetadata metadata) {
  if (base.empty()) throw Error(ErrorCode::kUsage, "base dataset '" + base_name + "' is empty");
  require_placeholder_once(metadata.concat_template, "persona", "concat");
  require_placeholder_once(metadata.concat_template, "query", "concat");

  std::vector<persona::PersonaResult> generated;
  if (strategy != Strategy::kNone) {
    if (!personas) throw Error(ErrorCode::kUsage, "no persona source for strategy " +
                                                      std::string(tag(strategy)));
    generated = personas(base);
    if (generated.size() != base.size()) {
      throw Error(ErrorCode::kGeneration, "persona source returned " +
                                              std::to_string(generated.size()) + " results for " +
                                              std::to_string(base.size()) + " records");
    }
    std::string failures;
    std::size_t failed = 0;
    for (const auto& g : generated) {
      if (!g.persona) {
        ++failed;
        failures += "\n  " + g.error;
      }
    }
    if (failed > 0) {
      throw Error(ErrorCode::kGeneration, "variant " + base_name + "/" +
                                              std::string(tag(strategy)) + " failed: " +
                                              std::to_string(failed) + " persona(s) missing" +
                                              failures);
    }
  }

  DatasetVariant v{base_name, strategy, split, {}, std::move(metadata)};
  v.records.reserve(base.size());
  std::string missing_gold;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto& src = base[i];
    std::optional<persona::Persona> p;
    if (strategy != Strategy::kNone) p = generated[i].persona;
    VariantRecord rec{persona::augment_query(src, p, strategy, v.metadata.concat_template),
                      std::nullopt, std::nullopt};
    if (split == Split::kTrain) {
      rec.output = src.output;
    } else {
      if (!src.gold_answer) missing_gold += " " + src.id;
      rec.gold_answer = src.gold_answer;
    }
    v.records.push_back(std::move(rec));
  }
  if (!missing_gold.empty()) {
    throw Error(ErrorCode::kUsage, "test variant needs gold answers; missing for:" + missing_gold);
  }
  return v;
}

PersonaSource personas_from_list(std::vector<persona::Persona> personas) {
  std::map<std::string, persona::Persona> by_id;
  for (auto& p : personas) by_id.emplace(p.source_query_id, std::move(p));
  return [by_id = std::move(by_id)](const std::vector<corpus::SourceRecord>& records) {
    std::vector<persona::PersonaResult> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (auto it = by_id.find(records[i].id); it != by_id.end()) {
        out[i].persona = it->second;
      } else {
        out[i].error = records[i].id + ": no persona in personas file";
      }
    }
    return out;
  };
}

std::string serialize_variant(const DatasetVariant& variant) {
  auto meta = meta_json(variant, true);
  meta["content_hash"] = variant.content_hash();
  return nlohmann::json{{"meta", meta}}.dump() + "\n" + records_jsonl(variant);
}

DatasetVariant parse_variant(std::string_view text, const std::string& name) {
  const auto lines = split_lines(text);
  std::size_t line_no = 0;
  try {
    if (lines.empty()) throw Error(ErrorCode::kParse, name + ": empty variant file");
    line_no = 1;
    const auto header = nlohmann::json::parse(lines[0]);
    const auto& m = header.at("meta");
    DatasetVariant v;
    v.base_name = m.at("base_name").get<std::string>();
    v.strategy = strategy_from_string(m.at("strategy").get<std::string>());
    v.split = split_from_string(m.at("split").get<std::string>());
    v.metadata.seed = m.at("seed").get<std::uint64_t>();
    v.metadata.template_hash = m.at("template_hash").get<std::string>();
    v.metadata.concat_template = m.at("concat_template").get<std::string>();
    v.metadata.generator_model = m.at("generator_model").get<std::string>();
    v.metadata.created_at = m.at("created_at").get<std::string>();
    v.metadata.config_hash = m.at("config_hash").get<std::string>();
    v.metadata.extra = m.value("extra", nlohmann::json::object());

    for (std::size_t i = 1; i < lines.size(); ++i) {
      line_no = i + 1;
      if (trim(lines[i]).empty()) continue;
      const auto j = nlohmann::json::parse(lines[i]);
      VariantRecord r;
      r.query.query_id = j.at("query_id").get<std::string>();
      r.query.rendered = j.at("rendered_query").get<std::string>();
      r.query.original = j.at("original_query").get<std::string>();
      r.query.strategy = strategy_from_string(j.at("strategy").get<std::string>());
      if (j.contains("persona_text")) {
        persona::Persona p;
        p.text = j.at("persona_text").get<std::string>();
        p.strategy = r.query.strategy;
        if (j.contains("domain")) p.domain = j.at("domain").get<std::string>();
        p.source_query_id = r.query.query_id;
        r.query.persona = std::move(p);
      }
      if (j.contains("output")) r.output = j.at("output").get<std::string>();
      if (j.contains("gold_answer")) r.gold_answer = j.at("gold_answer").get<std::string>();
      if (r.query.strategy != v.strategy) {
        throw Error(ErrorCode::kParse, name + ":" + std::to_string(line_no) +
                                           ": record strategy differs from variant strategy");
      }
      v.records.push_back(std::move(r));
    }
    const auto expected = m.at("count").get<std::size_t>();
    if (expected != v.records.size()) {
      throw Error(ErrorCode::kParse, name + ": header count " + std::to_string(expected) +
                                         " but " + std::to_string(v.records.size()) + " records");
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, name + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

bool save_variant(const std::filesystem::path& path, const DatasetVariant& variant) {
  if (std::filesystem::exists(path)) {
    try {
      const auto existing = load_variant(path);
      if (existing.content_hash() == variant.content_hash()) return false;
    } catch (const Error&) {
      // Unreadable leftovers are simply replaced.
    }
  }
  write_file_atomic(path, serialize_variant(variant));
  return true;
}

DatasetVariant load_variant(const std::filesystem::path& path) {
  return parse_variant(read_file(path), path.string());
}

// --- Manifest ----------------------------------------------------------------

TrainManifest emit_manifest(const DatasetVariant& variant, const std::string& base_model,
                            const std::string& dataset_path, const nlohmann::json& overrides) {
  if (variant.split != Split::kTrain) {
    throw Error(ErrorCode::kUsage, "training manifests can only be emitted for train variants (" +
                                       variant.base_name + "/" +
                                       std::string(tag(variant.strategy)) + " is a test variant)");
  }
  TrainManifest m;
  m.dataset_path = dataset_path;
  m.base_model = base_model;
  m.base_name = variant.base_name;
  m.strategy = variant.strategy;
  m.seed = variant.metadata.seed;
  m.variant_hash = variant.content_hash();
  m.config_hash = variant.metadata.config_hash;

  const TrainManifest defaults;
  if (!overrides.is_object()) throw Error(ErrorCode::kUsage, "manifest overrides must be an object");
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const auto& key = it.key();
    const auto& value = it.value();
    auto bad_type = [&](const char* expected) {
      return Error(ErrorCode::kUsage,
                   "override '" + key + "' must be " + expected + ", got " + value.dump());
    };
    if (key == "update_steps" || key == "batch_size" || key == "max_token_length") {
      if (!value.is_number_integer() || value.get<long long>() <= 0) {
        throw bad_type("a positive integer");
      }
      const int v = value.get<int>();
      if (key == "update_steps") m.update_steps = v;
      if (key == "batch_size") m.batch_size = v;
      if (key == "max_token_length") m.max_token_length = v;
    } else if (key == "learning_rate") {
      if (!value.is_number() || !(value.get<double>() > 0)) throw bad_type("a positive number");
      m.learning_rate = value.get<double>();
    } else if (key == "schedule") {
      if (!value.is_string() || value.get<std::string>().empty()) throw bad_type("a string");
      m.schedule = value.get<std::string>();
    } else if (key == "packing") {
      if (!value.is_boolean()) throw bad_type("a boolean");
      m.packing = value.get<bool>();
    } else {
      throw Error(ErrorCode::kUsage, "unknown manifest override '" + key + "'");
    }
  }
  const auto baseline = to_json(defaults);
  const auto current = to_json(m);
  for (const char* key : {"update_steps", "batch_size", "learning_rate", "schedule",
                          "max_token_length", "packing"}) {
    if (baseline.at(key) != current.at(key)) m.deviations.emplace_back(key);
  }
  return m;
}

nlohmann::json to_json(const TrainManifest& m) {
  return {{"update_steps", m.update_steps},
          {"batch_size", m.batch_size},
          {"learning_rate", m.learning_rate},
          {"schedule", m.schedule},
          {"max_token_length", m.max_token_length},
          {"packing", m.packing},
          {"dataset_path", m.dataset_path},
          {"base_model", m.base_model},
          {"base_name", m.base_name},
          {"strategy", std::string(tag(m.strategy))},
          {"seed", m.seed},
          {"variant_hash", m.variant_hash},
          {"config_hash", m.config_hash},
          {"deviations", m.deviations}};
}

TrainManifest manifest_from_json(const nlohmann::json& j) {
  try {
    TrainManifest m;
    m.update_steps = j.at("update_steps").get<int>();
    m.batch_size = j.at("batch_size").get<int>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.schedule = j.at("schedule").get<std::string>();
    m.max_token_length = j.at("max_token_length").get<int>();
    m.packing = j.at("packing").get<bool>();
    m.dataset_path = j.at("dataset_path").get<std::string>();
    m.base_model = j.at("base_model").get<std::string>();
    m.base_name = j.at("base_name").get<std::string>();
    m.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.variant_hash = j.at("variant_hash").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.deviations = j.at("deviations").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid manifest: ") + e.what());
  }
}

void save_manifest(const std::filesystem::path& path, const TrainManifest& manifest) {
  write_file_atomic(path, to_json(manifest).dump(2) + "\n");
}

}  // namespace its::variant
