#include "its/corpus.hpp"

#include <random>
#include <set>
#include <unordered_set>

#include "its/error.hpp"
#include "its/random.hpp"
#include "its/util.hpp"

namespace its::corpus {
namespace {

const std::set<std::string> kKnownFields = {"id", "query", "output", "gold_answer", "source"};

std::string where(const std::string& name, std::size_t line) {
  return name + ":" + std::to_string(line);
}

std::string required_string(const nlohmann::json& j, const char* field,
                            const std::string& location) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw Error(ErrorCode::kParse, location + ": missing required field '" + field + "'");
  }
  if (!it->is_string()) {
    throw Error(ErrorCode::kParse, location + ": field '" + field + "' must be a string");
  }
  auto value = it->get<std::string>();
  if (trim(value).empty()) {
    throw Error(ErrorCode::kParse, location + ": field '" + field + "' is empty");
  }
  return value;
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* field,
                                           const std::string& location) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw Error(ErrorCode::kParse, location + ": field '" + field + "' must be a string");
  }
  return it->get<std::string>();
}

SourceRecord parse_object(const nlohmann::json& j, const std::string& location,
                          const std::string& fallback_id, const std::string& default_source) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, location + ": expected a JSON object");
  SourceRecord r;
  r.id = optional_string(j, "id", location).value_or(fallback_id);
  r.query = required_string(j, "query", location);
  r.output = required_string(j, "output", location);
  r.gold_answer = optional_string(j, "gold_answer", location);
  r.source = optional_string(j, "source", location).value_or(default_source);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnownFields.count(it.key())) r.extra[it.key()] = it.value();
  }
  return r;
}

void check_unique(const std::vector<SourceRecord>& records) {
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) {
      throw Error(ErrorCode::kDuplicate, "duplicate record id '" + r.id + "'");
    }
  }
}

}  // namespace

std::vector<SourceRecord> parse_records(std::string_view jsonl, const std::string& name) {
  std::vector<SourceRecord> records;
  const auto lines = split_lines(jsonl);
  const auto stem = std::filesystem::path(name).stem().string();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (trim(line).empty()) continue;
    const auto location = where(name, i + 1);
    if (!is_valid_utf8(line)) {
      throw Error(ErrorCode::kParse, location + ": invalid UTF-8");
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kParse, location + ": malformed JSON (" + e.what() + ")");
    }
    if (records.empty() && j.is_object() && j.size() == 1 && j.contains("meta")) continue;
    records.push_back(parse_object(j, location, location, stem));
  }
  check_unique(records);
  return records;
}

std::vector<SourceRecord> load_records(const std::filesystem::path& path, RecordFormat format) {
  const auto content = read_file(path);
  const auto name = path.filename().string();
  if (format == RecordFormat::kJsonl) return parse_records(content, name);

  if (!is_valid_utf8(content)) throw Error(ErrorCode::kParse, name + ": invalid UTF-8");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, name + ": malformed JSON (" + e.what() + ")");
  }
  if (!doc.is_array()) throw Error(ErrorCode::kParse, name + ": expected a JSON array");
  std::vector<SourceRecord> records;
  const auto stem = path.stem().string();
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto location = name + "[" + std::to_string(i) + "]";
    records.push_back(parse_object(doc[i], location, location, stem));
  }
  check_unique(records);
  return records;
}

FilterResult filter_records(const std::vector<SourceRecord>& records, const CorpusFilter& filter) {
  FilterResult result;
  for (const auto& r : records) {
    bool keep = true;
    for (const auto& marker : filter.required_substrings) {
      if (r.output.find(marker) == std::string::npos) {
        keep = false;
        break;
      }
    }
    if (keep) {
      result.kept.push_back(r);
    } else {
      ++result.dropped;
    }
  }
  return result;
}

std::vector<SourceRecord> sample_records(const std::vector<SourceRecord>& records,
                                         const SampleSpec& spec) {
  if (spec.count == 0) throw Error(ErrorCode::kUsage, "sample count must be positive");
  if (spec.mode == SampleMode::kPrefix) {
    const auto n = std::min(spec.count, records.size());
    return {records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n)};
  }
  if (spec.count > records.size()) {
    throw Error(ErrorCode::kUsage, "cannot sample " + std::to_string(spec.count) +
                                       " records without replacement from a pool of " +
                                       std::to_string(records.size()));
  }
  std::vector<std::size_t> index(records.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  std::mt19937_64 rng(spec.seed);
  std::vector<SourceRecord> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto j = i + bounded_draw(rng, index.size() - i);
    std::swap(index[i], index[j]);
    out.push_back(records[index[i]]);
  }
  return out;
}

nlohmann::json to_json(const SourceRecord& record) {
  nlohmann::json j = record.extra.is_object() ? record.extra : nlohmann::json::object();
  j["id"] = record.id;
  j["query"] = record.query;
  j["output"] = record.output;
  if (record.gold_answer) j["gold_answer"] = *record.gold_answer;
  j["source"] = record.source;
  return j;
}

SourceRecord record_from_json(const nlohmann::json& j, const std::string& fallback_id) {
  return parse_object(j, fallback_id, fallback_id, "");
}

std::string to_jsonl(const std::vector<SourceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

void save_records(const std::filesystem::path& path, const std::vector<SourceRecord>& records,
                  const nlohmann::json& meta) {
  std::string header;
  if (!meta.is_null()) header = nlohmann::json{{"meta", meta}}.dump() + "\n";
  write_file_atomic(path, header + to_jsonl(records));
}

std::string_view to_string(SampleMode mode) {
  return mode == SampleMode::kPrefix ? "prefix" : "uniform_without_replacement";
}

SampleMode sample_mode_from_string(std::string_view text) {
  if (text == "prefix") return SampleMode::kPrefix;
  if (text == "uniform" || text == "uniform_without_replacement") {
    return SampleMode::kUniformWithoutReplacement;
  }
  throw Error(ErrorCode::kConfig, "unknown sample mode '" + std::string(text) + "'");
}

}  // namespace its::corpus
