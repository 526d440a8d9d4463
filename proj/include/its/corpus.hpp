#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace its::corpus {

// One reasoning example from a source corpus.
struct SourceRecord {
  std::string id;
  std::string query;
  std::string output;  // full reasoning trace plus final answer
  std::optional<std::string> gold_answer;
  std::string source;
  nlohmann::json extra = nlohmann::json::object();  // unknown fields, passed through

  bool operator==(const SourceRecord&) const = default;
};

struct CorpusFilter {
  // Every string must appear in `output` (case-sensitive, literal).
  std::vector<std::string> required_substrings{"final answer", "boxed{"};
};

enum class SampleMode { kUniformWithoutReplacement, kPrefix };

struct SampleSpec {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  SampleMode mode = SampleMode::kUniformWithoutReplacement;
};

enum class RecordFormat { kJsonl, kJsonArray };

struct FilterResult {
  std::vector<SourceRecord> kept;
  std::size_t dropped = 0;
};

// Loads every record in file order. Missing ids become "<filename>:<line>".
// Throws its::Error naming the offending line or duplicate id.
std::vector<SourceRecord> load_records(const std::filesystem::path& path,
                                       RecordFormat format = RecordFormat::kJsonl);

// Same as load_records but over in-memory JSONL; `name` stands in for the filename.
std::vector<SourceRecord> parse_records(std::string_view jsonl, const std::string& name);

FilterResult filter_records(const std::vector<SourceRecord>& records,
                            const CorpusFilter& filter = {});

// Uniform mode draws without replacement in draw order using std::mt19937_64
// seeded with spec.seed, bounded draws by rejection sampling and a partial
// Fisher-Yates shuffle. Prefix mode returns the first `count` records (or all
// of them if the pool is smaller).
std::vector<SourceRecord> sample_records(const std::vector<SourceRecord>& records,
                                         const SampleSpec& spec);

nlohmann::json to_json(const SourceRecord& record);
SourceRecord record_from_json(const nlohmann::json& j, const std::string& fallback_id);

std::string to_jsonl(const std::vector<SourceRecord>& records);
// A non-null `meta` is written as a leading {"meta": ...} line, which
// parse_records skips.
void save_records(const std::filesystem::path& path, const std::vector<SourceRecord>& records,
                  const nlohmann::json& meta = nullptr);

std::string_view to_string(SampleMode mode);
SampleMode sample_mode_from_string(std::string_view text);

}  // namespace its::corpus
