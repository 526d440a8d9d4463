#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "its/completion.hpp"
#include "its/corpus.hpp"
#include "its/strategy.hpp"
#include "json.hpp"

namespace its::grader {

using Rational = boost::multiprecision::cpp_rational;

enum class AnswerMode { kMath, kChoice };

std::string_view to_string(AnswerMode mode);
AnswerMode answer_mode_from_string(std::string_view text);

// Text inside the final-answer marker and its [begin, end) byte offsets in
// the completion.
struct ExtractedAnswer {
  std::string raw;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool from_box = true;  // false when taken from a "final answer is" phrase

  bool operator==(const ExtractedAnswer&) const = default;
};

enum class BoxSelection { kLast, kFirst };

// Content of the last (or first) brace-balanced `boxed{...}`. Falls back to
// a trailing "final answer is X" phrase when no box closes.
std::optional<ExtractedAnswer> extract_boxed(std::string_view completion,
                                             BoxSelection selection = BoxSelection::kLast);

enum class AnswerKind { kInteger, kRational, kDecimal, kChoice, kString };

std::string_view to_string(AnswerKind kind);

// Numbers are exact rationals in lowest terms (cpp_rational normalizes),
// integers are rationals with denominator 1.
struct CanonicalAnswer {
  AnswerKind kind = AnswerKind::kString;
  Rational number;
  char letter = 0;
  std::string text;

  bool is_number() const {
    return kind == AnswerKind::kInteger || kind == AnswerKind::kRational ||
           kind == AnswerKind::kDecimal;
  }

  static CanonicalAnswer integer(std::int64_t value);
  static CanonicalAnswer rational(std::int64_t num, std::int64_t den);
  static CanonicalAnswer choice(char letter);
  static CanonicalAnswer string(std::string text);

  // Text form that canonicalizes back to this same answer.
  std::string render() const;

  bool operator==(const CanonicalAnswer&) const = default;
};

// nullopt means parse failure (empty answer, or choice mode without exactly
// one distinct letter A-D).
std::optional<CanonicalAnswer> canonicalize(std::string_view raw, AnswerMode mode);

// Numbers compare by value across numeric kinds; letters and strings compare
// exactly; anything else is unequal.
bool answers_equal(const CanonicalAnswer& a, const CanonicalAnswer& b);

nlohmann::json to_json(const CanonicalAnswer& answer);
CanonicalAnswer canonical_from_json(const nlohmann::json& j);

enum class FailureReason { kNoAnswerFound, kParseFailure, kMismatch };

std::string_view to_string(FailureReason reason);

struct GradeRecord {
  std::string query_id;
  std::optional<ExtractedAnswer> extracted;
  std::optional<CanonicalAnswer> canonical;
  CanonicalAnswer gold;
  bool correct = false;
  std::optional<FailureReason> failure;
  // "request_error", "missing_completion", "out_of_range", "audit".
  std::vector<std::string> flags;

  bool operator==(const GradeRecord&) const = default;
};

nlohmann::json to_json(const GradeRecord& record);
GradeRecord grade_record_from_json(const nlohmann::json& j);

struct GoldAnswer {
  std::string query_id;
  CanonicalAnswer answer;
};

struct GradeOptions {
  AnswerMode mode = AnswerMode::kMath;
  BoxSelection selection = BoxSelection::kLast;
  // Benchmarks with integer answers in a known range (AIME: 0..999).
  std::optional<std::pair<std::int64_t, std::int64_t>> integer_range;
};

struct GradeResult {
  std::vector<GradeRecord> records;  // benchmark order
  std::int64_t correct = 0;
  std::int64_t total = 0;  // benchmark size, failed questions included

  std::int64_t basis_points() const;  // pass@1 in hundredths of a percent
  std::string percent() const;        // "76.67"
};

// Grades each completion against gold. Questions without a completion count
// as incorrect; a completion whose id is not in `gold` is an error.
GradeResult grade_run(const std::vector<Completion>& completions,
                      const std::vector<GoldAnswer>& gold, const GradeOptions& options);

struct BenchmarkQuestion {
  std::string query_id;
  std::string query;
  std::string gold_answer;
};

// Gold file: header {"benchmark", "size", "mode", "integer_range"?} then one
// {query_id, query, gold_answer, mode?} per line.
struct Benchmark {
  std::string name;
  AnswerMode mode = AnswerMode::kMath;
  std::optional<std::pair<std::int64_t, std::int64_t>> integer_range;
  std::vector<BenchmarkQuestion> questions;

  std::size_t size() const { return questions.size(); }
  GradeOptions grade_options() const;
  // Gold answers canonicalized in the benchmark's mode; throws on bad gold.
  std::vector<GoldAnswer> gold() const;
  // Questions as source records (empty output), for building test variants.
  std::vector<corpus::SourceRecord> as_records() const;
};

// Summary line of a grade file. score_bp is pass@1 in hundredths of a
// percent; it normally equals round(correct / total) but may be supplied
// directly (e.g. scores averaged over repeated runs).
struct GradeSummary {
  std::string run_id;
  std::string base_dataset;
  std::optional<Strategy> train_strategy;
  std::optional<Strategy> test_strategy;
  std::string benchmark;
  std::int64_t correct = 0;
  std::int64_t total = 0;
  std::int64_t score_bp = 0;
  std::int64_t request_errors = 0;
  std::string config_hash;
  std::uint64_t seed = 0;

  bool operator==(const GradeSummary&) const = default;
};

GradeSummary summarize(const GradeResult& result, std::string benchmark);

nlohmann::json to_json(const GradeSummary& summary);
GradeSummary grade_summary_from_json(const nlohmann::json& j);

// Grade file: one GradeRecord per line, then {"summary": {...}}.
struct GradeFile {
  std::vector<GradeRecord> records;
  GradeSummary summary;
};

std::string serialize_grades(const std::vector<GradeRecord>& records, const GradeSummary& summary);
GradeFile parse_grades(std::string_view text, const std::string& name);
GradeFile load_grades(const std::filesystem::path& path);
void save_grades(const std::filesystem::path& path, const std::vector<GradeRecord>& records,
                 const GradeSummary& summary);

Benchmark parse_benchmark(std::string_view text, const std::string& name);
Benchmark load_benchmark(const std::filesystem::path& path);

}  // namespace its::grader
