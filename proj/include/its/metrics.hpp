#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "its/grader.hpp"
#include "its/strategy.hpp"
#include "json.hpp"

namespace its::metrics {

struct CellKey {
  Strategy train = Strategy::kNone;
  Strategy test = Strategy::kNone;
  std::string benchmark;

  bool operator==(const CellKey&) const = default;
};

// Train-major N<R<S<D, then benchmark name.
struct CellKeyLess {
  bool operator()(const CellKey& a, const CellKey& b) const;
};

std::string describe(const CellKey& key);  // "S-D/AIME24"

struct Cell {
  std::int64_t score_bp = 0;
  std::int64_t correct = 0;
  std::int64_t total = 0;
  std::string run_id;
  std::int64_t request_errors = 0;

  bool operator==(const Cell&) const = default;
};

struct StrategyMatrix {
  std::string base_dataset;
  std::vector<std::string> benchmarks;  // column order
  std::map<CellKey, Cell, CellKeyLess> cells;

  const Cell* find(Strategy train, Strategy test, const std::string& benchmark) const;
  // Absent keys over 4x4 x benchmarks, in canonical order.
  std::vector<CellKey> missing() const;
  std::vector<CellKey> missing(const std::vector<std::string>& benchmarks) const;
  bool complete() const { return missing().empty(); }

  bool operator==(const StrategyMatrix&) const = default;
};

// Summaries must share one base dataset and carry both strategy labels.
// Benchmark columns follow `benchmark_order`, then first appearance.
StrategyMatrix assemble_matrix(const std::vector<grader::GradeSummary>& summaries,
                               const std::vector<std::string>& benchmark_order = {});

nlohmann::json to_json(const StrategyMatrix& matrix);
StrategyMatrix matrix_from_json(const nlohmann::json& j);

enum class TieBreak { kFirst, kNone };

std::string_view to_string(TieBreak rule);
TieBreak tie_break_from_string(std::string_view text);

struct VoteSpec {
  std::array<std::string, 3> members;
  TieBreak tie_break = TieBreak::kFirst;
  std::string label;  // e.g. "S-D D-S R-R"; defaults to the run ids

  void validate() const;
  std::string display_label() const;
};

nlohmann::json to_json(const VoteSpec& spec);
VoteSpec vote_spec_from_json(const nlohmann::json& j);

struct VoteQuestion {
  std::string query_id;
  std::optional<grader::CanonicalAnswer> chosen;
  int chosen_member = -1;  // index into members, -1 when nothing chosen
  int support = 0;         // members agreeing with the chosen answer
  bool three_way = false;  // no answer held by two members
  bool correct = false;

  bool operator==(const VoteQuestion&) const = default;
};

struct VoteResult {
  VoteSpec spec;
  std::string benchmark;
  std::vector<VoteQuestion> questions;
  std::int64_t correct = 0;
  std::int64_t total = 0;

  std::int64_t score_bp() const;
  std::string fraction() const;  // "0.800"
};

// Records are matched by query_id and reported in the first member's order.
// Answers without a canonical form never form a majority.
VoteResult majority_vote(const VoteSpec& spec,
                         const std::array<std::vector<grader::GradeRecord>, 3>& records,
                         std::string benchmark = {});

nlohmann::json to_json(const VoteResult& result, bool with_questions = true);
VoteResult vote_result_from_json(const nlohmann::json& j);

enum class Objective { kMinThenSum, kSum };

std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view text);

struct RankedPair {
  Strategy train = Strategy::kNone;
  Strategy test = Strategy::kNone;
  std::vector<std::int64_t> scores_bp;  // one per ranked benchmark
};

// Best first; equal objectives keep canonical order.
std::vector<RankedPair> best_cells(const StrategyMatrix& matrix,
                                   const std::vector<std::string>& benchmarks,
                                   Objective objective = Objective::kMinThenSum);

// Externally supplied rows (published scores of other models), rendered as-is.
struct ComparisonRow {
  std::string model;
  std::string method;
  std::map<std::string, std::string> scores;

  bool operator==(const ComparisonRow&) const = default;
};

struct ComparisonTable {
  std::vector<std::string> columns;
  std::vector<ComparisonRow> rows;

  bool operator==(const ComparisonTable&) const = default;
};

nlohmann::json to_json(const ComparisonTable& table);
ComparisonTable comparison_from_json(const nlohmann::json& j);

struct ReportInput {
  std::vector<StrategyMatrix> matrices;
  std::vector<VoteResult> votes;
  ComparisonTable comparisons;
  std::vector<std::string> best_benchmarks;  // pair ranked under each matrix
  Objective objective = Objective::kMinThenSum;
  std::string config_hash;
  std::optional<std::uint64_t> seed;
};

struct ReportDocuments {
  std::string markdown;
  nlohmann::json json;  // {matrix, votes, comparisons, ...}
};

ReportDocuments render_report(const ReportInput& input);

// Markdown table for one matrix: Train | Test | one column per benchmark.
std::string render_matrix_table(const StrategyMatrix& matrix);

// Pretty-printed JSON documents used for matrix, vote and report files.
nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace its::metrics
