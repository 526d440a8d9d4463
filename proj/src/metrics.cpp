#include "its/metrics.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "its/error.hpp"
#include "its/util.hpp"

namespace its::metrics {
namespace {

std::string pair_tag(Strategy train, Strategy test) {
  return std::string(tag(train)) + "-" + std::string(tag(test));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string table_row(const std::vector<std::string>& cells) {
  return "| " + join(cells, " | ") + " |\n";
}

std::string table_rule(std::size_t label_columns, std::size_t value_columns) {
  std::vector<std::string> cells(label_columns, "---");
  cells.insert(cells.end(), value_columns, "---:");
  return table_row(cells);
}

void push_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const char* what) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string(what) + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

bool CellKeyLess::operator()(const CellKey& a, const CellKey& b) const {
  return std::forward_as_tuple(order_rank(a.train), order_rank(a.test), a.benchmark) <
         std::forward_as_tuple(order_rank(b.train), order_rank(b.test), b.benchmark);
}

std::string describe(const CellKey& key) {
  return pair_tag(key.train, key.test) + "/" + key.benchmark;
}

const Cell* StrategyMatrix::find(Strategy train, Strategy test,
                                 const std::string& benchmark) const {
  auto it = cells.find(CellKey{train, test, benchmark});
  return it == cells.end() ? nullptr : &it->second;
}

std::vector<CellKey> StrategyMatrix::missing() const { return missing(benchmarks); }

std::vector<CellKey> StrategyMatrix::missing(const std::vector<std::string>& names) const {
  std::vector<CellKey> holes;
  for (auto train : kStrategyOrder) {
    for (auto test : kStrategyOrder) {
      for (const auto& b : names) {
        if (!find(train, test, b)) holes.push_back(CellKey{train, test, b});
      }
    }
  }
  return holes;
}

StrategyMatrix assemble_matrix(const std::vector<grader::GradeSummary>& summaries,
                               const std::vector<std::string>& benchmark_order) {
  StrategyMatrix m;
  m.benchmarks = benchmark_order;
  bool have_base = false;
  for (const auto& s : summaries) {
    if (!s.train_strategy || !s.test_strategy) {
      throw Error(ErrorCode::kUsage,
                  "grade summary '" + s.run_id + "' lacks train/test strategy labels");
    }
    if (!have_base) {
      m.base_dataset = s.base_dataset;
      have_base = true;
    } else if (s.base_dataset != m.base_dataset) {
      throw Error(ErrorCode::kUsage, "grade summaries mix base datasets '" + m.base_dataset +
                                         "' and '" + s.base_dataset + "'");
    }
    CellKey key{*s.train_strategy, *s.test_strategy, s.benchmark};
    Cell cell{s.score_bp, s.correct, s.total, s.run_id, s.request_errors};
    auto [it, inserted] = m.cells.emplace(key, cell);
    if (!inserted) {
      throw Error(ErrorCode::kDuplicate, "duplicate cell " + describe(key) + ": runs '" +
                                             it->second.run_id + "' and '" + s.run_id + "'");
    }
    push_unique(m.benchmarks, s.benchmark);
  }
  return m;
}

nlohmann::json to_json(const StrategyMatrix& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, cell] : m.cells) {
    cells.push_back({{"train", tag(key.train)},
                     {"test", tag(key.test)},
                     {"benchmark", key.benchmark},
                     {"pass_at_1", format_basis_points(cell.score_bp)},
                     {"score_bp", cell.score_bp},
                     {"correct", cell.correct},
                     {"total", cell.total},
                     {"run_id", cell.run_id},
                     {"request_errors", cell.request_errors}});
  }
  nlohmann::json holes = nlohmann::json::array();
  for (const auto& key : m.missing()) holes.push_back(describe(key));
  return {{"base_dataset", m.base_dataset},
          {"benchmarks", m.benchmarks},
          {"cells", cells},
          {"missing", holes}};
}

StrategyMatrix matrix_from_json(const nlohmann::json& j) {
  StrategyMatrix m;
  m.base_dataset = get_field<std::string>(j, "base_dataset", "matrix");
  m.benchmarks = get_field<std::vector<std::string>>(j, "benchmarks", "matrix");
  if (!j.contains("cells") || !j.at("cells").is_array()) {
    throw Error(ErrorCode::kParse, "matrix: 'cells' must be an array");
  }
  for (const auto& c : j.at("cells")) {
    CellKey key{strategy_from_string(get_field<std::string>(c, "train", "matrix cell")),
                strategy_from_string(get_field<std::string>(c, "test", "matrix cell")),
                get_field<std::string>(c, "benchmark", "matrix cell")};
    Cell cell;
    cell.score_bp = get_field<std::int64_t>(c, "score_bp", "matrix cell");
    cell.correct = get_field<std::int64_t>(c, "correct", "matrix cell");
    cell.total = get_field<std::int64_t>(c, "total", "matrix cell");
    cell.run_id = get_field<std::string>(c, "run_id", "matrix cell");
    cell.request_errors = c.value("request_errors", std::int64_t{0});
    if (!m.cells.emplace(key, cell).second) {
      throw Error(ErrorCode::kDuplicate, "matrix: duplicate cell " + describe(key));
    }
  }
  return m;
}

std::string_view to_string(TieBreak rule) {
  switch (rule) {
    case TieBreak::kFirst:
      return "first";
    case TieBreak::kNone:
      return "none";
  }
  return "first";
}

TieBreak tie_break_from_string(std::string_view text) {
  if (text == "first") return TieBreak::kFirst;
  if (text == "none") return TieBreak::kNone;
  throw Error(ErrorCode::kUsage,
              "unknown tie_break '" + std::string(text) + "' (expected first or none)");
}

void VoteSpec::validate() const {
  for (const auto& m : members) {
    if (m.empty()) throw Error(ErrorCode::kUsage, "vote member run_id must not be empty");
  }
  if (members[0] == members[1] || members[0] == members[2] || members[1] == members[2]) {
    throw Error(ErrorCode::kUsage, "vote members must be three distinct run_ids: " +
                                       members[0] + ", " + members[1] + ", " + members[2]);
  }
}

std::string VoteSpec::display_label() const {
  if (!label.empty()) return label;
  return members[0] + " " + members[1] + " " + members[2];
}

nlohmann::json to_json(const VoteSpec& spec) {
  nlohmann::json j = {{"members", spec.members}, {"tie_break", to_string(spec.tie_break)}};
  if (!spec.label.empty()) j["label"] = spec.label;
  return j;
}

VoteSpec vote_spec_from_json(const nlohmann::json& j) {
  VoteSpec spec;
  auto members = get_field<std::vector<std::string>>(j, "members", "vote spec");
  if (members.size() != 3) {
    throw Error(ErrorCode::kUsage,
                "vote spec needs exactly 3 members, got " + std::to_string(members.size()));
  }
  std::copy(members.begin(), members.end(), spec.members.begin());
  spec.tie_break = tie_break_from_string(j.value("tie_break", std::string("first")));
  spec.label = j.value("label", std::string{});
  spec.validate();
  return spec;
}

std::int64_t VoteResult::score_bp() const { return percent_basis_points(correct, total); }

std::string VoteResult::fraction() const { return format_fraction3(correct, total); }

VoteResult majority_vote(const VoteSpec& spec,
                         const std::array<std::vector<grader::GradeRecord>, 3>& records,
                         std::string benchmark) {
  spec.validate();
  std::array<std::unordered_map<std::string, const grader::GradeRecord*>, 3> by_id;
  for (int m = 0; m < 3; ++m) {
    for (const auto& r : records[m]) {
      if (!by_id[m].emplace(r.query_id, &r).second) {
        throw Error(ErrorCode::kDuplicate,
                    "run '" + spec.members[m] + "' grades query '" + r.query_id + "' twice");
      }
    }
  }
  std::set<std::string> all_ids;
  for (const auto& ids : by_id) {
    for (const auto& [id, _] : ids) all_ids.insert(id);
  }
  std::vector<std::string> asymmetric;
  for (const auto& id : all_ids) {
    std::string missing_from;
    for (int m = 0; m < 3; ++m) {
      if (!by_id[m].count(id)) missing_from += (missing_from.empty() ? "" : ",") + spec.members[m];
    }
    if (!missing_from.empty()) asymmetric.push_back(id + " (missing from " + missing_from + ")");
  }
  if (!asymmetric.empty()) {
    throw Error(ErrorCode::kUsage, "vote members grade different questions: " + join(asymmetric, "; "));
  }

  VoteResult result;
  result.spec = spec;
  result.benchmark = std::move(benchmark);
  for (const auto& first : records[0]) {
    const std::array<const grader::GradeRecord*, 3> rec = {
        &first, by_id[1].at(first.query_id), by_id[2].at(first.query_id)};
    for (int m = 1; m < 3; ++m) {
      if (!grader::answers_equal(rec[m]->gold, first.gold)) {
        throw Error(ErrorCode::kUsage, "vote members disagree on the gold answer of '" +
                                           first.query_id + "'");
      }
    }
    VoteQuestion q;
    q.query_id = first.query_id;
    auto agree = [&](int a, int b) {
      return rec[a]->canonical && rec[b]->canonical &&
             grader::answers_equal(*rec[a]->canonical, *rec[b]->canonical);
    };
    int winner = -1;
    if (agree(0, 1) || agree(0, 2)) {
      winner = 0;
    } else if (agree(1, 2)) {
      winner = 1;
    }
    if (winner < 0) {
      q.three_way = true;
      if (spec.tie_break == TieBreak::kFirst && rec[0]->canonical) winner = 0;
    }
    if (winner >= 0) {
      q.chosen_member = winner;
      q.chosen = rec[winner]->canonical;
      for (int m = 0; m < 3; ++m) {
        if (m == winner || agree(winner, m)) ++q.support;
      }
      q.correct = grader::answers_equal(*q.chosen, first.gold);
    }
    if (q.correct) ++result.correct;
    result.questions.push_back(std::move(q));
  }
  result.total = static_cast<std::int64_t>(result.questions.size());
  return result;
}

nlohmann::json to_json(const VoteResult& r, bool with_questions) {
  nlohmann::json j = {{"label", r.spec.display_label()},
                      {"spec", to_json(r.spec)},
                      {"benchmark", r.benchmark},
                      {"correct", r.correct},
                      {"total", r.total},
                      {"pass_at_1", format_basis_points(r.score_bp())},
                      {"fraction", r.fraction()}};
  if (with_questions) {
    nlohmann::json qs = nlohmann::json::array();
    for (const auto& q : r.questions) {
      qs.push_back({{"query_id", q.query_id},
                    {"chosen", q.chosen ? grader::to_json(*q.chosen) : nlohmann::json()},
                    {"chosen_member", q.chosen_member},
                    {"support", q.support},
                    {"three_way", q.three_way},
                    {"correct", q.correct}});
    }
    j["questions"] = qs;
  }
  return j;
}

VoteResult vote_result_from_json(const nlohmann::json& j) {
  VoteResult r;
  if (!j.contains("spec")) throw Error(ErrorCode::kParse, "vote result: missing 'spec'");
  r.spec = vote_spec_from_json(j.at("spec"));
  r.benchmark = get_field<std::string>(j, "benchmark", "vote result");
  r.correct = get_field<std::int64_t>(j, "correct", "vote result");
  r.total = get_field<std::int64_t>(j, "total", "vote result");
  if (j.contains("questions")) {
    for (const auto& qj : j.at("questions")) {
      VoteQuestion q;
      q.query_id = get_field<std::string>(qj, "query_id", "vote question");
      if (qj.contains("chosen") && !qj.at("chosen").is_null()) {
        q.chosen = grader::canonical_from_json(qj.at("chosen"));
      }
      q.chosen_member = qj.value("chosen_member", -1);
      q.support = qj.value("support", 0);
      q.three_way = qj.value("three_way", false);
      q.correct = qj.value("correct", false);
      r.questions.push_back(std::move(q));
    }
  }
  return r;
}

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kMinThenSum:
      return "min-then-sum";
    case Objective::kSum:
      return "sum";
  }
  return "min-then-sum";
}

Objective objective_from_string(std::string_view text) {
  if (text == "min-then-sum") return Objective::kMinThenSum;
  if (text == "sum") return Objective::kSum;
  throw Error(ErrorCode::kUsage,
              "unknown objective '" + std::string(text) + "' (expected min-then-sum or sum)");
}

std::vector<RankedPair> best_cells(const StrategyMatrix& matrix,
                                   const std::vector<std::string>& benchmarks,
                                   Objective objective) {
  const auto& names = benchmarks.empty() ? matrix.benchmarks : benchmarks;
  if (names.empty()) throw Error(ErrorCode::kUsage, "best_cells: no benchmarks to rank");
  const auto holes = matrix.missing(names);
  if (!holes.empty()) {
    std::vector<std::string> listed;
    for (const auto& h : holes) listed.push_back(describe(h));
    throw Error(ErrorCode::kUsage, "cannot rank incomplete matrix '" + matrix.base_dataset +
                                       "'; missing cells: " + join(listed, ", "));
  }
  std::vector<RankedPair> ranked;
  for (auto train : kStrategyOrder) {
    for (auto test : kStrategyOrder) {
      RankedPair p{train, test, {}};
      for (const auto& b : names) p.scores_bp.push_back(matrix.find(train, test, b)->score_bp);
      ranked.push_back(std::move(p));
    }
  }
  auto key = [objective](const RankedPair& p) {
    std::int64_t sum = 0;
    for (auto s : p.scores_bp) sum += s;
    const auto lo = *std::min_element(p.scores_bp.begin(), p.scores_bp.end());
    return objective == Objective::kMinThenSum ? std::pair{lo, sum} : std::pair{sum, std::int64_t{0}};
  };
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](const RankedPair& a, const RankedPair& b) { return key(a) > key(b); });
  return ranked;
}

nlohmann::json to_json(const ComparisonTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"model", r.model}, {"method", r.method}, {"scores", r.scores}});
  }
  return {{"columns", t.columns}, {"rows", rows}};
}

ComparisonTable comparison_from_json(const nlohmann::json& j) {
  ComparisonTable t;
  if (j.is_null()) return t;
  t.columns = j.value("columns", std::vector<std::string>{});
  if (j.contains("rows")) {
    for (const auto& rj : j.at("rows")) {
      ComparisonRow r;
      r.model = get_field<std::string>(rj, "model", "comparison row");
      r.method = rj.value("method", std::string{});
      if (rj.contains("scores")) {
        for (const auto& [k, v] : rj.at("scores").items()) {
          r.scores[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
      }
      t.rows.push_back(std::move(r));
    }
  }
  return t;
}

std::string render_matrix_table(const StrategyMatrix& m) {
  std::vector<std::string> header = {"Train", "Test"};
  header.insert(header.end(), m.benchmarks.begin(), m.benchmarks.end());
  std::string out = table_row(header) + table_rule(2, m.benchmarks.size());
  for (auto train : kStrategyOrder) {
    for (auto test : kStrategyOrder) {
      std::vector<std::string> row = {std::string(tag(train)), std::string(tag(test))};
      for (const auto& b : m.benchmarks) {
        const auto* cell = m.find(train, test, b);
        row.push_back(cell ? format_basis_points(cell->score_bp) : "-");
      }
      out += table_row(row);
    }
  }
  return out;
}

ReportDocuments render_report(const ReportInput& in) {
  std::ostringstream md;
  nlohmann::json matrices = nlohmann::json::array();
  nlohmann::json rankings = nlohmann::json::array();

  md << "# Strategy evaluation report\n\n";
  if (!in.config_hash.empty()) md << "config_hash: " << in.config_hash << "\n";
  if (in.seed) md << "seed: " << *in.seed << "\n";
  if (!in.config_hash.empty() || in.seed) md << "\n";

  md << "## Strategy matrices\n\n";
  bool any_cells = false;
  for (const auto& m : in.matrices) any_cells = any_cells || !m.cells.empty();
  if (!any_cells) md << "No cells.\n\n";
  for (const auto& m : in.matrices) {
    matrices.push_back(to_json(m));
    if (m.cells.empty()) continue;
    md << "### " << m.base_dataset << "\n\n" << render_matrix_table(m) << "\n";
    const auto holes = m.missing();
    if (!holes.empty()) {
      std::vector<std::string> listed;
      for (const auto& h : holes) listed.push_back(describe(h));
      md << "Missing cells: " << join(listed, ", ") << "\n\n";
    }
    std::vector<std::string> flagged;
    for (const auto& [key, cell] : m.cells) {
      if (cell.request_errors > 0) {
        flagged.push_back(describe(key) + " (" + std::to_string(cell.request_errors) + ")");
      }
    }
    if (!flagged.empty()) {
      md << "Failed requests graded as incorrect: " << join(flagged, ", ") << "\n\n";
    }
    if (in.best_benchmarks.empty()) continue;
    const bool named = std::all_of(in.best_benchmarks.begin(), in.best_benchmarks.end(),
                                   [&](const std::string& b) {
                                     return std::find(m.benchmarks.begin(), m.benchmarks.end(),
                                                      b) != m.benchmarks.end();
                                   });
    if (!named || !m.missing(in.best_benchmarks).empty()) continue;
    const auto ranked = best_cells(m, in.best_benchmarks, in.objective);
    nlohmann::json ranking = nlohmann::json::array();
    std::vector<std::string> top;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      std::vector<std::string> scores;
      for (auto s : ranked[i].scores_bp) scores.push_back(format_basis_points(s));
      ranking.push_back({{"train", tag(ranked[i].train)},
                         {"test", tag(ranked[i].test)},
                         {"scores", scores}});
      if (i < 3) {
        top.push_back(pair_tag(ranked[i].train, ranked[i].test) + " (" + join(scores, ", ") + ")");
      }
    }
    rankings.push_back({{"base_dataset", m.base_dataset},
                        {"benchmarks", in.best_benchmarks},
                        {"objective", to_string(in.objective)},
                        {"ranking", ranking}});
    md << "Best on " << join(in.best_benchmarks, " + ") << " (" << to_string(in.objective)
       << "): " << join(top, ", ") << "\n\n";
  }

  md << "## Majority votes\n\n";
  nlohmann::json votes = nlohmann::json::array();
  if (in.votes.empty()) {
    md << "No votes.\n\n";
  } else {
    std::vector<std::string> labels;
    std::vector<std::string> columns;
    std::map<std::pair<std::string, std::string>, const VoteResult*> by_cell;
    for (const auto& v : in.votes) {
      const auto label = v.spec.display_label();
      push_unique(labels, label);
      push_unique(columns, v.benchmark);
      by_cell[{label, v.benchmark}] = &v;
      votes.push_back(to_json(v, false));
    }
    std::vector<std::string> header = {"Majority vote"};
    header.insert(header.end(), columns.begin(), columns.end());
    md << table_row(header) << table_rule(1, columns.size());
    for (const auto& label : labels) {
      std::vector<std::string> row = {label};
      for (const auto& c : columns) {
        auto it = by_cell.find({label, c});
        row.push_back(it == by_cell.end() ? "-" : it->second->fraction());
      }
      md << table_row(row);
    }
    md << "\nTie-break rules:\n";
    std::set<std::string> seen;
    for (const auto& v : in.votes) {
      const auto label = v.spec.display_label();
      if (!seen.insert(label).second) continue;
      md << "- " << label << ": " << to_string(v.spec.tie_break) << " (" << v.spec.members[0]
         << ", " << v.spec.members[1] << ", " << v.spec.members[2] << ")\n";
    }
    md << "\n";
  }

  md << "## Comparison\n\n";
  if (in.comparisons.rows.empty()) {
    md << "No comparison rows.\n";
  } else {
    std::vector<std::string> header = {"Model", "Method"};
    header.insert(header.end(), in.comparisons.columns.begin(), in.comparisons.columns.end());
    md << table_row(header) << table_rule(2, in.comparisons.columns.size());
    for (const auto& r : in.comparisons.rows) {
      std::vector<std::string> row = {r.model, r.method.empty() ? "-" : r.method};
      for (const auto& c : in.comparisons.columns) {
        auto it = r.scores.find(c);
        row.push_back(it == r.scores.end() ? "-" : it->second);
      }
      md << table_row(row);
    }
  }

  ReportDocuments docs;
  docs.markdown = md.str();
  docs.json = {{"matrix", matrices},
               {"votes", votes},
               {"comparisons", to_json(in.comparisons)},
               {"best", rankings},
               {"config_hash", in.config_hash}};
  docs.json["seed"] = in.seed ? nlohmann::json(*in.seed) : nlohmann::json();
  return docs;
}

nlohmann::json load_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

void save_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_file_atomic(path, doc.dump(2) + "\n");
}

}  // namespace its::metrics
