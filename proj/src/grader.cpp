#include "its/grader.hpp"

#include <cctype>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "its/error.hpp"
#include "its/util.hpp"

namespace its::grader {
namespace {

using boost::multiprecision::cpp_int;

constexpr std::size_t kMaxDigits = 400;

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Index of the brace closing the group opened at `open`, skipping escaped
// braces; npos when unbalanced.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && (s[i + 1] == '{' || s[i + 1] == '}')) {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

const std::set<std::string, std::less<>> kDroppedCommands = {
    "left", "right", "displaystyle", "textstyle", "quad", "qquad", "bigl", "bigr",
    "big", "Big", "bigg", "Bigg"};
const std::set<std::string, std::less<>> kUnwrappedCommands = {
    "text", "textbf", "textit", "textrm", "textnormal", "textsf", "texttt", "mathrm",
    "mathbf", "mathit", "mathsf", "mathtt", "mbox", "boxed"};

// Removes sizing/spacing commands and unwraps \text{...}-style groups.
std::string strip_latex(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '~') {
      ++i;
      continue;
    }
    if (c != '\\' || i + 1 >= s.size()) {
      out.push_back(c);
      ++i;
      continue;
    }
    const char next = s[i + 1];
    if (next == ',' || next == ';' || next == '!' || next == ':' || is_space(next)) {
      i += 2;
      continue;
    }
    if (!is_alpha(next)) {
      out.push_back(c);
      out.push_back(next);
      i += 2;
      continue;
    }
    std::size_t j = i + 1;
    while (j < s.size() && is_alpha(s[j])) ++j;
    const auto name = s.substr(i + 1, j - i - 1);
    if (kDroppedCommands.count(name)) {
      i = j;
      continue;
    }
    if (kUnwrappedCommands.count(name)) {
      std::size_t k = j;
      while (k < s.size() && is_space(s[k])) ++k;
      if (k < s.size() && s[k] == '{') {
        const auto close = matching_brace(s, k);
        if (close != std::string_view::npos) {
          out += strip_latex(s.substr(k + 1, close - k - 1));
          i = close + 1;
          continue;
        }
      }
      i = j;
      continue;
    }
    if (name == "dfrac" || name == "tfrac") {
      out += "\\frac";
    } else {
      out += "\\";
      out += name;
    }
    i = j;
  }
  return out;
}

// Drops matching delimiters that wrap the whole answer.
std::string strip_enclosing(std::string s) {
  for (;;) {
    const auto t = std::string(trim(s));
    if (t.size() >= 2 && t.front() == '$' && t.back() == '$') {
      s = t.substr(1, t.size() - 2);
    } else if (t.size() >= 4 && (t.rfind("\\(", 0) == 0 && t.substr(t.size() - 2) == "\\)")) {
      s = t.substr(2, t.size() - 4);
    } else if (t.size() >= 4 && (t.rfind("\\[", 0) == 0 && t.substr(t.size() - 2) == "\\]")) {
      s = t.substr(2, t.size() - 4);
    } else if (t.size() >= 2 && t.front() == '{' && matching_brace(t, 0) == t.size() - 1) {
      s = t.substr(1, t.size() - 2);
    } else {
      return t;
    }
  }
}

std::string strip_trailing_periods(std::string s) {
  for (;;) {
    auto t = std::string(trim(s));
    if (t.empty() || t.back() != '.') return t;
    t.pop_back();
    s = t;
  }
}

std::string normalize_once(std::string_view raw, bool lowercase) {
  std::string s = lowercase ? to_lower_ascii(raw) : std::string(raw);
  s = replace_all(s, "{,}", ",");
  s = replace_all(s, "^{\\circ}", "");
  s = replace_all(s, "^\\circ", "");
  s = strip_enclosing(s);
  s = strip_latex(s);
  s = strip_enclosing(s);
  return strip_trailing_periods(s);
}

std::string normalize(std::string_view raw, bool lowercase) {
  std::string s(raw);
  for (int round = 0; round < 32; ++round) {
    auto next = normalize_once(s, lowercase);
    if (next == s) break;
    s = std::move(next);
  }
  return s;
}

std::optional<cpp_int> parse_digits(std::string_view digits) {
  if (digits.empty() || digits.size() > kMaxDigits) return std::nullopt;
  cpp_int value = 0;
  for (char c : digits) {
    if (!is_digit(c)) return std::nullopt;
    value = value * 10 + (c - '0');
  }
  return value;
}

struct Parsed {
  Rational value;
  bool decimal = false;
};

// [+-]digits[.digits], with optional 1,234,567 grouping in the integer part.
std::optional<Parsed> parse_atom(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  const auto dot = s.find('.');
  auto int_part = s.substr(0, dot);
  auto frac_part = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (dot != std::string_view::npos && int_part.empty() && frac_part.empty()) return std::nullopt;

  std::string digits;
  if (int_part.find(',') != std::string_view::npos) {
    // Thousands separators: first group 1-3 digits, then groups of exactly 3.
    const std::size_t first = int_part.find(',');
    if (first == 0 || first > 3 || (int_part.size() - first) % 4 != 0) return std::nullopt;
    for (std::size_t p = 0; p < int_part.size(); ++p) {
      const bool separator_slot = p >= first && (p - first) % 4 == 0;
      if (separator_slot != (int_part[p] == ',')) return std::nullopt;
      if (!separator_slot) digits.push_back(int_part[p]);
    }
  } else {
    digits = std::string(int_part);
  }
  if (digits.empty()) digits = "0";
  auto whole = parse_digits(digits);
  if (!whole) return std::nullopt;
  Parsed out;
  out.value = Rational(*whole);
  if (dot != std::string_view::npos) {
    out.decimal = true;
    if (!frac_part.empty()) {
      auto frac = parse_digits(frac_part);
      if (!frac) return std::nullopt;
      cpp_int scale = 1;
      for (std::size_t k = 0; k < frac_part.size(); ++k) scale *= 10;
      out.value += Rational(*frac, scale);
    }
  }
  if (negative) out.value = -out.value;
  return out;
}

std::optional<CanonicalAnswer> parse_number(std::string_view s) {
  bool negative = false;
  std::string_view body = s;
  if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
    negative = body[0] == '-';
    body.remove_prefix(1);
  }
  auto make = [](Rational value, AnswerKind kind) {
    CanonicalAnswer a;
    a.number = std::move(value);
    a.kind = denominator(a.number) == 1 ? AnswerKind::kInteger : kind;
    return a;
  };
  auto fraction = [&](std::string_view num, std::string_view den) -> std::optional<CanonicalAnswer> {
    auto n = parse_atom(num);
    auto d = parse_atom(den);
    if (!n || !d || d->value == 0) return std::nullopt;
    Rational v = n->value / d->value;
    return make(negative ? Rational(-v) : v, AnswerKind::kRational);
  };

  if (body.rfind("\\frac", 0) == 0) {
    auto rest = body.substr(5);
    if (rest.size() == 2 && is_digit(rest[0]) && is_digit(rest[1])) {
      return fraction(rest.substr(0, 1), rest.substr(1, 1));
    }
    if (rest.empty() || rest[0] != '{') return std::nullopt;
    const auto close1 = matching_brace(rest, 0);
    if (close1 == std::string_view::npos || close1 + 1 >= rest.size() || rest[close1 + 1] != '{') {
      return std::nullopt;
    }
    const auto close2 = matching_brace(rest, close1 + 1);
    if (close2 != rest.size() - 1) return std::nullopt;
    return fraction(rest.substr(1, close1 - 1), rest.substr(close1 + 2, close2 - close1 - 2));
  }
  if (const auto slash = body.find('/'); slash != std::string_view::npos) {
    const auto num = body.substr(0, slash);
    const auto den = body.substr(slash + 1);
    if (num.find('.') != std::string_view::npos || den.find('.') != std::string_view::npos ||
        num.find(',') != std::string_view::npos || den.find(',') != std::string_view::npos) {
      return std::nullopt;
    }
    return fraction(num, den);
  }
  auto atom = parse_atom(body);
  if (!atom) return std::nullopt;
  return make(negative ? Rational(-atom->value) : atom->value,
              atom->decimal ? AnswerKind::kDecimal : AnswerKind::kInteger);
}

std::string remove_whitespace(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!is_space(c)) out.push_back(c);
  }
  return out;
}

std::optional<char> choice_letter(std::string_view raw) {
  const auto s = normalize(raw, false);
  std::set<char> letters;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c < 'A' || c > 'D') continue;
    const bool left_ok = i == 0 || !is_alpha(s[i - 1]);
    const bool right_ok = i + 1 == s.size() || !is_alpha(s[i + 1]);
    if (left_ok && right_ok) letters.insert(c);
  }
  if (letters.empty()) {
    std::string alnum;
    for (char c : s) {
      if (std::isalnum(static_cast<unsigned char>(c))) alnum.push_back(c);
    }
    if (alnum.size() == 1 && alnum[0] >= 'a' && alnum[0] <= 'd') {
      return static_cast<char>(alnum[0] - 'a' + 'A');
    }
  }
  if (letters.size() != 1) return std::nullopt;
  return *letters.begin();
}

std::string decimal_string(const Rational& value) {
  const cpp_int num = numerator(value);
  const cpp_int den = denominator(value);
  cpp_int scale = 1;
  std::size_t places = 0;
  while (scale % den != 0 && places < 2 * kMaxDigits) {
    scale *= 10;
    ++places;
  }
  if (scale % den != 0) return value.str();
  cpp_int scaled = num * (scale / den);
  const bool negative = scaled < 0;
  if (negative) scaled = -scaled;
  auto digits = scaled.str();
  if (digits.size() <= places) digits.insert(0, places - digits.size() + 1, '0');
  if (places > 0) digits.insert(digits.size() - places, ".");
  return (negative ? "-" : "") + digits;
}

}  // namespace

std::string_view to_string(AnswerMode mode) { return mode == AnswerMode::kMath ? "math" : "choice"; }

AnswerMode answer_mode_from_string(std::string_view text) {
  if (text == "math") return AnswerMode::kMath;
  if (text == "choice") return AnswerMode::kChoice;
  throw Error(ErrorCode::kParse, "unknown answer mode '" + std::string(text) + "'");
}

std::string_view to_string(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::kInteger: return "integer";
    case AnswerKind::kRational: return "rational";
    case AnswerKind::kDecimal: return "decimal";
    case AnswerKind::kChoice: return "choice";
    case AnswerKind::kString: return "string";
  }
  return "?";
}

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::kNoAnswerFound: return "no_answer_found";
    case FailureReason::kParseFailure: return "parse_failure";
    case FailureReason::kMismatch: return "mismatch";
  }
  return "?";
}

std::optional<ExtractedAnswer> extract_boxed(std::string_view completion, BoxSelection selection) {
  static constexpr std::string_view kMarker = "boxed{";
  std::vector<ExtractedAnswer> boxes;
  std::size_t search_from = 0;
  while (true) {
    const auto pos = completion.find(kMarker, search_from);
    if (pos == std::string_view::npos) break;
    const auto open = pos + kMarker.size() - 1;
    const auto close = matching_brace(completion, open);
    if (close == std::string_view::npos) {
      search_from = pos + kMarker.size();
      continue;
    }
    boxes.push_back({std::string(completion.substr(open + 1, close - open - 1)), open + 1, close,
                     true});
    search_from = close + 1;  // boxes nested inside this one are handled below
  }
  if (!boxes.empty()) {
    auto chosen = selection == BoxSelection::kLast ? boxes.back() : boxes.front();
    if (auto inner = extract_boxed(chosen.raw, selection); inner && inner->from_box) {
      inner->begin += chosen.begin;
      inner->end += chosen.begin;
      return inner;
    }
    return chosen;
  }

  const auto lower = to_lower_ascii(completion);
  std::size_t best = std::string::npos;
  std::size_t best_len = 0;
  for (std::string_view phrase : {"final answer is", "final answer:"}) {
    const auto pos = lower.rfind(phrase);
    if (pos != std::string::npos && (best == std::string::npos || pos > best)) {
      best = pos;
      best_len = phrase.size();
    }
  }
  if (best == std::string::npos) return std::nullopt;
  auto begin = best + best_len;
  while (begin < completion.size() && (completion[begin] == ':' || completion[begin] == ' ' ||
                                       completion[begin] == '\t')) {
    ++begin;
  }
  auto end = completion.find('\n', begin);
  if (end == std::string_view::npos) end = completion.size();
  const auto raw = trim(completion.substr(begin, end - begin));
  if (raw.empty()) return std::nullopt;
  const auto offset = static_cast<std::size_t>(raw.data() - completion.data());
  return ExtractedAnswer{std::string(raw), offset, offset + raw.size(), false};
}

CanonicalAnswer CanonicalAnswer::integer(std::int64_t value) {
  CanonicalAnswer a;
  a.kind = AnswerKind::kInteger;
  a.number = Rational(value);
  return a;
}

CanonicalAnswer CanonicalAnswer::rational(std::int64_t num, std::int64_t den) {
  CanonicalAnswer a;
  a.number = Rational(num, den);
  a.kind = denominator(a.number) == 1 ? AnswerKind::kInteger : AnswerKind::kRational;
  return a;
}

CanonicalAnswer CanonicalAnswer::choice(char letter) {
  CanonicalAnswer a;
  a.kind = AnswerKind::kChoice;
  a.letter = letter;
  return a;
}

CanonicalAnswer CanonicalAnswer::string(std::string text) {
  CanonicalAnswer a;
  a.kind = AnswerKind::kString;
  a.text = std::move(text);
  return a;
}

std::string CanonicalAnswer::render() const {
  switch (kind) {
    case AnswerKind::kInteger:
      return numerator(number).str();
    case AnswerKind::kRational: {
      const cpp_int num = numerator(number);
      const bool negative = num < 0;
      const cpp_int magnitude = negative ? cpp_int(-num) : num;
      return std::string(negative ? "-" : "") + "\\frac{" + magnitude.str() + "}{" +
             denominator(number).str() + "}";
    }
    case AnswerKind::kDecimal:
      return decimal_string(number);
    case AnswerKind::kChoice:
      return std::string(1, letter);
    case AnswerKind::kString:
      return text;
  }
  return text;
}

std::optional<CanonicalAnswer> canonicalize(std::string_view raw, AnswerMode mode) {
  if (mode == AnswerMode::kChoice) {
    if (auto letter = choice_letter(raw)) return CanonicalAnswer::choice(*letter);
    return std::nullopt;
  }
  const auto normalized = normalize(raw, true);
  if (normalized.empty()) return std::nullopt;
  if (auto number = parse_number(remove_whitespace(normalized))) return number;
  return CanonicalAnswer::string(collapse_whitespace(normalized));
}

bool answers_equal(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  if (a.is_number() && b.is_number()) return a.number == b.number;
  if (a.kind != b.kind) return false;
  if (a.kind == AnswerKind::kChoice) return a.letter == b.letter;
  return a.text == b.text;
}

nlohmann::json to_json(const CanonicalAnswer& answer) {
  std::string value;
  switch (answer.kind) {
    case AnswerKind::kInteger:
    case AnswerKind::kRational:
    case AnswerKind::kDecimal:
      value = numerator(answer.number).str();
      if (denominator(answer.number) != 1) value += "/" + denominator(answer.number).str();
      break;
    case AnswerKind::kChoice:
      value = std::string(1, answer.letter);
      break;
    case AnswerKind::kString:
      value = answer.text;
      break;
  }
  return {{"kind", std::string(to_string(answer.kind))}, {"value", value}};
}

CanonicalAnswer canonical_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  const auto value = j.at("value").get<std::string>();
  auto bad = [&] { return Error(ErrorCode::kParse, "invalid canonical answer: " + j.dump()); };
  if (kind == "choice") {
    if (value.size() != 1 || value[0] < 'A' || value[0] > 'D') throw bad();
    return CanonicalAnswer::choice(value[0]);
  }
  if (kind == "string") return CanonicalAnswer::string(value);
  CanonicalAnswer a;
  if (kind == "integer") {
    a.kind = AnswerKind::kInteger;
  } else if (kind == "rational") {
    a.kind = AnswerKind::kRational;
  } else if (kind == "decimal") {
    a.kind = AnswerKind::kDecimal;
  } else {
    throw bad();
  }
  const auto slash = value.find('/');
  auto num = parse_atom(value.substr(0, slash));
  if (!num || num->decimal) throw bad();
  a.number = num->value;
  if (slash != std::string::npos) {
    auto den = parse_atom(value.substr(slash + 1));
    if (!den || den->decimal || den->value == 0) throw bad();
    a.number /= den->value;
  }
  return a;
}

nlohmann::json to_json(const GradeRecord& record) {
  nlohmann::json j = {{"query_id", record.query_id},
                      {"gold", to_json(record.gold)},
                      {"correct", record.correct},
                      {"flags", record.flags}};
  j["extracted"] = record.extracted
                       ? nlohmann::json{{"raw", record.extracted->raw},
                                        {"begin", record.extracted->begin},
                                        {"end", record.extracted->end},
                                        {"from_box", record.extracted->from_box}}
                       : nlohmann::json(nullptr);
  j["canonical"] = record.canonical ? to_json(*record.canonical) : nlohmann::json(nullptr);
  j["failure_reason"] = record.failure ? nlohmann::json(std::string(to_string(*record.failure)))
                                       : nlohmann::json(nullptr);
  return j;
}

GradeRecord grade_record_from_json(const nlohmann::json& j) {
  try {
    GradeRecord r;
    r.query_id = j.at("query_id").get<std::string>();
    r.gold = canonical_from_json(j.at("gold"));
    r.correct = j.at("correct").get<bool>();
    r.flags = j.at("flags").get<std::vector<std::string>>();
    if (const auto& e = j.at("extracted"); !e.is_null()) {
      r.extracted = ExtractedAnswer{e.at("raw").get<std::string>(), e.at("begin").get<std::size_t>(),
                                    e.at("end").get<std::size_t>(), e.at("from_box").get<bool>()};
    }
    if (const auto& c = j.at("canonical"); !c.is_null()) r.canonical = canonical_from_json(c);
    if (const auto& f = j.at("failure_reason"); !f.is_null()) {
      const auto s = f.get<std::string>();
      if (s == "no_answer_found") {
        r.failure = FailureReason::kNoAnswerFound;
      } else if (s == "parse_failure") {
        r.failure = FailureReason::kParseFailure;
      } else if (s == "mismatch") {
        r.failure = FailureReason::kMismatch;
      } else {
        throw Error(ErrorCode::kParse, "unknown failure_reason '" + s + "'");
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid grade record: ") + e.what());
  }
}

std::int64_t GradeResult::basis_points() const { return percent_basis_points(correct, total); }

std::string GradeResult::percent() const { return format_basis_points(basis_points()); }

GradeResult grade_run(const std::vector<Completion>& completions,
                      const std::vector<GoldAnswer>& gold, const GradeOptions& options) {
  std::unordered_set<std::string> gold_ids;
  for (const auto& g : gold) gold_ids.insert(g.query_id);
  std::unordered_map<std::string, const Completion*> by_id;
  for (const auto& c : completions) {
    if (!gold_ids.count(c.query_id)) {
      throw Error(ErrorCode::kNotFound, "no gold answer for query_id '" + c.query_id + "'");
    }
    if (!by_id.emplace(c.query_id, &c).second) {
      throw Error(ErrorCode::kDuplicate, "duplicate completion for query_id '" + c.query_id + "'");
    }
  }

  GradeResult result;
  result.total = static_cast<std::int64_t>(gold.size());
  result.records.reserve(gold.size());
  for (const auto& g : gold) {
    GradeRecord rec;
    rec.query_id = g.query_id;
    rec.gold = g.answer;
    auto it = by_id.find(g.query_id);
    if (it == by_id.end()) {
      rec.failure = FailureReason::kNoAnswerFound;
      rec.flags.emplace_back("missing_completion");
    } else if (it->second->error) {
      rec.failure = FailureReason::kNoAnswerFound;
      rec.flags.emplace_back("request_error");
    } else if (auto extracted = extract_boxed(it->second->text, options.selection); !extracted) {
      rec.failure = FailureReason::kNoAnswerFound;
    } else {
      rec.extracted = extracted;
      rec.canonical = canonicalize(extracted->raw, options.mode);
      if (!rec.canonical) {
        rec.failure = FailureReason::kParseFailure;
      } else if (options.integer_range &&
                 (rec.canonical->kind != AnswerKind::kInteger ||
                  rec.canonical->number < options.integer_range->first ||
                  rec.canonical->number > options.integer_range->second)) {
        rec.failure = FailureReason::kMismatch;
        rec.flags.emplace_back("out_of_range");
      } else if (answers_equal(*rec.canonical, g.answer)) {
        rec.correct = true;
      } else {
        rec.failure = FailureReason::kMismatch;
        if (rec.canonical->kind == AnswerKind::kString || g.answer.kind == AnswerKind::kString) {
          rec.flags.emplace_back("audit");
        }
      }
    }
    if (rec.correct) ++result.correct;
    result.records.push_back(std::move(rec));
  }
  return result;
}

GradeSummary summarize(const GradeResult& result, std::string benchmark) {
  GradeSummary s;
  s.benchmark = std::move(benchmark);
  s.correct = result.correct;
  s.total = result.total;
  s.score_bp = result.basis_points();
  for (const auto& r : result.records) {
    for (const auto& f : r.flags) {
      if (f == "request_error") ++s.request_errors;
    }
  }
  return s;
}

nlohmann::json to_json(const GradeSummary& s) {
  nlohmann::json j = {{"run_id", s.run_id},
                      {"base_dataset", s.base_dataset},
                      {"benchmark", s.benchmark},
                      {"correct", s.correct},
                      {"total", s.total},
                      {"score_bp", s.score_bp},
                      {"pass_at_1", format_basis_points(s.score_bp)},
                      {"request_errors", s.request_errors},
                      {"config_hash", s.config_hash},
                      {"seed", s.seed}};
  j["train_strategy"] =
      s.train_strategy ? nlohmann::json(std::string(tag(*s.train_strategy))) : nlohmann::json();
  j["test_strategy"] =
      s.test_strategy ? nlohmann::json(std::string(tag(*s.test_strategy))) : nlohmann::json();
  return j;
}

GradeSummary grade_summary_from_json(const nlohmann::json& j) {
  try {
    GradeSummary s;
    s.run_id = j.value("run_id", std::string{});
    s.base_dataset = j.value("base_dataset", std::string{});
    s.benchmark = j.at("benchmark").get<std::string>();
    s.correct = j.value("correct", std::int64_t{0});
    s.total = j.value("total", std::int64_t{0});
    if (j.contains("score_bp")) {
      s.score_bp = j.at("score_bp").get<std::int64_t>();
    } else {
      s.score_bp = percent_basis_points(s.correct, s.total);
    }
    s.request_errors = j.value("request_errors", std::int64_t{0});
    s.config_hash = j.value("config_hash", std::string{});
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("train_strategy") && !j.at("train_strategy").is_null()) {
      s.train_strategy = strategy_from_string(j.at("train_strategy").get<std::string>());
    }
    if (j.contains("test_strategy") && !j.at("test_strategy").is_null()) {
      s.test_strategy = strategy_from_string(j.at("test_strategy").get<std::string>());
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid grade summary: ") + e.what());
  }
}

std::string serialize_grades(const std::vector<GradeRecord>& records, const GradeSummary& summary) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  out += nlohmann::json{{"summary", to_json(summary)}}.dump();
  out.push_back('\n');
  return out;
}

GradeFile parse_grades(std::string_view text, const std::string& name) {
  GradeFile file;
  bool have_summary = false;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, name + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    if (j.contains("summary")) {
      file.summary = grade_summary_from_json(j.at("summary"));
      have_summary = true;
    } else {
      file.records.push_back(grade_record_from_json(j));
    }
  }
  if (!have_summary) throw Error(ErrorCode::kParse, name + ": missing summary line");
  return file;
}

GradeFile load_grades(const std::filesystem::path& path) {
  return parse_grades(read_file(path), path.string());
}

void save_grades(const std::filesystem::path& path, const std::vector<GradeRecord>& records,
                 const GradeSummary& summary) {
  write_file_atomic(path, serialize_grades(records, summary));
}

GradeOptions Benchmark::grade_options() const {
  GradeOptions o;
  o.mode = mode;
  o.integer_range = integer_range;
  return o;
}

std::vector<GoldAnswer> Benchmark::gold() const {
  std::vector<GoldAnswer> out;
  out.reserve(questions.size());
  for (const auto& q : questions) {
    auto c = canonicalize(q.gold_answer, mode);
    if (!c) {
      throw Error(ErrorCode::kParse, name + ": gold answer for '" + q.query_id +
                                         "' does not canonicalize in " +
                                         std::string(to_string(mode)) + " mode");
    }
    out.push_back({q.query_id, std::move(*c)});
  }
  return out;
}

std::vector<corpus::SourceRecord> Benchmark::as_records() const {
  std::vector<corpus::SourceRecord> out;
  out.reserve(questions.size());
  for (const auto& q : questions) {
    corpus::SourceRecord r;
    r.id = q.query_id;
    r.query = q.query;
    r.gold_answer = q.gold_answer;
    r.source = name;
    out.push_back(std::move(r));
  }
  return out;
}

Benchmark parse_benchmark(std::string_view text, const std::string& name) {
  const auto lines = split_lines(text);
  std::size_t line_no = 0;
  try {
    Benchmark b;
    std::optional<std::size_t> declared_size;
    bool have_header = false;
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      line_no = i + 1;
      if (trim(lines[i]).empty()) continue;
      const auto j = nlohmann::json::parse(lines[i]);
      if (!have_header) {
        if (!j.contains("benchmark")) {
          throw Error(ErrorCode::kParse, name + ":" + std::to_string(line_no) +
                                             ": first line must be a header with 'benchmark'");
        }
        have_header = true;
        b.name = j.at("benchmark").get<std::string>();
        b.mode = answer_mode_from_string(j.at("mode").get<std::string>());
        declared_size = j.at("size").get<std::size_t>();
        if (j.contains("integer_range")) {
          const auto& r = j.at("integer_range");
          b.integer_range = {r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>()};
        }
        continue;
      }
      BenchmarkQuestion q{j.at("query_id").get<std::string>(), j.at("query").get<std::string>(),
                          j.at("gold_answer").get<std::string>()};
      if (j.contains("mode") && answer_mode_from_string(j.at("mode").get<std::string>()) != b.mode) {
        throw Error(ErrorCode::kParse, name + ":" + std::to_string(line_no) +
                                           ": question mode differs from benchmark mode");
      }
      if (!ids.insert(q.query_id).second) {
        throw Error(ErrorCode::kDuplicate, name + ": duplicate query_id '" + q.query_id + "'");
      }
      b.questions.push_back(std::move(q));
    }
    if (!have_header) throw Error(ErrorCode::kParse, name + ": empty benchmark file");
    if (*declared_size != b.questions.size()) {
      throw Error(ErrorCode::kParse, name + ": header declares " + std::to_string(*declared_size) +
                                         " questions but file has " +
                                         std::to_string(b.questions.size()));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, name + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

Benchmark load_benchmark(const std::filesystem::path& path) {
  return parse_benchmark(read_file(path), path.string());
}

}  // namespace its::grader
