#include "its/config.hpp"

#include <cstdlib>
#include <map>
#include <set>

#include "its/error.hpp"
#include "its/grader.hpp"
#include "its/util.hpp"

namespace its::config {
namespace {

namespace fs = std::filesystem;

const std::set<std::string> kTopLevelKeys = {
    "output_dir", "seed",    "templates_dir", "concat_template", "corpora", "benchmarks",
    "persona_generator",     "targets",       "strategies",      "eval",    "retry",
    "manifest",   "votes",   "report"};

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kConfig, where + ": " + what);
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(where, std::string("missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(where, std::string("'") + key + "': " + e.what());
  }
}

template <typename T>
T optional_field(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(where, std::string("'") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

llm::EndpointConfig parse_endpoint(const nlohmann::json& j, const std::string& where) {
  llm::EndpointConfig e;
  e.base_url = required<std::string>(j, "base_url", where);
  e.model_name = required<std::string>(j, "model_name", where);
  e.api_key_env = required<std::string>(j, "api_key_env", where);
  if (e.api_key_env.empty()) fail(where, "'api_key_env' must name an environment variable");
  e.timeout_seconds = optional_field<double>(j, "timeout_seconds", e.timeout_seconds, where);
  e.max_parallel = optional_field<int>(j, "max_parallel", e.max_parallel, where);
  try {
    e.validate();
  } catch (const Error& err) {
    fail(where, err.what());
  }
  return e;
}

Strategy parse_strategy_field(const std::string& text, const std::string& where) {
  auto s = parse_strategy(text);
  if (!s) fail(where, "unknown strategy '" + text + "'");
  return *s;
}

std::vector<Strategy> parse_strategy_list(const nlohmann::json& j, const std::string& where) {
  std::vector<Strategy> out;
  for (const auto& text : j.get<std::vector<std::string>>()) {
    const auto s = parse_strategy_field(text, where);
    if (std::find(out.begin(), out.end(), s) != out.end()) fail(where, "repeated strategy " + text);
    out.push_back(s);
  }
  if (out.empty()) fail(where, "no strategies listed");
  return out;
}

std::pair<Strategy, Strategy> parse_pair(const std::string& text, const std::string& where) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) fail(where, "vote member '" + text + "' is not TRAIN-TEST");
  return {parse_strategy_field(text.substr(0, dash), where),
          parse_strategy_field(text.substr(dash + 1), where)};
}

std::vector<std::string> tags(const std::vector<Strategy>& strategies) {
  std::vector<std::string> out;
  for (auto s : strategies) out.emplace_back(tag(s));
  return out;
}

}  // namespace

RunConfig parse_config(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) fail("config", "expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kTopLevelKeys.count(key)) fail("config", "unknown key '" + key + "'");
  }
  RunConfig c;
  c.output_dir = resolve(base_dir, optional_field<std::string>(j, "output_dir", "out", "config"));
  c.seed = optional_field<std::uint64_t>(j, "seed", 0, "config");
  if (j.contains("templates_dir")) {
    c.templates_dir = resolve(base_dir, required<std::string>(j, "templates_dir", "config"));
  }
  if (j.contains("concat_template")) {
    c.concat_template = required<std::string>(j, "concat_template", "config");
  } else if (c.templates_dir && fs::exists(*c.templates_dir / "concat.txt")) {
    c.concat_template = read_file(*c.templates_dir / "concat.txt");
    if (!c.concat_template.empty() && c.concat_template.back() == '\n') c.concat_template.pop_back();
  }

  std::set<std::string> names;
  if (j.contains("corpora")) {
    for (const auto& cj : j.at("corpora")) {
      const std::string where = "corpora[" + std::to_string(c.corpora.size()) + "]";
      CorpusConfig cc;
      cc.name = required<std::string>(cj, "name", where);
      cc.path = resolve(base_dir, required<std::string>(cj, "path", where));
      const auto format = optional_field<std::string>(cj, "format", "jsonl", where);
      if (format == "jsonl") {
        cc.format = corpus::RecordFormat::kJsonl;
      } else if (format == "json") {
        cc.format = corpus::RecordFormat::kJsonArray;
      } else {
        fail(where, "format must be jsonl or json, got '" + format + "'");
      }
      cc.count = optional_field<std::size_t>(cj, "count", 0, where);
      try {
        cc.mode = corpus::sample_mode_from_string(
            optional_field<std::string>(cj, "mode", "uniform_without_replacement", where));
      } catch (const Error& e) {
        fail(where, e.what());
      }
      cc.filter = optional_field<bool>(cj, "filter", true, where);
      if (!names.insert(cc.name).second) fail(where, "name '" + cc.name + "' used twice");
      c.corpora.push_back(std::move(cc));
    }
  }
  if (j.contains("benchmarks")) {
    for (const auto& bj : j.at("benchmarks")) {
      const std::string where = "benchmarks[" + std::to_string(c.benchmarks.size()) + "]";
      BenchmarkConfig bc;
      bc.name = required<std::string>(bj, "name", where);
      bc.path = resolve(base_dir, required<std::string>(bj, "path", where));
      if (!names.insert(bc.name).second) fail(where, "name '" + bc.name + "' used twice");
      c.benchmarks.push_back(std::move(bc));
    }
  }
  if (j.contains("persona_generator")) {
    const auto& pj = j.at("persona_generator");
    PersonaConfig pc;
    pc.endpoint = parse_endpoint(pj, "persona_generator");
    pc.domain_count = optional_field<std::size_t>(pj, "domain_count", pc.domain_count,
                                                  "persona_generator");
    pc.temperature = optional_field<double>(pj, "temperature", pc.temperature, "persona_generator");
    pc.max_tokens = optional_field<int>(pj, "max_tokens", pc.max_tokens, "persona_generator");
    c.persona = std::move(pc);
  }
  if (j.contains("targets")) {
    std::set<std::string> target_names;
    std::set<std::pair<std::string, int>> target_keys;
    for (const auto& tj : j.at("targets")) {
      const std::string where = "targets[" + std::to_string(c.targets.size()) + "]";
      TargetConfig t;
      t.name = required<std::string>(tj, "name", where);
      t.endpoint = parse_endpoint(tj, where);
      t.base_dataset = required<std::string>(tj, "base_dataset", where);
      t.train_strategy = parse_strategy_field(required<std::string>(tj, "train_strategy", where), where);
      if (!target_names.insert(t.name).second) fail(where, "target name '" + t.name + "' used twice");
      if (!target_keys.insert({t.base_dataset, order_rank(t.train_strategy)}).second) {
        fail(where, "two targets trained on " + t.base_dataset + " with strategy " +
                        std::string(tag(t.train_strategy)));
      }
      c.targets.push_back(std::move(t));
    }
  }
  if (j.contains("strategies")) {
    const auto& sj = j.at("strategies");
    if (sj.contains("train")) c.train_strategies = parse_strategy_list(sj.at("train"), "strategies.train");
    if (sj.contains("test")) c.test_strategies = parse_strategy_list(sj.at("test"), "strategies.test");
  }
  if (j.contains("eval")) {
    c.eval_max_tokens = optional_field<int>(j.at("eval"), "max_tokens", c.eval_max_tokens, "eval");
    if (c.eval_max_tokens < 1) fail("eval", "max_tokens must be positive");
  }
  if (j.contains("retry")) {
    const auto& rj = j.at("retry");
    c.retry.max_attempts = optional_field<int>(rj, "max_attempts", c.retry.max_attempts, "retry");
    c.retry.initial_delay = std::chrono::milliseconds(optional_field<std::int64_t>(
        rj, "initial_delay_ms", c.retry.initial_delay.count(), "retry"));
    c.retry.multiplier = optional_field<double>(rj, "multiplier", c.retry.multiplier, "retry");
    if (c.retry.max_attempts < 1) fail("retry", "max_attempts must be >= 1");
  }
  if (j.contains("manifest")) {
    const auto& mj = j.at("manifest");
    c.base_model = optional_field<std::string>(mj, "base_model", "", "manifest");
    c.manifest_overrides =
        optional_field<nlohmann::json>(mj, "overrides", nlohmann::json::object(), "manifest");
  }
  if (j.contains("votes")) {
    for (const auto& vj : j.at("votes")) {
      const std::string where = "votes[" + std::to_string(c.votes.size()) + "]";
      VoteConfig v;
      v.base_dataset = required<std::string>(vj, "base_dataset", where);
      const auto members = required<std::vector<std::string>>(vj, "members", where);
      if (members.size() != 3) fail(where, "needs exactly 3 members");
      for (const auto& m : members) v.members.push_back(parse_pair(m, where));
      if (std::set(v.members.begin(), v.members.end()).size() != 3) {
        fail(where, "members must be distinct");
      }
      v.label = optional_field<std::string>(vj, "label", members[0] + " " + members[1] + " " + members[2],
                                            where);
      v.benchmarks = required<std::vector<std::string>>(vj, "benchmarks", where);
      try {
        v.tie_break = metrics::tie_break_from_string(
            optional_field<std::string>(vj, "tie_break", "first", where));
      } catch (const Error& e) {
        fail(where, e.what());
      }
      c.votes.push_back(std::move(v));
    }
  }
  if (j.contains("report")) {
    const auto& rj = j.at("report");
    c.best_benchmarks = optional_field<std::vector<std::string>>(rj, "best_benchmarks",
                                                                 c.best_benchmarks, "report");
    try {
      c.objective = metrics::objective_from_string(
          optional_field<std::string>(rj, "objective", "min-then-sum", "report"));
    } catch (const Error& e) {
      fail("report", e.what());
    }
    if (rj.contains("comparisons")) {
      c.comparisons = resolve(base_dir, required<std::string>(rj, "comparisons", "report"));
    }
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::kConfig, "cannot read config file: " + path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": malformed JSON (" + e.what() + ")");
  }
  auto c = parse_config(j, path.parent_path());
  c.source = path;
  return c;
}

nlohmann::json RunConfig::semantic_json() const {
  auto rel = [](const fs::path& p) { return p.filename().string(); };
  nlohmann::json j;
  j["seed"] = seed;
  j["templates"] = templates().hash();
  j["concat_template"] = concat_template;
  j["corpora"] = nlohmann::json::array();
  for (const auto& cc : corpora) {
    j["corpora"].push_back({{"name", cc.name},
                            {"file", rel(cc.path)},
                            {"format", cc.format == corpus::RecordFormat::kJsonl ? "jsonl" : "json"},
                            {"count", cc.count},
                            {"mode", corpus::to_string(cc.mode)},
                            {"filter", cc.filter}});
  }
  j["benchmarks"] = nlohmann::json::array();
  for (const auto& b : benchmarks) j["benchmarks"].push_back({{"name", b.name}, {"file", rel(b.path)}});
  if (persona) {
    j["persona_generator"] = {{"model_name", persona->endpoint.model_name},
                              {"domain_count", persona->domain_count},
                              {"temperature", persona->temperature},
                              {"max_tokens", persona->max_tokens}};
  }
  j["targets"] = nlohmann::json::array();
  for (const auto& t : targets) {
    j["targets"].push_back({{"name", t.name},
                            {"model_name", t.endpoint.model_name},
                            {"base_dataset", t.base_dataset},
                            {"train_strategy", tag(t.train_strategy)}});
  }
  j["strategies"] = {{"train", tags(train_strategies)}, {"test", tags(test_strategies)}};
  j["eval_max_tokens"] = eval_max_tokens;
  j["manifest"] = {{"base_model", base_model}, {"overrides", manifest_overrides}};
  j["votes"] = nlohmann::json::array();
  for (const auto& v : votes) {
    std::vector<std::string> members;
    for (const auto& [tr, te] : v.members) {
      members.push_back(std::string(tag(tr)) + "-" + std::string(tag(te)));
    }
    j["votes"].push_back({{"label", v.label},
                          {"base_dataset", v.base_dataset},
                          {"members", members},
                          {"benchmarks", v.benchmarks},
                          {"tie_break", metrics::to_string(v.tie_break)}});
  }
  j["report"] = {{"best_benchmarks", best_benchmarks},
                 {"objective", metrics::to_string(objective)}};
  return j;
}

std::string RunConfig::hash() const { return sha256_hex(semantic_json().dump()).substr(0, 16); }

PromptTemplateSet RunConfig::templates() const {
  return templates_dir ? PromptTemplateSet::load(*templates_dir) : PromptTemplateSet::defaults();
}

const CorpusConfig* RunConfig::find_corpus(const std::string& name) const {
  for (const auto& c : corpora) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const BenchmarkConfig* RunConfig::find_benchmark(const std::string& name) const {
  for (const auto& b : benchmarks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const TargetConfig* RunConfig::find_target(const std::string& name) const {
  for (const auto& t : targets) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TargetConfig* RunConfig::find_target(const std::string& base_dataset, Strategy train) const {
  for (const auto& t : targets) {
    if (t.base_dataset == base_dataset && t.train_strategy == train) return &t;
  }
  return nullptr;
}

std::vector<std::string> validate(const RunConfig& c, const ValidationOptions& options) {
  std::vector<std::string> issues;
  auto check_file = [&](const fs::path& p, const std::string& what) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) {
      issues.push_back(what + ": file not found: " + p.string());
      return false;
    }
    return true;
  };

  if (c.templates_dir) {
    bool all_present = true;
    for (auto name : kTemplateFiles) {
      all_present = check_file(*c.templates_dir / name, "template") && all_present;
    }
    if (all_present) {
      try {
        c.templates().validate();
      } catch (const Error& e) {
        issues.push_back(std::string("templates: ") + e.what());
      }
    }
  }
  try {
    require_placeholder_once(c.concat_template, "persona", "concat_template");
    require_placeholder_once(c.concat_template, "query", "concat_template");
  } catch (const Error& e) {
    issues.push_back(e.what());
  }
  if (c.corpora.empty()) issues.push_back("corpora: none configured");
  for (const auto& cc : c.corpora) {
    if (!check_file(cc.path, "corpus " + cc.name)) continue;
    try {
      corpus::load_records(cc.path, cc.format);
    } catch (const Error& e) {
      issues.push_back("corpus " + cc.name + ": " + e.what());
    }
  }
  for (const auto& b : c.benchmarks) {
    if (!check_file(b.path, "benchmark " + b.name)) continue;
    try {
      const auto bench = grader::load_benchmark(b.path);
      bench.gold();
      if (bench.name != b.name) {
        issues.push_back("benchmark " + b.name + ": file declares benchmark '" + bench.name + "'");
      }
    } catch (const Error& e) {
      issues.push_back("benchmark " + b.name + ": " + e.what());
    }
  }
  if (c.comparisons) check_file(*c.comparisons, "report.comparisons");

  std::vector<std::pair<std::string, const llm::EndpointConfig*>> endpoints;
  if (c.persona) endpoints.emplace_back("persona_generator", &c.persona->endpoint);
  for (const auto& t : c.targets) {
    endpoints.emplace_back("target " + t.name, &t.endpoint);
    if (!c.find_corpus(t.base_dataset)) {
      issues.push_back("target " + t.name + ": unknown base_dataset '" + t.base_dataset + "'");
    }
  }
  for (const auto& [label, e] : endpoints) {
    const char* key = std::getenv(e->api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      issues.push_back(label + ": environment variable " + e->api_key_env + " is not set");
    }
    if (options.check_endpoints) {
      if (auto problem = llm::probe_endpoint(*e, options.connect_timeout_seconds)) {
        issues.push_back(label + ": " + *problem);
      }
    }
  }
  for (const auto& v : c.votes) {
    for (const auto& [train, test] : v.members) {
      if (!c.find_target(v.base_dataset, train)) {
        issues.push_back("vote '" + v.label + "': no target trained on " + v.base_dataset +
                         " with strategy " + std::string(tag(train)));
      }
      if (std::find(c.test_strategies.begin(), c.test_strategies.end(), test) ==
          c.test_strategies.end()) {
        issues.push_back("vote '" + v.label + "': test strategy " + std::string(tag(test)) +
                         " is not evaluated");
      }
    }
    for (const auto& b : v.benchmarks) {
      if (!c.find_benchmark(b)) issues.push_back("vote '" + v.label + "': unknown benchmark " + b);
    }
  }
  return issues;
}

}  // namespace its::config
