#include "its/persona.hpp"

#include <cctype>
#include <random>
#include <unordered_set>

#include "its/error.hpp"
#include "its/random.hpp"
#include "its/util.hpp"

namespace its::persona {
namespace {

constexpr int kMaxReasks = 3;

std::string system_message(std::string_view query_id, Strategy strategy, std::uint64_t seed) {
  return "You write short personas. Reply with the persona description only.\n(request " +
         std::string(query_id) + " " + std::string(tag(strategy)) + " seed " +
         std::to_string(seed) + ")";
}

bool starts_with_ci(std::string_view text, std::string_view prefix) {
  return text.size() >= prefix.size() && to_lower_ascii(text.substr(0, prefix.size())) == prefix;
}

std::string strip_list_marker(std::string_view line) {
  auto s = trim(line);
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
    s = s.substr(i + 1);
  } else if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
    s = s.substr(1);
  } else if (s.substr(0, 3) == "\xE2\x80\xA2") {  // bullet
    s = s.substr(3);
  }
  s = trim(s);
  while (!s.empty() && s.back() == '.') s.remove_suffix(1);
  return std::string(trim(s));
}

}  // namespace

std::vector<std::string> parse_domain_lines(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& line : split_lines(text)) {
    auto d = strip_list_marker(line);
    if (!d.empty()) out.push_back(std::move(d));
  }
  return out;
}

std::vector<std::string> generate_domain_pool(std::size_t count, llm::Client& client,
                                              const GenerationOptions& options) {
  if (count == 0) throw Error(ErrorCode::kUsage, "domain pool size must be >= 1");
  options.templates.validate();

  std::vector<std::string> pool;
  std::unordered_set<std::string> seen;
  auto absorb = [&](const std::string& reply) {
    for (auto& d : parse_domain_lines(reply)) {
      if (pool.size() == count) break;
      if (seen.insert(to_lower_ascii(d)).second) pool.push_back(std::move(d));
    }
  };

  llm::ChatRequest request;
  request.temperature = options.temperature;
  request.max_tokens = options.max_tokens;
  request.messages = {
      {"system", "You list domains. Reply with one domain per line.\n(seed " +
                     std::to_string(options.seed) + ")"},
      {"user", render_template(options.templates.random_domain,
                               {{"count", std::to_string(count)}})}};

  for (int ask = 0; ask <= kMaxReasks; ++ask) {
    const auto reply = client.complete(request).text;
    absorb(reply);
    if (pool.size() >= count) return pool;
    if (ask == kMaxReasks) break;
    std::string have;
    for (const auto& d : pool) have += (have.empty() ? "" : ", ") + d;
    request.messages.push_back({"assistant", reply});
    request.messages.push_back(
        {"user", "Some entries were repeated or missing. List " +
                     std::to_string(count - pool.size()) +
                     " more distinct domains, one per line, different from: " + have + "."});
  }
  throw Error(ErrorCode::kGeneration,
              "domain pool shortfall: wanted " + std::to_string(count) + " distinct domains, got " +
                  std::to_string(pool.size()) + " after " + std::to_string(kMaxReasks) +
                  " re-asks");
}

const std::string& draw_domain(std::span<const std::string> pool, std::uint64_t seed,
                               std::string_view query_id) {
  if (pool.empty()) throw Error(ErrorCode::kUsage, "random strategy needs a non-empty domain pool");
  std::mt19937_64 rng(keyed_seed(seed, query_id));
  return pool[bounded_draw(rng, pool.size())];
}

llm::ChatRequest persona_request(const corpus::SourceRecord& record, Strategy strategy,
                                 const std::optional<std::string>& domain,
                                 const GenerationOptions& options) {
  std::string prompt;
  switch (strategy) {
    case Strategy::kNone:
      throw Error(ErrorCode::kUsage, "strategy N carries no persona");
    case Strategy::kSimilar:
      prompt = render_template(options.templates.similar, {{"query", record.query}});
      break;
    case Strategy::kDissimilar:
      prompt = render_template(options.templates.dissimilar, {{"query", record.query}});
      break;
    case Strategy::kRandom:
      if (!domain) throw Error(ErrorCode::kUsage, "random strategy needs a domain");
      prompt = render_template(options.templates.random_persona, {{"domain", *domain}});
      break;
  }
  llm::ChatRequest request;
  request.temperature = options.temperature;
  request.max_tokens = options.max_tokens;
  request.messages = {{"system", system_message(record.id, strategy, options.seed)},
                      {"user", std::move(prompt)}};
  return request;
}

std::string normalize_persona_text(std::string_view raw) {
  auto text = collapse_whitespace(raw);
  std::string_view s = text;
  if (starts_with_ci(s, "persona:")) s = trim(s.substr(8));
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  if (starts_with_ci(s, "you are ")) s = trim(s.substr(8));
  while (!s.empty() && s.back() == '.') s.remove_suffix(1);
  return std::string(trim(s));
}

namespace {

Persona make_persona(const corpus::SourceRecord& record, Strategy strategy,
                     const std::optional<std::string>& domain, const std::string& raw) {
  auto text = normalize_persona_text(raw);
  if (text.empty()) {
    throw Error(ErrorCode::kGeneration,
                "empty persona generated for query '" + record.id + "'");
  }
  return Persona{std::move(text), strategy,
                 strategy == Strategy::kRandom ? domain : std::nullopt, record.id};
}

std::optional<std::string> domain_for(const corpus::SourceRecord& record, Strategy strategy,
                                      std::span<const std::string> pool, std::uint64_t seed) {
  if (strategy != Strategy::kRandom) return std::nullopt;
  return draw_domain(pool, seed, record.id);
}

}  // namespace

Persona generate_persona(const corpus::SourceRecord& record, Strategy strategy,
                         std::span<const std::string> domain_pool, llm::Client& client,
                         const GenerationOptions& options) {
  if (strategy == Strategy::kNone) {
    throw Error(ErrorCode::kUsage, "strategy N carries no persona");
  }
  const auto domain = domain_for(record, strategy, domain_pool, options.seed);
  const auto completion = client.complete(persona_request(record, strategy, domain, options));
  return make_persona(record, strategy, domain, completion.text);
}

std::vector<PersonaResult> generate_personas(const std::vector<corpus::SourceRecord>& records,
                                             Strategy strategy,
                                             std::span<const std::string> domain_pool,
                                             llm::Client& client,
                                             const GenerationOptions& options) {
  if (strategy == Strategy::kNone) {
    throw Error(ErrorCode::kUsage, "strategy N carries no persona");
  }
  std::vector<std::optional<std::string>> domains;
  std::vector<llm::ChatRequest> requests;
  domains.reserve(records.size());
  requests.reserve(records.size());
  for (const auto& r : records) {
    domains.push_back(domain_for(r, strategy, domain_pool, options.seed));
    requests.push_back(persona_request(r, strategy, domains.back(), options));
  }
  const auto replies = client.complete_batch(requests);
  std::vector<PersonaResult> results(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!replies[i].ok()) {
      results[i].error = records[i].id + ": " + replies[i].failure->message;
      continue;
    }
    try {
      results[i].persona =
          make_persona(records[i], strategy, domains[i], replies[i].completion->text);
    } catch (const Error& e) {
      results[i].error = records[i].id + ": " + e.what();
    }
  }
  return results;
}

AugmentedQuery augment_query(const corpus::SourceRecord& record,
                             const std::optional<Persona>& persona, Strategy strategy,
                             std::string_view concat_template) {
  if ((strategy == Strategy::kNone) != !persona.has_value()) {
    throw Error(ErrorCode::kUsage, "query '" + record.id + "': strategy " +
                                       std::string(tag(strategy)) +
                                       (persona ? " must not carry a persona"
                                                : " requires a persona"));
  }
  AugmentedQuery out{record.id, record.query, persona, record.query, strategy};
  if (persona) {
    if (persona->strategy != strategy) {
      throw Error(ErrorCode::kUsage, "query '" + record.id + "': persona strategy " +
                                         std::string(tag(persona->strategy)) +
                                         " does not match " + std::string(tag(strategy)));
    }
    require_placeholder_once(concat_template, "persona", "concat");
    require_placeholder_once(concat_template, "query", "concat");
    out.rendered =
        render_template(concat_template, {{"persona", persona->text}, {"query", record.query}});
  }
  return out;
}

void save_personas(const std::filesystem::path& path, const std::vector<Persona>& personas,
                   const std::string& template_hash, const nlohmann::json& meta) {
  std::string out;
  if (!meta.is_null()) out = nlohmann::json{{"meta", meta}}.dump() + "\n";
  for (const auto& p : personas) {
    nlohmann::json j = {{"query_id", p.source_query_id},
                        {"strategy", std::string(tag(p.strategy))},
                        {"persona_text", p.text},
                        {"template_hash", template_hash}};
    if (p.domain) j["domain"] = *p.domain;
    out += j.dump();
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

std::vector<Persona> load_personas(const std::filesystem::path& path) {
  std::vector<Persona> personas;
  const auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      if (j.contains("meta")) continue;
      Persona p;
      p.source_query_id = j.at("query_id").get<std::string>();
      p.strategy = strategy_from_string(j.at("strategy").get<std::string>());
      p.text = j.at("persona_text").get<std::string>();
      if (j.contains("domain")) p.domain = j.at("domain").get<std::string>();
      personas.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse,
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return personas;
}

void save_domain_pool(const std::filesystem::path& path, const std::vector<std::string>& pool,
                      std::uint64_t seed, const std::string& template_hash,
                      const nlohmann::json& meta) {
  nlohmann::json j = meta.is_object() ? meta : nlohmann::json::object();
  j["seed"] = seed;
  j["count"] = pool.size();
  j["template_hash"] = template_hash;
  j["domains"] = pool;
  write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<std::string> load_domain_pool(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path)).at("domains").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace its::persona
