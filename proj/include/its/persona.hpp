#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "its/corpus.hpp"
#include "its/llm_client.hpp"
#include "its/prompt_template.hpp"
#include "its/strategy.hpp"

namespace its::persona {

struct Persona {
  std::string text;  // single paragraph, never empty
  Strategy strategy = Strategy::kSimilar;
  std::optional<std::string> domain;  // set only for Strategy::kRandom
  std::string source_query_id;

  bool operator==(const Persona&) const = default;
};

// A query paired with the text actually sent to the model.
struct AugmentedQuery {
  std::string query_id;
  std::string original;
  std::optional<Persona> persona;
  std::string rendered;
  Strategy strategy = Strategy::kNone;

  bool operator==(const AugmentedQuery&) const = default;
};

struct GenerationOptions {
  PromptTemplateSet templates = PromptTemplateSet::defaults();
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int max_tokens = 512;
};

// Asks the generator model for `count` distinct domains, re-asking up to
// three times when duplicates (case-insensitive) leave a shortfall.
std::vector<std::string> generate_domain_pool(std::size_t count, llm::Client& client,
                                              const GenerationOptions& options);

// Parses one domain per line, dropping list markers and blank lines.
std::vector<std::string> parse_domain_lines(std::string_view text);

// Seeded uniform draw keyed by query id: the same (pool, seed, id) always
// yields the same domain.
const std::string& draw_domain(std::span<const std::string> pool, std::uint64_t seed,
                               std::string_view query_id);

// The chat request that generates a persona for `record` under `strategy`.
// For kRandom, `domain` names the domain to draw from.
llm::ChatRequest persona_request(const corpus::SourceRecord& record, Strategy strategy,
                                 const std::optional<std::string>& domain,
                                 const GenerationOptions& options);

// Trims, collapses to one paragraph and strips labels, quotes, a leading
// "You are" and trailing periods. Empty result means the output is unusable.
std::string normalize_persona_text(std::string_view raw);

Persona generate_persona(const corpus::SourceRecord& record, Strategy strategy,
                         std::span<const std::string> domain_pool, llm::Client& client,
                         const GenerationOptions& options);

struct PersonaResult {
  std::optional<Persona> persona;
  std::string error;  // set when persona is empty
};

// Batched generate_persona; results align with `records`.
std::vector<PersonaResult> generate_personas(const std::vector<corpus::SourceRecord>& records,
                                             Strategy strategy,
                                             std::span<const std::string> domain_pool,
                                             llm::Client& client,
                                             const GenerationOptions& options);

// Throws its::Error(kUsage) when (strategy == N) != (persona absent).
AugmentedQuery augment_query(const corpus::SourceRecord& record,
                             const std::optional<Persona>& persona, Strategy strategy,
                             std::string_view concat_template = kDefaultConcatTemplate);

// Personas file: JSONL {query_id, strategy, domain?, persona_text, template_hash}.
void save_personas(const std::filesystem::path& path, const std::vector<Persona>& personas,
                   const std::string& template_hash, const nlohmann::json& meta = nullptr);
std::vector<Persona> load_personas(const std::filesystem::path& path);

// Domain pool file: {seed, count, template_hash, domains} plus any keys in `meta`.
void save_domain_pool(const std::filesystem::path& path, const std::vector<std::string>& pool,
                      std::uint64_t seed, const std::string& template_hash,
                      const nlohmann::json& meta = nullptr);
std::vector<std::string> load_domain_pool(const std::filesystem::path& path);

}  // namespace its::persona
