#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "its/corpus.hpp"
#include "its/llm_client.hpp"
#include "its/metrics.hpp"
#include "its/prompt_template.hpp"
#include "its/strategy.hpp"
#include "json.hpp"

namespace its::config {

struct CorpusConfig {
  std::string name;
  std::filesystem::path path;
  corpus::RecordFormat format = corpus::RecordFormat::kJsonl;
  std::size_t count = 0;  // 0 keeps every record that passes the filter
  corpus::SampleMode mode = corpus::SampleMode::kUniformWithoutReplacement;
  bool filter = true;
};

struct BenchmarkConfig {
  std::string name;
  std::filesystem::path path;
};

struct PersonaConfig {
  llm::EndpointConfig endpoint;
  std::size_t domain_count = 100;
  double temperature = 1.0;
  int max_tokens = 512;
};

// A fine-tuned checkpoint to evaluate.
struct TargetConfig {
  std::string name;
  llm::EndpointConfig endpoint;
  std::string base_dataset;
  Strategy train_strategy = Strategy::kNone;
};

// Members are (train, test) pairs resolved against the targets trained on
// base_dataset, one vote per benchmark.
struct VoteConfig {
  std::string label;
  std::string base_dataset;
  std::vector<std::pair<Strategy, Strategy>> members;
  std::vector<std::string> benchmarks;
  metrics::TieBreak tie_break = metrics::TieBreak::kFirst;
};

struct RunConfig {
  std::filesystem::path source;  // config file, empty for in-memory configs
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> templates_dir;
  std::string concat_template{kDefaultConcatTemplate};
  std::vector<CorpusConfig> corpora;
  std::vector<BenchmarkConfig> benchmarks;
  std::optional<PersonaConfig> persona;
  std::vector<TargetConfig> targets;
  std::vector<Strategy> train_strategies{kStrategyOrder.begin(), kStrategyOrder.end()};
  std::vector<Strategy> test_strategies{kStrategyOrder.begin(), kStrategyOrder.end()};
  int eval_max_tokens = 32768;
  llm::RetryPolicy retry;
  std::string base_model;
  nlohmann::json manifest_overrides = nlohmann::json::object();
  std::vector<VoteConfig> votes;
  std::vector<std::string> best_benchmarks{"AIME24", "AIME25"};
  metrics::Objective objective = metrics::Objective::kMinThenSum;
  std::optional<std::filesystem::path> comparisons;

  // Digest of everything that affects artifact content. Transport settings
  // (URLs, timeouts, parallelism, key variables) and the output directory
  // are left out.
  std::string hash() const;
  nlohmann::json semantic_json() const;

  PromptTemplateSet templates() const;

  const CorpusConfig* find_corpus(const std::string& name) const;
  const BenchmarkConfig* find_benchmark(const std::string& name) const;
  const TargetConfig* find_target(const std::string& name) const;
  const TargetConfig* find_target(const std::string& base_dataset, Strategy train) const;
};

// Relative paths resolve against `base_dir`.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

struct ValidationOptions {
  bool check_endpoints = true;
  double connect_timeout_seconds = 3.0;
};

// Problems found, each naming the offending path or key. Reads files but
// writes nothing.
std::vector<std::string> validate(const RunConfig& config, const ValidationOptions& options = {});

}  // namespace its::config
