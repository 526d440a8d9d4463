#pragma once

#include <cstdint>
#include <filesystem>
#include <stop_token>
#include <string>
#include <vector>

#include "its/completion.hpp"
#include "its/llm_client.hpp"
#include "its/strategy.hpp"
#include "its/variant.hpp"
#include "json.hpp"

namespace its::inference {

// One evaluation of a trained checkpoint on one test variant. Decoding is
// always greedy (temperature 0); there is no knob for it.
struct EvalRun {
  std::string run_id;
  llm::EndpointConfig endpoint;
  std::string base_dataset;  // training data the checkpoint came from, e.g. ot1k
  Strategy train_strategy = Strategy::kNone;
  Strategy test_strategy = Strategy::kNone;
  std::string benchmark;
  std::uint64_t seed = 0;
  int max_tokens = 32768;
  std::string test_variant_name;  // file name, not a path
  std::string test_variant_hash;
  std::string config_hash;

  static constexpr double kTemperature = 0.0;
};

// "<model>__<base>__<train>-<test>__<benchmark>__s<seed>", with characters
// outside [A-Za-z0-9._-] replaced by '_'.
std::string make_run_id(const std::string& model, const std::string& base_dataset,
                        Strategy train, Strategy test, const std::string& benchmark,
                        std::uint64_t seed);

// Run descriptor written as the completions file header. Transport details
// (base_url, timeout, parallelism, credentials) are deliberately absent so the
// file depends only on what was evaluated.
nlohmann::json describe(const EvalRun& run);
EvalRun eval_run_from_json(const nlohmann::json& j);

// One temperature-0 request per test record, issued through the client's
// ledger so an interrupted run resumes where it stopped. Per-question
// failures become error completions. Throws its::Error(kInterrupted) if
// `stop` fires and kTransport if no request reached the endpoint at all.
std::vector<Completion> run_eval(const EvalRun& run, const variant::DatasetVariant& test_variant,
                                 llm::Client& client, std::stop_token stop = {});

std::size_t estimate_tokens(std::string_view text);

std::string serialize_completions(const EvalRun& run, const std::vector<Completion>& completions);

struct CompletionsFile {
  EvalRun run;
  std::vector<Completion> completions;
};

CompletionsFile parse_completions(std::string_view text, const std::string& name);
CompletionsFile load_completions(const std::filesystem::path& path);
void save_completions(const std::filesystem::path& path, const EvalRun& run,
                      const std::vector<Completion>& completions);

}  // namespace its::inference
