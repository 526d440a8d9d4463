#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "its/config.hpp"
#include "its/inference.hpp"
#include "its/llm_client.hpp"
#include "its/strategy.hpp"
#include "its/variant.hpp"

namespace its::pipeline {

// Where each artifact lives under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path base(const std::string& name) const;
  std::filesystem::path domains() const;
  std::filesystem::path personas(const std::string& base, Strategy s) const;
  std::filesystem::path variant(const std::string& base, Strategy s, variant::Split split) const;
  std::filesystem::path manifest(const std::string& base, Strategy s) const;
  std::filesystem::path completions(const std::string& run_id) const;
  std::filesystem::path grades(const std::string& run_id) const;
  std::filesystem::path matrix(const std::string& base) const;
  std::filesystem::path matrix_table(const std::string& base) const;
  std::filesystem::path vote(const std::string& label, const std::string& benchmark) const;
  std::filesystem::path report_markdown() const;
  std::filesystem::path report_json() const;
  std::filesystem::path ledger() const;
};

class Context {
 public:
  Context(config::RunConfig config, std::ostream& log, std::stop_token stop = {});

  const config::RunConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  const std::string& config_hash() const { return config_hash_; }
  std::ostream& log() { return log_; }
  std::stop_token stop() const { return stop_; }

  // One ledger per output directory, shared by every client.
  std::shared_ptr<llm::Ledger> ledger();
  llm::Client& client(const llm::EndpointConfig& endpoint);
  // Network calls made by clients handed out so far.
  std::size_t network_calls() const;

  // Stamp written into every artifact.
  nlohmann::json provenance() const;

 private:
  config::RunConfig config_;
  Layout layout_;
  std::string config_hash_;
  std::ostream& log_;
  std::stop_token stop_;
  std::shared_ptr<llm::Ledger> ledger_;
  std::vector<std::shared_ptr<llm::Client>> clients_;
};

// An evaluation the config asks for.
struct PlannedRun {
  std::string run_id;
  const config::TargetConfig* target = nullptr;
  Strategy test_strategy = Strategy::kNone;
  std::string benchmark;
};

std::vector<PlannedRun> planned_runs(const config::RunConfig& config);

struct Selection {
  std::optional<std::string> base;  // corpus or benchmark name
  std::optional<Strategy> strategy;
  std::optional<variant::Split> split;
  std::optional<std::string> target;
  std::optional<std::string> benchmark;
  std::optional<std::string> run_id;
};

void ingest(Context& ctx, const Selection& sel);
// Returns the number of records still lacking a persona.
std::size_t personas(Context& ctx, const Selection& sel);
void build(Context& ctx, const Selection& sel);
void manifest(Context& ctx, const Selection& sel, const std::string& base_model_flag,
              const nlohmann::json& override_flags);
// Returns the number of failed requests across the selected runs.
std::size_t eval(Context& ctx, const Selection& sel);
void grade(Context& ctx, const Selection& sel);
void matrix(Context& ctx);
void vote(Context& ctx, const std::optional<std::filesystem::path>& spec_file);
void report(Context& ctx);

}  // namespace its::pipeline
