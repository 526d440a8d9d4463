#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "its/corpus.hpp"
#include "its/persona.hpp"
#include "its/strategy.hpp"
#include "json.hpp"

namespace its::variant {

enum class Split { kTrain, kTest };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

struct VariantRecord {
  persona::AugmentedQuery query;
  std::optional<std::string> output;       // train split: supervision target, verbatim
  std::optional<std::string> gold_answer;  // test split

  bool operator==(const VariantRecord&) const = default;
};

struct VariantMetadata {
  std::uint64_t seed = 0;
  std::string template_hash;
  std::string concat_template{kDefaultConcatTemplate};
  std::string generator_model;
  std::string created_at;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const VariantMetadata&) const = default;
};

struct DatasetVariant {
  std::string base_name;
  Strategy strategy = Strategy::kNone;
  Split split = Split::kTrain;
  std::vector<VariantRecord> records;
  VariantMetadata metadata;

  // Hash over everything except metadata.created_at.
  std::string content_hash() const;

  bool operator==(const DatasetVariant&) const = default;
};

// Produces personas for a batch of records, aligned with the input.
using PersonaSource =
    std::function<std::vector<persona::PersonaResult>(const std::vector<corpus::SourceRecord>&)>;

// Augments every record 1:1 in order. Train keeps `output`, test keeps
// `gold_answer`. Any persona failure fails the whole build with the list of
// failing query ids; nothing is returned half-built.
DatasetVariant build_variant(const std::vector<corpus::SourceRecord>& base,
                             const std::string& base_name, Strategy strategy, Split split,
                             const PersonaSource& personas, VariantMetadata metadata);

// PersonaSource backed by a fixed list of personas keyed by query id.
PersonaSource personas_from_list(std::vector<persona::Persona> personas);

// Header line {"meta": ...} followed by one JSON line per record.
std::string serialize_variant(const DatasetVariant& variant);
DatasetVariant parse_variant(std::string_view text, const std::string& name);

// Writes atomically. When `path` already holds a variant with the same
// content hash the file is left untouched; returns whether it was written.
bool save_variant(const std::filesystem::path& path, const DatasetVariant& variant);
DatasetVariant load_variant(const std::filesystem::path& path);

// Trainer-agnostic SFT hyperparameters.
struct TrainManifest {
  int update_steps = 240;
  int batch_size = 120;
  double learning_rate = 5e-6;
  std::string schedule = "cosine";
  int max_token_length = 32768;
  bool packing = false;
  std::string dataset_path;
  std::string base_model;

  std::string base_name;
  Strategy strategy = Strategy::kNone;
  std::uint64_t seed = 0;
  std::string variant_hash;
  std::string config_hash;
  std::vector<std::string> deviations;  // keys overridden away from the defaults

  bool operator==(const TrainManifest&) const = default;
};

// Throws its::Error(kUsage) for test-split variants and unknown or
// ill-typed override keys.
TrainManifest emit_manifest(const DatasetVariant& variant, const std::string& base_model,
                            const std::string& dataset_path,
                            const nlohmann::json& overrides = nlohmann::json::object());

nlohmann::json to_json(const TrainManifest& manifest);
TrainManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const std::filesystem::path& path, const TrainManifest& manifest);

}  // namespace its::variant
