#include "its/inference.hpp"

#include <cctype>
#include <unordered_set>

#include "its/error.hpp"
#include "its/util.hpp"

namespace its::inference {

std::string make_run_id(const std::string& model, const std::string& base_dataset,
                        Strategy train, Strategy test, const std::string& benchmark,
                        std::uint64_t seed) {
  auto clean = [](std::string s) {
    for (auto& c : s) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') {
        c = '_';
      }
    }
    return s;
  };
  return clean(model) + "__" + clean(base_dataset) + "__" + std::string(tag(train)) + "-" +
         std::string(tag(test)) + "__" + clean(benchmark) + "__s" + std::to_string(seed);
}

nlohmann::json describe(const EvalRun& run) {
  return {{"run_id", run.run_id},
          {"model", run.endpoint.model_name},
          {"base_dataset", run.base_dataset},
          {"train_strategy", std::string(tag(run.train_strategy))},
          {"test_strategy", std::string(tag(run.test_strategy))},
          {"benchmark", run.benchmark},
          {"seed", run.seed},
          {"temperature", EvalRun::kTemperature},
          {"max_tokens", run.max_tokens},
          {"test_variant", run.test_variant_name},
          {"test_variant_hash", run.test_variant_hash},
          {"config_hash", run.config_hash}};
}

EvalRun eval_run_from_json(const nlohmann::json& j) {
  try {
    EvalRun run;
    run.run_id = j.at("run_id").get<std::string>();
    run.endpoint.model_name = j.at("model").get<std::string>();
    run.base_dataset = j.at("base_dataset").get<std::string>();
    run.train_strategy = strategy_from_string(j.at("train_strategy").get<std::string>());
    run.test_strategy = strategy_from_string(j.at("test_strategy").get<std::string>());
    run.benchmark = j.at("benchmark").get<std::string>();
    run.seed = j.at("seed").get<std::uint64_t>();
    run.max_tokens = j.at("max_tokens").get<int>();
    run.test_variant_name = j.at("test_variant").get<std::string>();
    run.test_variant_hash = j.at("test_variant_hash").get<std::string>();
    run.config_hash = j.at("config_hash").get<std::string>();
    if (j.at("temperature").get<double>() != EvalRun::kTemperature) {
      throw Error(ErrorCode::kParse, "evaluation runs must use temperature 0");
    }
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid run descriptor: ") + e.what());
  }
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::vector<Completion> run_eval(const EvalRun& run, const variant::DatasetVariant& test_variant,
                                 llm::Client& client, std::stop_token stop) {
  if (test_variant.split != variant::Split::kTest) {
    throw Error(ErrorCode::kUsage, "evaluation needs a test-split variant, got " +
                                       std::string(variant::to_string(test_variant.split)));
  }
  if (test_variant.strategy != run.test_strategy) {
    throw Error(ErrorCode::kUsage, "run " + run.run_id + " expects test strategy " +
                                       std::string(tag(run.test_strategy)) + " but variant has " +
                                       std::string(tag(test_variant.strategy)));
  }
  if (run.max_tokens < 1) throw Error(ErrorCode::kUsage, "max_tokens must be positive");

  std::vector<llm::ChatRequest> requests;
  requests.reserve(test_variant.records.size());
  for (const auto& r : test_variant.records) {
    llm::ChatRequest req;
    req.messages = {{"user", r.query.rendered}};
    req.temperature = EvalRun::kTemperature;
    req.max_tokens = run.max_tokens;
    requests.push_back(std::move(req));
  }

  const auto results = client.complete_batch(requests, stop);

  std::size_t transport_failures = 0;
  std::vector<Completion> completions;
  completions.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& rec = test_variant.records[i];
    Completion c;
    c.query_id = rec.query.query_id;
    c.rendered_query = rec.query.rendered;
    if (results[i].ok()) {
      const auto& done = *results[i].completion;
      c.text = done.text;
      c.finish_reason = done.finish_reason;
      c.token_estimate = estimate_tokens(done.text);
    } else {
      const auto& failure = *results[i].failure;
      if (failure.code == ErrorCode::kInterrupted) {
        throw Error(ErrorCode::kInterrupted,
                    "run " + run.run_id + " interrupted; rerun to resume from the ledger");
      }
      if (failure.code == ErrorCode::kTransport) ++transport_failures;
      c.finish_reason = "error";
      c.error = failure.message;
    }
    completions.push_back(std::move(c));
  }
  if (!results.empty() && transport_failures == results.size()) {
    throw Error(ErrorCode::kTransport,
                "endpoint " + client.config().base_url + " unreachable; run " + run.run_id +
                    " aborted");
  }
  return completions;
}

std::string serialize_completions(const EvalRun& run, const std::vector<Completion>& completions) {
  std::string out = nlohmann::json{{"run", describe(run)}}.dump();
  out.push_back('\n');
  for (const auto& c : completions) {
    nlohmann::json j = {{"query_id", c.query_id},
                        {"rendered_query", c.rendered_query},
                        {"completion", c.text},
                        {"finish_reason", c.finish_reason},
                        {"token_estimate", c.token_estimate}};
    if (c.error) j["error"] = *c.error;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

CompletionsFile parse_completions(std::string_view text, const std::string& name) {
  const auto lines = split_lines(text);
  std::size_t line_no = 0;
  try {
    if (lines.empty()) throw Error(ErrorCode::kParse, name + ": empty completions file");
    CompletionsFile file;
    line_no = 1;
    file.run = eval_run_from_json(nlohmann::json::parse(lines[0]).at("run"));
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      line_no = i + 1;
      if (trim(lines[i]).empty()) continue;
      const auto j = nlohmann::json::parse(lines[i]);
      Completion c;
      c.query_id = j.at("query_id").get<std::string>();
      c.rendered_query = j.value("rendered_query", std::string{});
      c.text = j.at("completion").get<std::string>();
      c.finish_reason = j.at("finish_reason").get<std::string>();
      c.token_estimate = j.value("token_estimate", std::size_t{0});
      if (j.contains("error")) c.error = j.at("error").get<std::string>();
      if (!seen.insert(c.query_id).second) {
        throw Error(ErrorCode::kDuplicate,
                    name + ": duplicate completion for '" + c.query_id + "'");
      }
      file.completions.push_back(std::move(c));
    }
    return file;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, name + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

CompletionsFile load_completions(const std::filesystem::path& path) {
  return parse_completions(read_file(path), path.string());
}

void save_completions(const std::filesystem::path& path, const EvalRun& run,
                      const std::vector<Completion>& completions) {
  write_file_atomic(path, serialize_completions(run, completions));
}

}  // namespace its::inference
