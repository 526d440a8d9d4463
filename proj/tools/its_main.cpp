#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <optional>
#include <stop_token>
#include <thread>

#include "CLI11.hpp"
#include "its/config.hpp"
#include "its/error.hpp"
#include "its/pipeline.hpp"
#include "its/util.hpp"

namespace {

namespace fs = std::filesystem;
using its::Error;
using its::ErrorCode;

std::atomic<bool> g_interrupted{false};
void on_signal(int) { g_interrupted = true; }

// Converts SIGINT/SIGTERM into a stop request for in-flight batches.
class InterruptWatcher {
 public:
  InterruptWatcher() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    thread_ = std::jthread([this](std::stop_token self) {
      while (!self.stop_requested()) {
        if (g_interrupted) {
          source_.request_stop();
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
    });
  }
  std::stop_token token() const { return source_.get_token(); }

 private:
  std::stop_source source_;
  std::jthread thread_;
};

int report_error(const std::string& subcommand, ErrorCode code, const std::string& message) {
  const int status = its::exit_status(code);
  std::cerr << "its-error code=" << its::to_string(code) << " exit=" << status
            << " subcommand=" << (subcommand.empty() ? "-" : subcommand) << "\n"
            << "its: " << message << "\n";
  return status;
}

struct Overrides {
  std::string config_path = "its.json";
  bool config_flag = false;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

its::config::RunConfig load_effective(const Overrides& o, std::ostream& log) {
  const fs::path path = o.config_path;
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(its::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": malformed JSON (" + e.what() + ")");
  } catch (const Error&) {
    throw Error(ErrorCode::kConfig, "cannot read config file: " + path.string());
  }
  auto config = its::config::parse_config(raw, path.parent_path());
  config.source = path;
  auto origin = [&](bool flag, const char* key) {
    return flag ? "flag" : (raw.is_object() && raw.contains(key) ? "config" : "default");
  };
  if (o.out) config.output_dir = *o.out;
  if (o.seed) config.seed = *o.seed;
  log << "its: config=" << path.string() << " (" << (o.config_flag ? "flag" : "default") << ")\n"
      << "its: output_dir=" << config.output_dir.string() << " ("
      << origin(o.out.has_value(), "output_dir") << ")\n"
      << "its: seed=" << config.seed << " (" << origin(o.seed.has_value(), "seed") << ")\n";
  return config;
}

std::optional<its::Strategy> strategy_arg(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return its::strategy_from_string(text);
}

std::optional<std::string> text_arg(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return text;
}

nlohmann::json parse_overrides(const std::vector<std::string>& assignments) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kUsage, "--set expects KEY=VALUE, got '" + a + "'");
    }
    const auto key = a.substr(0, eq);
    const auto value = a.substr(eq + 1);
    try {
      out[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      out[key] = value;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persona-augmented dataset and evaluation pipeline"};
  app.require_subcommand(1);
  Overrides overrides;
  std::uint64_t seed_flag = 0;
  std::string out_flag;
  auto* config_opt = app.add_option("-c,--config", overrides.config_path, "Run config (JSON)");
  auto* out_opt = app.add_option("-o,--out", out_flag, "Output directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", seed_flag, "Seed (overrides config)");

  std::string base, strategy, split, target, benchmark, run_id, base_model, spec_file;
  std::vector<std::string> sets;
  bool offline = false;

  auto* ingest = app.add_subcommand("ingest", "Filter and sample corpora into base datasets");
  ingest->add_option("--corpus", base, "Only this corpus");

  auto* personas = app.add_subcommand("personas", "Generate personas for bases and benchmarks");
  personas->add_option("--base", base, "Corpus or benchmark name");
  personas->add_option("--strategy", strategy, "N, S, D or R");

  auto* build = app.add_subcommand("build", "Build persona-augmented dataset variants");
  build->add_option("--base", base, "Corpus or benchmark name");
  build->add_option("--strategy", strategy, "N, S, D or R");
  build->add_option("--split", split, "train or test");

  auto* manifest = app.add_subcommand("manifest", "Emit fine-tuning manifests for train variants");
  manifest->add_option("--base", base, "Corpus name");
  manifest->add_option("--strategy", strategy, "N, S, D or R");
  manifest->add_option("--base-model", base_model, "Model to fine-tune");
  manifest->add_option("--set", sets, "Override a hyperparameter, KEY=VALUE");

  auto* eval = app.add_subcommand("eval", "Run greedy evaluations against target endpoints");
  auto* grade = app.add_subcommand("grade", "Grade completions against benchmark gold answers");
  for (auto* sub : {eval, grade}) {
    sub->add_option("--target", target, "Target name");
    sub->add_option("--strategy", strategy, "Test strategy");
    sub->add_option("--benchmark", benchmark, "Benchmark name");
    sub->add_option("--run", run_id, "Run id");
  }

  app.add_subcommand("matrix", "Assemble train x test strategy matrices");
  auto* vote = app.add_subcommand("vote", "Majority vote over three evaluated runs");
  vote->add_option("--spec", spec_file, "Vote spec file {members, tie_break}");
  app.add_subcommand("report", "Render the markdown and JSON report");
  auto* validate = app.add_subcommand("validate", "Check the config without writing anything");
  validate->add_flag("--offline", offline, "Skip endpoint reachability checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("", ErrorCode::kUsage, e.what());
  }

  const auto* sub = app.get_subcommands().front();
  const auto name = sub->get_name();
  overrides.config_flag = config_opt->count() > 0;
  if (out_opt->count()) overrides.out = out_flag;
  if (seed_opt->count()) overrides.seed = seed_flag;

  try {
    auto config = load_effective(overrides, std::cerr);

    if (name == "validate") {
      its::config::ValidationOptions vo;
      vo.check_endpoints = !offline;
      const auto issues = its::config::validate(config, vo);
      if (!issues.empty()) {
        std::cerr << "its-error code=config exit=1 subcommand=validate issues=" << issues.size()
                  << "\n";
        for (const auto& i : issues) std::cerr << "its: " << i << "\n";
        return 1;
      }
      std::cerr << "its: config ok (hash " << config.hash() << ")\n";
      return 0;
    }

    try {
      config.templates().validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, e.what());
    }
    InterruptWatcher watcher;
    its::pipeline::Context ctx(std::move(config), std::cerr, watcher.token());
    std::cerr << "its: config_hash=" << ctx.config_hash() << "\n";

    its::pipeline::Selection sel;
    sel.base = text_arg(base);
    sel.strategy = strategy_arg(strategy);
    if (!split.empty()) sel.split = its::variant::split_from_string(split);
    sel.target = text_arg(target);
    sel.benchmark = text_arg(benchmark);
    sel.run_id = text_arg(run_id);

    int status = 0;
    if (name == "ingest") {
      its::pipeline::ingest(ctx, sel);
    } else if (name == "personas") {
      const auto missing = its::pipeline::personas(ctx, sel);
      if (missing > 0) {
        status = report_error(name, ErrorCode::kGeneration,
                              std::to_string(missing) + " persona(s) could not be generated; "
                              "rerun to retry them");
      }
    } else if (name == "build") {
      its::pipeline::build(ctx, sel);
    } else if (name == "manifest") {
      its::pipeline::manifest(ctx, sel, base_model, parse_overrides(sets));
    } else if (name == "eval") {
      const auto failed = its::pipeline::eval(ctx, sel);
      if (failed > 0) {
        std::cerr << "its: " << failed << " request(s) failed and will be graded as incorrect\n";
      }
    } else if (name == "grade") {
      its::pipeline::grade(ctx, sel);
    } else if (name == "matrix") {
      its::pipeline::matrix(ctx);
    } else if (name == "vote") {
      std::optional<fs::path> spec;
      if (!spec_file.empty()) spec = spec_file;
      its::pipeline::vote(ctx, spec);
    } else if (name == "report") {
      its::pipeline::report(ctx);
    }
    std::cerr << "its: network_calls=" << ctx.network_calls() << "\n";
    return status;
  } catch (const Error& e) {
    return report_error(name, e.code(), e.what());
  } catch (const std::exception& e) {
    return report_error(name, ErrorCode::kIo, e.what());
  }
}
