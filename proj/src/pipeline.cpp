#include "its/pipeline.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "its/error.hpp"
#include "its/grader.hpp"
#include "its/metrics.hpp"
#include "its/persona.hpp"
#include "its/util.hpp"

namespace its::pipeline {
namespace {

namespace fs = std::filesystem;

std::string clean(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') c = '_';
  }
  return s;
}

std::string stem(const std::string& base, Strategy s) {
  return clean(base) + "__" + std::string(tag(s));
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kNotFound, "missing " + path.string() + " (" + hint + ")");
  }
}

bool is_benchmark(const config::RunConfig& c, const std::string& name) {
  return c.find_benchmark(name) != nullptr;
}

// Names of corpora and benchmarks the selection covers.
std::vector<std::string> selected_bases(const config::RunConfig& c, const Selection& sel) {
  if (sel.base) {
    if (!c.find_corpus(*sel.base) && !c.find_benchmark(*sel.base)) {
      throw Error(ErrorCode::kUsage, "unknown base '" + *sel.base +
                                         "' (not a configured corpus or benchmark)");
    }
    return {*sel.base};
  }
  std::vector<std::string> names;
  for (const auto& cc : c.corpora) names.push_back(cc.name);
  for (const auto& b : c.benchmarks) names.push_back(b.name);
  return names;
}

std::vector<Strategy> strategies_for(const config::RunConfig& c, const std::string& base,
                                     const Selection& sel) {
  if (sel.strategy) return {*sel.strategy};
  return is_benchmark(c, base) ? c.test_strategies : c.train_strategies;
}

std::vector<corpus::SourceRecord> load_base(Context& ctx, const std::string& name) {
  if (const auto* b = ctx.config().find_benchmark(name)) {
    return grader::load_benchmark(b->path).as_records();
  }
  const auto path = ctx.layout().base(name);
  require_file(path, "run `its ingest --corpus " + name + "` first");
  return corpus::load_records(path);
}

persona::GenerationOptions generation_options(const config::RunConfig& c) {
  persona::GenerationOptions o;
  o.templates = c.templates();
  o.seed = c.seed;
  if (c.persona) {
    o.temperature = c.persona->temperature;
    o.max_tokens = c.persona->max_tokens;
  }
  return o;
}

const config::PersonaConfig& persona_config(const config::RunConfig& c) {
  if (!c.persona) throw Error(ErrorCode::kConfig, "persona_generator is not configured");
  return *c.persona;
}

bool selected(const std::optional<std::string>& want, const std::string& have) {
  return !want || *want == have;
}

nlohmann::json wrap(const Context& ctx, const char* key, nlohmann::json body) {
  auto j = ctx.provenance();
  j[key] = std::move(body);
  return j;
}

}  // namespace

fs::path Layout::base(const std::string& name) const {
  return root / "bases" / (clean(name) + ".jsonl");
}
fs::path Layout::domains() const { return root / "personas" / "domains.json"; }
fs::path Layout::personas(const std::string& base, Strategy s) const {
  return root / "personas" / (stem(base, s) + ".jsonl");
}
fs::path Layout::variant(const std::string& base, Strategy s, variant::Split split) const {
  return root / "variants" / (stem(base, s) + "__" + std::string(variant::to_string(split)) + ".jsonl");
}
fs::path Layout::manifest(const std::string& base, Strategy s) const {
  return root / "manifests" / (stem(base, s) + ".json");
}
fs::path Layout::completions(const std::string& run_id) const {
  return root / "completions" / (run_id + ".jsonl");
}
fs::path Layout::grades(const std::string& run_id) const {
  return root / "grades" / (run_id + ".jsonl");
}
fs::path Layout::matrix(const std::string& base) const {
  return root / "matrix" / (clean(base) + ".json");
}
fs::path Layout::matrix_table(const std::string& base) const {
  return root / "matrix" / (clean(base) + ".md");
}
fs::path Layout::vote(const std::string& label, const std::string& benchmark) const {
  return root / "votes" / (clean(label) + "__" + clean(benchmark) + ".json");
}
fs::path Layout::report_markdown() const { return root / "report.md"; }
fs::path Layout::report_json() const { return root / "report.json"; }
fs::path Layout::ledger() const { return root / "ledger" / "requests.jsonl"; }

Context::Context(config::RunConfig config, std::ostream& log, std::stop_token stop)
    : config_(std::move(config)),
      layout_{config_.output_dir},
      config_hash_(config_.hash()),
      log_(log),
      stop_(std::move(stop)) {}

std::shared_ptr<llm::Ledger> Context::ledger() {
  if (!ledger_) {
    ledger_ = std::make_shared<llm::Ledger>(layout_.ledger());
    if (ledger_->truncated_bytes() > 0) {
      log_ << "its: ledger: dropped " << ledger_->truncated_bytes()
           << " bytes of an incomplete trailing entry\n";
    }
  }
  return ledger_;
}

llm::Client& Context::client(const llm::EndpointConfig& endpoint) {
  clients_.push_back(std::make_shared<llm::Client>(endpoint, config_.retry, ledger()));
  return *clients_.back();
}

std::size_t Context::network_calls() const {
  std::size_t n = 0;
  for (const auto& c : clients_) n += c->network_calls();
  return n;
}

nlohmann::json Context::provenance() const {
  return {{"config_hash", config_hash_}, {"seed", config_.seed}};
}

std::vector<PlannedRun> planned_runs(const config::RunConfig& c) {
  std::vector<PlannedRun> runs;
  for (const auto& t : c.targets) {
    for (auto test : c.test_strategies) {
      for (const auto& b : c.benchmarks) {
        runs.push_back(PlannedRun{inference::make_run_id(t.name, t.base_dataset, t.train_strategy,
                                                         test, b.name, c.seed),
                                  &t, test, b.name});
      }
    }
  }
  return runs;
}

void ingest(Context& ctx, const Selection& sel) {
  const auto& c = ctx.config();
  bool matched = false;
  for (const auto& cc : c.corpora) {
    if (!selected(sel.base, cc.name)) continue;
    matched = true;
    const auto records = corpus::load_records(cc.path, cc.format);
    corpus::FilterResult filtered{records, 0};
    if (cc.filter) filtered = corpus::filter_records(records);
    auto kept = std::move(filtered.kept);
    if (cc.count > 0) {
      kept = corpus::sample_records(kept, corpus::SampleSpec{c.seed, cc.count, cc.mode});
    }
    auto meta = ctx.provenance();
    meta["corpus"] = cc.name;
    meta["read"] = records.size();
    meta["dropped"] = filtered.dropped;
    meta["count"] = kept.size();
    meta["mode"] = corpus::to_string(cc.mode);
    corpus::save_records(ctx.layout().base(cc.name), kept, meta);
    ctx.log() << "its: ingest " << cc.name << ": " << records.size() << " read, "
              << filtered.dropped << " dropped by filter, " << kept.size() << " kept\n";
  }
  for (const auto& b : c.benchmarks) {
    if (!selected(sel.base, b.name)) continue;
    matched = true;
    const auto bench = grader::load_benchmark(b.path);
    bench.gold();
    ctx.log() << "its: benchmark " << b.name << ": " << bench.size() << " questions\n";
  }
  if (!matched && sel.base) {
    throw Error(ErrorCode::kUsage, "unknown corpus or benchmark '" + *sel.base + "'");
  }
}

std::size_t personas(Context& ctx, const Selection& sel) {
  const auto& c = ctx.config();
  std::vector<std::pair<std::string, Strategy>> jobs;
  for (const auto& base : selected_bases(c, sel)) {
    for (auto s : strategies_for(c, base, sel)) {
      if (s != Strategy::kNone) jobs.emplace_back(base, s);
    }
  }
  if (jobs.empty()) {
    ctx.log() << "its: personas: nothing to generate\n";
    return 0;
  }
  const auto& pc = persona_config(c);
  auto& client = ctx.client(pc.endpoint);
  const auto options = generation_options(c);
  const auto template_hash = options.templates.hash();

  std::vector<std::string> pool;
  const bool need_pool = std::any_of(jobs.begin(), jobs.end(),
                                     [](const auto& j) { return j.second == Strategy::kRandom; });
  if (need_pool) {
    pool = persona::generate_domain_pool(pc.domain_count, client, options);
    persona::save_domain_pool(ctx.layout().domains(), pool, c.seed, template_hash,
                              ctx.provenance());
    ctx.log() << "its: domain pool: " << pool.size() << " domains\n";
  }

  std::size_t missing = 0;
  for (const auto& [base, s] : jobs) {
    if (ctx.stop().stop_requested()) throw Error(ErrorCode::kInterrupted, "interrupted");
    const auto records = load_base(ctx, base);
    const auto results = persona::generate_personas(records, s, pool, client, options);
    std::vector<persona::Persona> ok;
    for (const auto& r : results) {
      if (r.persona) {
        ok.push_back(*r.persona);
      } else {
        ++missing;
        ctx.log() << "its: persona failed: " << r.error << "\n";
      }
    }
    if (ctx.stop().stop_requested()) throw Error(ErrorCode::kInterrupted, "interrupted");
    auto meta = ctx.provenance();
    meta["base"] = base;
    meta["strategy"] = tag(s);
    meta["generator_model"] = pc.endpoint.model_name;
    persona::save_personas(ctx.layout().personas(base, s), ok, template_hash, meta);
    ctx.log() << "its: personas " << base << "/" << tag(s) << ": " << ok.size() << " of "
              << records.size() << "\n";
  }
  return missing;
}

void build(Context& ctx, const Selection& sel) {
  const auto& c = ctx.config();
  const auto template_hash = c.templates().hash();
  for (const auto& base : selected_bases(c, sel)) {
    const auto split =
        sel.split.value_or(is_benchmark(c, base) ? variant::Split::kTest : variant::Split::kTrain);
    const auto records = load_base(ctx, base);
    for (auto s : strategies_for(c, base, sel)) {
      variant::PersonaSource source;
      variant::VariantMetadata meta;
      meta.seed = c.seed;
      meta.template_hash = template_hash;
      meta.concat_template = c.concat_template;
      meta.created_at = utc_timestamp();
      meta.config_hash = ctx.config_hash();
      if (s != Strategy::kNone) {
        const auto path = ctx.layout().personas(base, s);
        require_file(path, "run `its personas --base " + base + " --strategy " +
                               std::string(tag(s)) + "` first");
        source = variant::personas_from_list(persona::load_personas(path));
        if (c.persona) meta.generator_model = c.persona->endpoint.model_name;
      }
      const auto v = variant::build_variant(records, base, s, split, source, std::move(meta));
      const auto path = ctx.layout().variant(base, s, split);
      const bool written = variant::save_variant(path, v);
      ctx.log() << "its: variant " << base << "/" << tag(s) << "/" << variant::to_string(split)
                << ": " << v.records.size() << " records" << (written ? "" : " (unchanged)")
                << "\n";
    }
  }
}

void manifest(Context& ctx, const Selection& sel, const std::string& base_model_flag,
              const nlohmann::json& override_flags) {
  const auto& c = ctx.config();
  const auto base_model = base_model_flag.empty() ? c.base_model : base_model_flag;
  if (base_model.empty()) {
    throw Error(ErrorCode::kUsage, "no base model: set manifest.base_model or pass --base-model");
  }
  auto overrides = c.manifest_overrides;
  overrides.update(override_flags);
  for (const auto& cc : c.corpora) {
    if (!selected(sel.base, cc.name)) continue;
    for (auto s : strategies_for(c, cc.name, sel)) {
      const auto path = ctx.layout().variant(cc.name, s, variant::Split::kTrain);
      require_file(path, "run `its build --base " + cc.name + " --strategy " +
                             std::string(tag(s)) + " --split train` first");
      const auto v = variant::load_variant(path);
      const auto rel = fs::relative(path, ctx.layout().root).generic_string();
      const auto m = variant::emit_manifest(v, base_model, rel, overrides);
      variant::save_manifest(ctx.layout().manifest(cc.name, s), m);
      ctx.log() << "its: manifest " << cc.name << "/" << tag(s);
      if (!m.deviations.empty()) {
        ctx.log() << " (overridden:";
        for (const auto& d : m.deviations) ctx.log() << " " << d;
        ctx.log() << ")";
      }
      ctx.log() << "\n";
    }
  }
}

std::size_t eval(Context& ctx, const Selection& sel) {
  const auto& c = ctx.config();
  std::size_t failures = 0;
  std::size_t runs = 0;
  for (const auto& run : planned_runs(c)) {
    if (!selected(sel.target, run.target->name) || !selected(sel.benchmark, run.benchmark) ||
        !selected(sel.run_id, run.run_id) || (sel.strategy && *sel.strategy != run.test_strategy)) {
      continue;
    }
    ++runs;
    const auto vpath = ctx.layout().variant(run.benchmark, run.test_strategy, variant::Split::kTest);
    require_file(vpath, "run `its build --base " + run.benchmark + " --strategy " +
                            std::string(tag(run.test_strategy)) + " --split test` first");
    const auto v = variant::load_variant(vpath);
    inference::EvalRun er;
    er.run_id = run.run_id;
    er.endpoint = run.target->endpoint;
    er.base_dataset = run.target->base_dataset;
    er.train_strategy = run.target->train_strategy;
    er.test_strategy = run.test_strategy;
    er.benchmark = run.benchmark;
    er.seed = c.seed;
    er.max_tokens = c.eval_max_tokens;
    er.test_variant_name = vpath.filename().string();
    er.test_variant_hash = v.content_hash();
    er.config_hash = ctx.config_hash();
    auto& client = ctx.client(er.endpoint);
    const auto completions = inference::run_eval(er, v, client, ctx.stop());
    std::size_t failed = 0;
    for (const auto& comp : completions) failed += comp.error ? 1 : 0;
    failures += failed;
    inference::save_completions(ctx.layout().completions(run.run_id), er, completions);
    ctx.log() << "its: eval " << run.run_id << ": " << completions.size() << " completions";
    if (failed) ctx.log() << ", " << failed << " failed";
    ctx.log() << " (" << client.network_calls() << " network calls)\n";
  }
  if (runs == 0) throw Error(ErrorCode::kUsage, "eval: no configured run matches the selection");
  return failures;
}

void grade(Context& ctx, const Selection& sel) {
  const auto& c = ctx.config();
  std::map<std::string, grader::Benchmark> benchmarks;
  for (const auto& run : planned_runs(c)) {
    if (!selected(sel.target, run.target->name) || !selected(sel.benchmark, run.benchmark) ||
        !selected(sel.run_id, run.run_id) || (sel.strategy && *sel.strategy != run.test_strategy)) {
      continue;
    }
    const auto cpath = ctx.layout().completions(run.run_id);
    if (!fs::exists(cpath)) {
      ctx.log() << "its: grade " << run.run_id << ": no completions, skipped\n";
      continue;
    }
    if (!benchmarks.count(run.benchmark)) {
      benchmarks.emplace(run.benchmark,
                         grader::load_benchmark(c.find_benchmark(run.benchmark)->path));
    }
    const auto& bench = benchmarks.at(run.benchmark);
    const auto file = inference::load_completions(cpath);
    if (file.run.config_hash != ctx.config_hash()) {
      ctx.log() << "its: warning: " << cpath.string() << " was produced under config "
                << file.run.config_hash << "\n";
    }
    const auto result = grader::grade_run(file.completions, bench.gold(), bench.grade_options());
    auto summary = grader::summarize(result, run.benchmark);
    summary.run_id = run.run_id;
    summary.base_dataset = run.target->base_dataset;
    summary.train_strategy = run.target->train_strategy;
    summary.test_strategy = run.test_strategy;
    summary.config_hash = ctx.config_hash();
    summary.seed = c.seed;
    grader::save_grades(ctx.layout().grades(run.run_id), result.records, summary);
    ctx.log() << "its: grade " << run.run_id << ": " << result.correct << "/" << result.total
              << " = " << result.percent() << "\n";
  }
}

void matrix(Context& ctx) {
  const auto& c = ctx.config();
  std::vector<std::string> order;
  for (const auto& b : c.benchmarks) order.push_back(b.name);
  std::map<std::string, std::vector<grader::GradeSummary>> by_base;
  std::vector<std::string> bases;
  for (const auto& t : c.targets) {
    if (std::find(bases.begin(), bases.end(), t.base_dataset) == bases.end()) {
      bases.push_back(t.base_dataset);
    }
  }
  for (const auto& run : planned_runs(c)) {
    const auto gpath = ctx.layout().grades(run.run_id);
    if (!fs::exists(gpath)) continue;
    by_base[run.target->base_dataset].push_back(grader::load_grades(gpath).summary);
  }
  for (const auto& base : bases) {
    auto m = metrics::assemble_matrix(by_base[base], order);
    m.base_dataset = base;
    metrics::save_json(ctx.layout().matrix(base), wrap(ctx, "matrix", metrics::to_json(m)));
    write_file_atomic(ctx.layout().matrix_table(base),
                      "config_hash: " + ctx.config_hash() + "\nseed: " +
                          std::to_string(ctx.config().seed) + "\n\n" +
                          metrics::render_matrix_table(m));
    const auto holes = m.missing();
    ctx.log() << "its: matrix " << base << ": " << m.cells.size() << " cells";
    if (!holes.empty()) ctx.log() << ", " << holes.size() << " missing";
    ctx.log() << "\n";
  }
}

void vote(Context& ctx, const std::optional<fs::path>& spec_file) {
  const auto& c = ctx.config();
  auto run_vote = [&](const metrics::VoteSpec& spec, const std::string& expected_benchmark) {
    std::array<std::vector<grader::GradeRecord>, 3> records;
    std::string benchmark = expected_benchmark;
    for (int m = 0; m < 3; ++m) {
      const auto gpath = ctx.layout().grades(spec.members[m]);
      require_file(gpath, "grade run " + spec.members[m] + " first");
      auto file = grader::load_grades(gpath);
      if (benchmark.empty()) benchmark = file.summary.benchmark;
      if (file.summary.benchmark != benchmark) {
        throw Error(ErrorCode::kUsage, "vote members span benchmarks " + benchmark + " and " +
                                           file.summary.benchmark);
      }
      records[m] = std::move(file.records);
    }
    const auto result = metrics::majority_vote(spec, records, benchmark);
    metrics::save_json(ctx.layout().vote(spec.display_label(), benchmark),
                       wrap(ctx, "vote", metrics::to_json(result)));
    ctx.log() << "its: vote " << spec.display_label() << " on " << benchmark << ": "
              << result.correct << "/" << result.total << " = " << result.fraction()
              << " (tie-break " << metrics::to_string(spec.tie_break) << ")\n";
  };

  if (spec_file) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(*spec_file));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kParse, spec_file->string() + ": " + e.what());
    }
    run_vote(metrics::vote_spec_from_json(j), j.value("benchmark", std::string{}));
    return;
  }
  if (c.votes.empty()) {
    ctx.log() << "its: vote: no votes configured\n";
    return;
  }
  for (const auto& v : c.votes) {
    for (const auto& b : v.benchmarks) {
      metrics::VoteSpec spec;
      spec.tie_break = v.tie_break;
      spec.label = v.label;
      for (std::size_t m = 0; m < 3; ++m) {
        const auto [train, test] = v.members[m];
        const auto* target = c.find_target(v.base_dataset, train);
        if (!target) {
          throw Error(ErrorCode::kConfig, "vote '" + v.label + "': no target trained on " +
                                              v.base_dataset + " with strategy " +
                                              std::string(tag(train)));
        }
        spec.members[m] =
            inference::make_run_id(target->name, v.base_dataset, train, test, b, c.seed);
      }
      run_vote(spec, b);
    }
  }
}

void report(Context& ctx) {
  const auto& c = ctx.config();
  metrics::ReportInput in;
  in.best_benchmarks = c.best_benchmarks;
  in.objective = c.objective;
  in.config_hash = ctx.config_hash();
  in.seed = c.seed;
  std::set<std::string> seen;
  for (const auto& t : c.targets) {
    if (!seen.insert(t.base_dataset).second) continue;
    const auto path = ctx.layout().matrix(t.base_dataset);
    if (!fs::exists(path)) {
      ctx.log() << "its: report: no matrix for " << t.base_dataset << " (run `its matrix`)\n";
      continue;
    }
    in.matrices.push_back(metrics::matrix_from_json(metrics::load_json(path).at("matrix")));
  }
  for (const auto& v : c.votes) {
    for (const auto& b : v.benchmarks) {
      const auto path = ctx.layout().vote(v.label, b);
      if (!fs::exists(path)) {
        ctx.log() << "its: report: no vote result " << path.string() << "\n";
        continue;
      }
      in.votes.push_back(metrics::vote_result_from_json(metrics::load_json(path).at("vote")));
    }
  }
  if (c.comparisons) in.comparisons = metrics::comparison_from_json(metrics::load_json(*c.comparisons));
  const auto docs = metrics::render_report(in);
  write_file_atomic(ctx.layout().report_markdown(), docs.markdown);
  write_file_atomic(ctx.layout().report_json(), docs.json.dump(2) + "\n");
  ctx.log() << "its: report written to " << ctx.layout().report_markdown().string() << "\n";
}

}  // namespace its::pipeline
