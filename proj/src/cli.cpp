#include "explkit/cli.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "explkit/experiments.hpp"
#include "explkit/http_backend.hpp"
#include "explkit/metrics.hpp"
#include "explkit/mock_backend.hpp"
#include "explkit/pipelines.hpp"
#include "explkit/text.hpp"

namespace explkit {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string data_dir;
  std::string results_dir;
  std::string backend_url;
  uint64_t seed = 0;
  size_t jobs = 1;
  size_t batch_size = 64;
  std::string log_level = "warn";
  double mock_latency_ms = 0.0;
};

fs::path under(const std::string& dir, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || dir.empty()) return path;
  return fs::path(dir) / path;
}

Split guess_split(const fs::path& path) {
  const auto stem = text::to_lower(path.stem().string());
  if (stem.find("test") != std::string::npos) return Split::Test;
  if (stem.find("dev") != std::string::npos || stem.find("val") != std::string::npos) return Split::Dev;
  return Split::Train;
}

Dataset load_dataset(const Globals& g, const std::string& path, const std::string& split) {
  const auto full = under(g.data_dir, path);
  return load_canonical(full, split.empty() ? guess_split(full) : parse_split(split), full.stem().string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << content;
}

// A JSON object {input: output, ...} or JSON lines of {"input", "output"}.
std::map<std::string, std::string> load_table(const fs::path& path) {
  const auto content = read_file(path);
  std::map<std::string, std::string> table;
  auto add_record = [&](const json& j) {
    table[j.at("input").get<std::string>()] = j.at("output").get<std::string>();
  };
  try {
    const json whole = json::parse(content);
    if (!whole.is_object()) throw UsageError(path.string() + ": table must be an object or JSON lines");
    if (whole.size() == 2 && whole.contains("input") && whole.contains("output") && whole["input"].is_string()) {
      add_record(whole);
    } else {
      for (const auto& [k, v] : whole.items()) table[k] = v.get<std::string>();
    }
    return table;
  } catch (const json::parse_error&) {
    // fall through to JSON lines
  }
  std::istringstream in(content);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      add_record(json::parse(line));
    } catch (const json::exception& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return table;
}

std::unique_ptr<Backend> make_backend(const Globals& g, const std::string& spec, std::span<const Dataset* const> gold) {
  std::unique_ptr<MockBackend> mock;
  if (spec == "mock-echo") {
    mock = MockBackend::echo();
  } else if (spec == "mock-oracle") {
    mock = MockBackend::oracle(gold);
  } else if (spec.starts_with("mock-table=")) {
    mock = MockBackend::table(load_table(under(g.data_dir, spec.substr(11))));
  } else if (spec == "remote") {
    if (g.backend_url.empty()) throw UsageError("--backend remote needs --backend-url or EXPLKIT_BACKEND_URL");
    HttpBackendOptions o;
    o.base_url = g.backend_url;
    o.batch_size = g.batch_size;
    o.max_in_flight = std::max<size_t>(1, g.jobs);
    return std::make_unique<HttpBackend>(o);
  } else {
    throw UsageError("unknown backend '" + spec + "' (expected mock-echo, mock-oracle, mock-table=FILE or remote)");
  }
  const auto latency = std::chrono::nanoseconds(static_cast<long long>(g.mock_latency_ms * 1e6));
  mock->set_generate_latency(latency);
  mock->set_train_latency(latency);
  return mock;
}

BatchOptions batching(const Globals& g) {
  return {std::max<size_t>(1, g.batch_size), std::max<size_t>(1, g.jobs)};
}

Hyperparams parse_hyper(const std::vector<std::string>& kvs) {
  Hyperparams h = default_train_hyperparams();
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--hyper expects key=value, got '" + kv + "'");
    const std::string key(text::trim(std::string_view(kv).substr(0, eq)));
    const std::string value(text::trim(std::string_view(kv).substr(eq + 1)));
    try {
      h[key] = json::parse(value);
    } catch (const json::parse_error&) {
      h[key] = value;
    }
  }
  return h;
}

std::string fmt_stat(const std::optional<double>& mean, const std::optional<double>& sd) {
  if (!mean) return "undefined";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << *mean << " +- " << sd.value_or(0.0);
  return s.str();
}

json error_record(std::string_view kind, const std::string& message, const std::string& command) {
  json j{{"error", kind}, {"message", message}};
  if (!command.empty()) j["command"] = command;
  return j;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string format, split, in, out, name, mapping;
  bool strict = false;
};

int cmd_ingest(const Globals& g, const IngestArgs& a, std::ostream& out, std::ostream& err) {
  IngestOptions opts;
  opts.name = a.name;
  if (!a.mapping.empty()) opts.cose_mapping = CoseMapping::load(under(g.data_dir, a.mapping));
  const auto format = parse_source_format(a.format);
  if (format == SourceFormat::CoseCsv && !opts.cose_mapping) throw UsageError("cose_csv needs --mapping");
  auto result = ingest(under(g.data_dir, a.in), format, parse_split(a.split), opts);
  for (const auto& r : result.rejected) err << json{{"rejected_line", r.line}, {"message", r.message}}.dump() << '\n';
  if (a.strict && !result.rejected.empty())
    throw CorpusError(std::to_string(result.rejected.size()) + " row(s) rejected");
  save_canonical(result.dataset, under(g.data_dir, a.out));
  out << json{{"instances", result.dataset.size()},
              {"rejected", result.rejected.size()},
              {"out", under(g.data_dir, a.out).string()}}
             .dump()
      << '\n';
  return 0;
}

struct StatsArgs {
  std::string dataset, split;
  bool as_json = false;
};

int cmd_stats(const Globals& g, const StatsArgs& a, std::ostream& out) {
  const auto ds = load_dataset(g, a.dataset, a.split);
  const auto s = compute_stats(ds);
  if (a.as_json) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    out << json{{"dataset", ds.name},
                {"count", s.count},
                {"explanations", s.explanation_count},
                {"mean_input_tokens", opt(s.mean_input_tokens)},
                {"sd_input_tokens", opt(s.sd_input_tokens)},
                {"mean_expl_tokens", opt(s.mean_expl_tokens)},
                {"sd_expl_tokens", opt(s.sd_expl_tokens)}}
               .dump(2)
        << '\n';
    return 0;
  }
  out << std::left << std::setw(16) << "dataset" << ds.name << '\n'
      << std::setw(16) << "split" << to_string(ds.split) << '\n'
      << std::setw(16) << "instances" << s.count << '\n'
      << std::setw(16) << "explanations" << s.explanation_count << '\n'
      << std::setw(16) << "input tokens" << fmt_stat(s.mean_input_tokens, s.sd_input_tokens) << '\n'
      << std::setw(16) << "expl tokens" << fmt_stat(s.mean_expl_tokens, s.sd_expl_tokens) << '\n';
  return 0;
}

struct CompileArgs {
  std::string dataset, split, structure, out, backend, explainer_model;
  double budget = 100.0;
  std::optional<uint64_t> seed;
};

int cmd_compile(const Globals& g, const CompileArgs& a, std::ostream& out) {
  const auto ds = load_dataset(g, a.dataset, a.split);
  const auto spec = StructureSpec::of(parse_structure(a.structure));
  const auto view = sample_budget(ds, a.budget, a.seed.value_or(g.seed));

  std::unique_ptr<Backend> backend;
  std::optional<SemiLabelContext> semi;
  if (spec.kind == StructureKind::EtP_SL) {
    if (a.backend.empty()) throw UsageError("compiling etp_sl needs --backend to semi-label the training set");
    const Dataset* gold[] = {&ds};
    backend = make_backend(g, a.backend, gold);
    semi.emplace(SemiLabelContext{*backend, a.explainer_model, GenerationConfig{}, nullptr, batching(g)});
  }
  const auto compiled = compile_training_pairs(view, spec, semi ? &*semi : nullptr);

  const auto dir = under(g.results_dir, a.out);
  fs::create_directories(dir);
  json counts = json::object();
  for (const auto& sp : compiled.stages) {
    std::ostringstream s;
    write_pairs(sp.pairs, s);
    write_file(dir / (std::string(to_string(sp.stage)) + ".jsonl"), s.str());
    counts[std::string(to_string(sp.stage))] = sp.pairs.size();
  }
  out << json{{"structure", to_string(spec.kind)},
              {"budget", a.budget},
              {"seed", view.seed()},
              {"explained", view.explained_count()},
              {"label_only", view.label_only_count()},
              {"pairs", counts},
              {"total", compiled.total()}}
             .dump()
      << '\n';
  return 0;
}

struct TrainArgs {
  std::string pairs, stage, backend, model;
  std::vector<std::string> hyper;
  bool wait = false;
};

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  const auto stage = parse_stage(a.stage);
  std::ifstream in(under(g.results_dir, a.pairs));
  if (!in) throw UsageError("cannot open " + under(g.results_dir, a.pairs).string());
  std::vector<TrainingPair> pairs;
  for (auto& p : read_pairs(in)) {
    if (p.stage == stage) pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw PipelineError("no " + a.stage + " pairs in " + a.pairs);
  auto backend = make_backend(g, a.backend, {});
  const std::string model = a.model.empty() ? "explkit/" + std::string(to_string(stage)) : a.model;
  const auto job = backend->train(model, pairs, parse_hyper(a.hyper));
  json result{{"job_id", job.id}, {"model", job.model}, {"pairs", pairs.size()}};
  if (a.wait) {
    const auto status = wait_for_job(*backend, job);
    result["state"] = to_string(status.state);
    result["detail"] = status.detail;
  }
  out << result.dump() << '\n';
  return 0;
}

struct InferArgs {
  std::string dataset, split, structure, backend, out, model_prefix = "explkit";
  int max_new_tokens = 100;
};

int cmd_infer(const Globals& g, const InferArgs& a, std::ostream& out) {
  const auto ds = load_dataset(g, a.dataset, a.split);
  const auto spec = StructureSpec::of(parse_structure(a.structure));
  const Dataset* gold[] = {&ds};
  auto backend = make_backend(g, a.backend, gold);
  GenerationConfig decode;
  decode.max_new_tokens = a.max_new_tokens;
  Ledger ledger;
  const auto results =
      run_inference(ds, spec, *backend, default_stage_models(spec, a.model_prefix), decode, &ledger, batching(g));
  std::ostringstream s;
  write_generations(results, s);
  write_file(under(g.results_dir, a.out), s.str());
  size_t errors = 0, unclean = 0;
  for (const auto& r : results) {
    if (r.error) ++errors;
    if (!r.clean_parse) ++unclean;
  }
  out << json{{"instances", results.size()},
              {"errors", errors},
              {"parse_failures", unclean},
              {"out", under(g.results_dir, a.out).string()},
              {"ledger", ledger.to_json()}}
             .dump()
      << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string generations, dataset, split, refs = "first2";
  bool table = false;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a, std::ostream& out) {
  const auto ds = load_dataset(g, a.dataset, a.split);
  std::ifstream in(under(g.results_dir, a.generations));
  if (!in) throw UsageError("cannot open " + under(g.results_dir, a.generations).string());
  const auto results = read_generations(in);
  const auto pairs = make_eval_pairs(ds, results, parse_ref_policy(a.refs));
  const auto report = evaluate(pairs);
  if (a.table) {
    const std::pair<std::string, MetricReport> rows[] = {{ds.name, report}};
    out << format_report_table(rows);
  } else {
    out << report.to_json().dump(2) << '\n';
  }
  return 0;
}

struct ExplainArgs {
  std::string dataset, split, id, label, backend, model_prefix = "explkit";
};

int cmd_explain(const Globals& g, const ExplainArgs& a, std::ostream& out) {
  const auto ds = load_dataset(g, a.dataset, a.split);
  const Instance* inst = ds.find(a.id);
  if (!inst) throw UsageError("no instance '" + a.id + "' in " + a.dataset);
  const Dataset* gold[] = {&ds};
  auto backend = make_backend(g, a.backend, gold);
  const auto spec = StructureSpec::of(StructureKind::PtE);
  const auto models = default_stage_models(spec, a.model_prefix);
  const GenerationConfig decode;

  Dataset single{ds.name, ds.split, {*inst}};
  const auto predicted = run_inference(single, spec, *backend, models, decode).front();
  if (predicted.error) throw BackendError(BackendError::Kind::Server, *predicted.error);
  const auto& explainer = models.at(StageKind::PtEExplainer);

  json j{{"id", inst->id},
         {"true", {{"label", inst->gold_label},
                   {"explanation", generate_conditioned(*inst, inst->gold_label, *backend, explainer, decode)}}},
         {"predicted", {{"label", predicted.predicted_label}, {"explanation", predicted.generated_explanation}}}};
  if (!a.label.empty()) {
    j["requested"] = {{"label", a.label},
                      {"explanation", generate_conditioned(*inst, a.label, *backend, explainer, decode)}};
  }
  out << j.dump(2) << '\n';
  return 0;
}

struct InformednessArgs {
  std::string train, dataset, split, backend, model_prefix = "r2l";
  std::vector<std::string> sources;
  bool as_json = false;
};

// JSON lines of generation records or {id, explanation}.
void read_source(const fs::path& path, ExplanationMap& into) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open source " + path.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      if (j.contains("explanation")) into[id] = j["explanation"].get<std::string>();
      else into[id] = j.at("generated_explanation").get<std::string>();
    } catch (const json::exception& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

int cmd_informedness(const Globals& g, const InformednessArgs& a, std::ostream& out) {
  const auto train = load_dataset(g, a.train, "train");
  const auto eval = load_dataset(g, a.dataset, a.split);
  const Dataset* both[] = {&train, &eval};

  std::vector<ExplanationSource> sources{{"gold", gold_explanation_source(both)}};
  for (const auto& spec : a.sources) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--source expects name=file, got '" + spec + "'");
    const std::string name = spec.substr(0, eq);
    if (name == "gold") throw UsageError("source name 'gold' is reserved for the gold explanations");
    auto it = std::find_if(sources.begin(), sources.end(), [&](const auto& s) { return s.name == name; });
    if (it == sources.end()) {
      sources.push_back({name, {}});
      it = std::prev(sources.end());
    }
    read_source(under(g.results_dir, spec.substr(eq + 1)), it->explanations);
  }

  auto backend = make_backend(g, a.backend, both);
  InformednessOptions opts;
  opts.model_prefix = a.model_prefix;
  opts.batching = batching(g);
  const auto rows = label_informedness(train, eval, sources, *backend, opts);
  if (a.as_json) {
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"source", r.source}, {"accuracy", r.accuracy}, {"recover_ratio", r.recover_ratio},
                     {"train_pairs", r.train_pairs}});
    out << arr.dump(2) << '\n';
  } else {
    out << format_informedness(rows);
  }
  return 0;
}

struct GridArgs {
  std::string plan, backend, out;
  size_t cell_jobs = 1;
};

int cmd_grid(const Globals& g, const GridArgs& a, std::ostream& out) {
  const fs::path plan_path = under(g.data_dir, a.plan);
  auto plan = ExperimentPlan::load(fs::exists(plan_path) ? plan_path : fs::path(a.plan), g.seed);
  const fs::path base = g.data_dir.empty() ? fs::path(a.plan).parent_path() : fs::path(g.data_dir);
  auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base / p; };

  const auto train = load_canonical(resolve(plan.train), Split::Train, plan.dataset);
  const auto dev = load_canonical(resolve(plan.dev), Split::Dev, plan.dataset);
  std::optional<Dataset> test;
  if (plan.test && evaluates_test(plan.dataset)) test = load_canonical(resolve(*plan.test), Split::Test, plan.dataset);

  std::vector<const Dataset*> gold{&train, &dev};
  if (test) gold.push_back(&*test);
  auto backend = make_backend(g, a.backend, gold);

  fs::path results;
  if (!a.out.empty()) results = under(g.results_dir, a.out);
  else if (!g.results_dir.empty()) results = fs::path(g.results_dir) / plan.dataset;
  else throw UsageError("grid needs --out or --results-dir");

  GridOptions opts;
  opts.results_dir = results;
  opts.cell_jobs = std::max<size_t>(1, a.cell_jobs);
  opts.batching = batching(g);
  const auto grid = run_grid(plan, {&train, &dev, test ? &*test : nullptr}, *backend, opts);
  const auto eff = efficiency_report(grid.records);
  write_file(results / "efficiency.txt", eff.to_string());

  size_t failed = 0;
  for (const auto& r : grid.records) failed += r.ok() ? 0 : 1;
  out << summary_text(grid.summaries) << '\n' << eff.to_string();
  out << json{{"results", results.string()}, {"cells", grid.records.size()}, {"failed", failed}}.dump() << '\n';
  return 0;
}

std::string_view error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const CorpusError*>(&e)) return "corpus";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const PipelineError*>(&e)) return "pipeline";
  if (dynamic_cast<const BackendError*>(&e)) return "backend";
  if (dynamic_cast<const MetricError*>(&e)) return "metric";
  if (dynamic_cast<const ExperimentError*>(&e)) return "experiment";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "internal";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Globals g;
  CLI::App app{"Train, run and evaluate predict/explain pipelines over a text-to-text backend.", "explkit"};
  app.require_subcommand(1);
  app.add_option("--data-dir", g.data_dir, "Base directory for dataset paths")->envname("EXPLKIT_DATA_DIR");
  app.add_option("--results-dir", g.results_dir, "Base directory for outputs")->envname("EXPLKIT_RESULTS_DIR");
  app.add_option("--backend-url", g.backend_url, "Model server URL for --backend remote")
      ->envname("EXPLKIT_BACKEND_URL");
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Concurrent backend calls")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--batch-size", g.batch_size, "Inputs per generate call")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
      ->capture_default_str()
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.add_option("--mock-latency-ms", g.mock_latency_ms, "Simulated latency per generated input and train call")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  app.set_config("--config", "", "key = value file with defaults for the options above");

  const std::string backend_help = "mock-echo, mock-oracle, mock-table=FILE or remote";
  const std::vector<std::string> structures{"joint", "etp", "pte", "etp_sl"};
  const std::vector<std::string> splits{"train", "dev", "test"};

  IngestArgs ingest_a;
  auto* ingest_c = app.add_subcommand("ingest", "Convert a source file to the canonical JSON-lines format");
  ingest_c->add_option("--format", ingest_a.format, "esnli_csv, cose_csv or canonical_jsonl")
      ->required()
      ->check(CLI::IsMember({"esnli_csv", "cose_csv", "canonical_jsonl"}));
  ingest_c->add_option("--split", ingest_a.split, "train, dev or test")->required()->check(CLI::IsMember(splits));
  ingest_c->add_option("--in", ingest_a.in, "Source file")->required();
  ingest_c->add_option("--out", ingest_a.out, "Canonical output file")->required();
  ingest_c->add_option("--name", ingest_a.name, "Dataset name (defaults to the input file stem)");
  ingest_c->add_option("--mapping", ingest_a.mapping, "Column mapping file for cose_csv");
  ingest_c->add_flag("--strict", ingest_a.strict, "Fail when any row is rejected");

  StatsArgs stats_a;
  auto* stats_c = app.add_subcommand("stats", "Token statistics of a canonical dataset");
  stats_c->add_option("--dataset", stats_a.dataset, "Canonical dataset file")->required();
  stats_c->add_option("--split", stats_a.split, "Split (guessed from the file name by default)")
      ->check(CLI::IsMember(splits));
  stats_c->add_flag("--json", stats_a.as_json, "Print JSON");

  CompileArgs compile_a;
  auto* compile_c = app.add_subcommand("compile", "Compile per-stage training pairs for a structure and budget");
  compile_c->add_option("--dataset", compile_a.dataset, "Canonical training set")->required();
  compile_c->add_option("--split", compile_a.split, "Split (guessed from the file name by default)")
      ->check(CLI::IsMember(splits));
  compile_c->add_option("--structure", compile_a.structure, "joint, etp, pte or etp_sl")
      ->required()
      ->check(CLI::IsMember(structures));
  compile_c->add_option("--budget", compile_a.budget, "Percent of explanations exposed, in (0, 100]")
      ->capture_default_str();
  compile_c->add_option("--seed", compile_a.seed, "Sampling seed (defaults to the global --seed)");
  compile_c->add_option("--out", compile_a.out, "Output directory, one file per stage")->required();
  compile_c->add_option("--backend", compile_a.backend, backend_help + " (etp_sl only)");
  compile_c->add_option("--explainer-model", compile_a.explainer_model, "Trained explainer used to semi-label")
      ->default_str("explkit/etp_explainer");
  compile_a.explainer_model = "explkit/etp_explainer";

  TrainArgs train_a;
  auto* train_c = app.add_subcommand("train", "Submit a training job for one stage's pairs");
  train_c->add_option("--pairs", train_a.pairs, "Pairs file written by compile")->required();
  train_c->add_option("--stage", train_a.stage, "Stage to train")->required();
  train_c->add_option("--backend", train_a.backend, backend_help)->required();
  train_c->add_option("--model", train_a.model, "Name of the trained state (default explkit/<stage>)");
  train_c->add_option("--hyper", train_a.hyper, "Hyperparameter override key=value (repeatable)");
  train_c->add_flag("--wait", train_a.wait, "Wait for the job to finish");

  InferArgs infer_a;
  auto* infer_c = app.add_subcommand("infer", "Run a structure's stages over a dataset");
  infer_c->add_option("--dataset", infer_a.dataset, "Canonical dataset file")->required();
  infer_c->add_option("--split", infer_a.split, "Split (guessed from the file name by default)")
      ->check(CLI::IsMember(splits));
  infer_c->add_option("--structure", infer_a.structure, "joint, etp, pte or etp_sl")
      ->required()
      ->check(CLI::IsMember(structures));
  infer_c->add_option("--backend", infer_a.backend, backend_help)->required();
  infer_c->add_option("--out", infer_a.out, "Generations file")->required();
  infer_c->add_option("--model-prefix", infer_a.model_prefix, "Models are <prefix>/<stage>")->capture_default_str();
  infer_c->add_option("--max-new-tokens", infer_a.max_new_tokens, "Decoding length limit")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  EvaluateArgs eval_a;
  auto* eval_c = app.add_subcommand("evaluate", "Score a generations file against a dataset");
  eval_c->add_option("--generations", eval_a.generations, "Generations file written by infer")->required();
  eval_c->add_option("--dataset", eval_a.dataset, "Canonical dataset with gold labels and explanations")->required();
  eval_c->add_option("--split", eval_a.split, "Split (guessed from the file name by default)")
      ->check(CLI::IsMember(splits));
  eval_c->add_option("--refs", eval_a.refs, "first2 or all gold explanations as references")
      ->capture_default_str()
      ->check(CLI::IsMember({"first2", "all"}));
  eval_c->add_flag("--table", eval_a.table, "Print a table instead of JSON");

  ExplainArgs explain_a;
  auto* explain_c = app.add_subcommand("explain", "Label-conditioned explanations from a trained PtE explainer");
  explain_c->add_option("--dataset", explain_a.dataset, "Canonical dataset holding the instance")->required();
  explain_c->add_option("--split", explain_a.split, "Split (guessed from the file name by default)")
      ->check(CLI::IsMember(splits));
  explain_c->add_option("--id", explain_a.id, "Instance id")->required();
  explain_c->add_option("--label", explain_a.label, "Extra label to condition on");
  explain_c->add_option("--backend", explain_a.backend, backend_help)->required();
  explain_c->add_option("--model-prefix", explain_a.model_prefix, "Models are <prefix>/<stage>")
      ->capture_default_str();

  InformednessArgs inf_a;
  auto* inf_c = app.add_subcommand("informedness", "Explanation-only label prediction per explanation source");
  inf_c->add_option("--train", inf_a.train, "Canonical training set")->required();
  inf_c->add_option("--dataset", inf_a.dataset, "Canonical evaluation set")->required();
  inf_c->add_option("--split", inf_a.split, "Evaluation split (guessed from the file name by default)")
      ->check(CLI::IsMember(splits));
  inf_c->add_option("--source", inf_a.sources, "name=FILE of generations or {id, explanation} lines (repeatable)");
  inf_c->add_option("--backend", inf_a.backend, backend_help)->required();
  inf_c->add_option("--model-prefix", inf_a.model_prefix, "Models are <prefix>/<source>/r2l")->capture_default_str();
  inf_c->add_flag("--json", inf_a.as_json, "Print JSON");

  GridArgs grid_a;
  auto* grid_c = app.add_subcommand("grid", "Run a structure x budget x repetition experiment grid");
  grid_c->add_option("--plan", grid_a.plan, "Plan JSON file")->required();
  grid_c->add_option("--backend", grid_a.backend, backend_help)->required();
  grid_c->add_option("--out", grid_a.out, "Results directory (default <results-dir>/<dataset>)");
  grid_c->add_option("--cell-jobs", grid_a.cell_jobs, "Cells run concurrently")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::string command;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    for (const auto* sub : app.get_subcommands()) command = sub->get_name();
    err << error_record("usage", e.what(), command).dump() << '\n';
    return 2;
  }
  for (const auto* sub : app.get_subcommands()) command = sub->get_name();

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("explkit", sink);
  logger->set_level(spdlog::level::from_str(g.log_level));
  logger->set_pattern("[%l] %v");
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);

  int code = 1;
  try {
    if (*ingest_c) code = cmd_ingest(g, ingest_a, out, err);
    else if (*stats_c) code = cmd_stats(g, stats_a, out);
    else if (*compile_c) code = cmd_compile(g, compile_a, out);
    else if (*train_c) code = cmd_train(g, train_a, out);
    else if (*infer_c) code = cmd_infer(g, infer_a, out);
    else if (*eval_c) code = cmd_evaluate(g, eval_a, out);
    else if (*explain_c) code = cmd_explain(g, explain_a, out);
    else if (*inf_c) code = cmd_informedness(g, inf_a, out);
    else if (*grid_c) code = cmd_grid(g, grid_a, out);
  } catch (const std::exception& e) {
    const auto kind = error_kind(e);
    err << error_record(kind, e.what(), command).dump() << '\n';
    code = kind == "usage" ? 2 : 1;
  }
  out.flush();
  spdlog::set_default_logger(previous);
  return code;
}

}  // namespace explkit
