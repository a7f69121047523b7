#include "explkit/experiments.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "explkit/text.hpp"

namespace explkit {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(RefPolicy policy) {
  return policy == RefPolicy::First2 ? "first2" : "all";
}

RefPolicy parse_ref_policy(std::string_view s) {
  if (text::iequals(s, "first2")) return RefPolicy::First2;
  if (text::iequals(s, "all")) return RefPolicy::All;
  throw ExperimentError("unknown reference policy '" + std::string(s) + "' (expected first2 or all)");
}

std::vector<double> default_budgets(std::string_view dataset) {
  if (text::starts_with_icase(dataset, "cose")) return {30.0, 100.0};
  return {10.0, 30.0, 100.0};
}

bool evaluates_test(std::string_view dataset) {
  return !text::starts_with_icase(dataset, "cose");
}

namespace {

std::string format_budget(double budget) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", budget);
  return buf;
}

std::string fixed(double v, int precision) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

uint64_t ExperimentPlan::seed_for(size_t repetition) const {
  if (seeds.empty()) throw ExperimentError("plan has no seeds");
  if (repetition < seeds.size()) return seeds[repetition];
  return seeds.front() + repetition;
}

void ExperimentPlan::validate() const {
  if (dataset.empty()) throw ExperimentError("plan needs a dataset name");
  if (train.empty()) throw ExperimentError("plan needs a train file");
  if (dev.empty()) throw ExperimentError("plan needs a dev file");
  if (repetitions < 1) throw ExperimentError("repetitions must be at least 1");
  if (structures.empty()) throw ExperimentError("plan lists no structures");
  if (budgets.empty()) throw ExperimentError("plan lists no budgets");
  if (seeds.empty()) throw ExperimentError("plan lists no seeds");
  for (double b : budgets) {
    if (!(b > 0.0 && b <= 100.0)) throw ExperimentError("budget " + format_budget(b) + " is outside (0, 100]");
  }
  decode.validate();
}

json ExperimentPlan::to_json() const {
  json j;
  j["dataset"] = dataset;
  j["train"] = train.string();
  j["dev"] = dev.string();
  if (test) j["test"] = test->string();
  j["budgets"] = budgets;
  json s = json::array();
  for (auto k : structures) s.push_back(std::string(explkit::to_string(k)));
  j["structures"] = s;
  j["seeds"] = seeds;
  j["repetitions"] = repetitions;
  j["decode"] = {{"max_new_tokens", decode.max_new_tokens},
                 {"decode", std::string(explkit::to_string(decode.decode))},
                 {"stop_on_eos", decode.stop_on_eos}};
  j["refs"] = std::string(explkit::to_string(refs));
  j["hyper"] = hyper;
  return j;
}

ExperimentPlan ExperimentPlan::from_json(const json& j, uint64_t default_seed) {
  if (!j.is_object()) throw ExperimentError("plan must be a JSON object");
  static const std::set<std::string> known{"dataset", "train",       "dev",    "test", "budgets", "structures",
                                           "seeds",   "repetitions", "decode", "refs", "hyper"};
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ExperimentError("unknown plan key '" + k + "'");
  }
  ExperimentPlan plan;
  try {
    plan.dataset = j.at("dataset").get<std::string>();
    plan.train = j.at("train").get<std::string>();
    plan.dev = j.at("dev").get<std::string>();
    if (j.contains("test") && !j["test"].is_null()) plan.test = j["test"].get<std::string>();
    plan.budgets = j.contains("budgets") ? j["budgets"].get<std::vector<double>>() : default_budgets(plan.dataset);
    if (j.contains("structures")) {
      plan.structures.clear();
      for (const auto& s : j["structures"]) plan.structures.push_back(parse_structure(s.get<std::string>()));
    }
    plan.seeds = j.contains("seeds") ? j["seeds"].get<std::vector<uint64_t>>() : std::vector<uint64_t>{default_seed};
    if (plan.seeds.empty()) plan.seeds.push_back(default_seed);
    if (j.contains("repetitions")) {
      const auto reps = j["repetitions"].get<long long>();
      if (reps < 1) throw ExperimentError("repetitions must be at least 1");
      plan.repetitions = static_cast<size_t>(reps);
    }
    if (j.contains("decode")) {
      const auto& d = j["decode"];
      plan.decode.max_new_tokens = d.value("max_new_tokens", plan.decode.max_new_tokens);
      plan.decode.stop_on_eos = d.value("stop_on_eos", plan.decode.stop_on_eos);
      if (d.value("decode", std::string("greedy")) != "greedy")
        throw ExperimentError("only greedy decoding is supported");
    }
    if (j.contains("refs")) plan.refs = parse_ref_policy(j["refs"].get<std::string>());
    if (j.contains("hyper")) {
      if (!j["hyper"].is_object()) throw ExperimentError("hyper must be an object");
      for (const auto& [k, v] : j["hyper"].items()) plan.hyper[k] = v;
    }
  } catch (const json::exception& e) {
    throw ExperimentError(std::string("malformed plan: ") + e.what());
  } catch (const PipelineError& e) {
    throw ExperimentError(e.what());
  }
  plan.validate();
  return plan;
}

ExperimentPlan ExperimentPlan::load(const fs::path& path, uint64_t default_seed) {
  std::ifstream in(path);
  if (!in) throw ExperimentError("cannot open plan " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ExperimentError(path.string() + ": " + e.what());
  }
  return from_json(j, default_seed);
}

std::vector<Cell> enumerate_cells(const ExperimentPlan& plan) {
  std::vector<Cell> cells;
  for (auto structure : plan.structures) {
    for (double budget : plan.budgets) {
      for (size_t r = 0; r < plan.repetitions; ++r) {
        Cell c;
        c.structure = structure;
        c.budget = budget;
        c.repetition = r;
        c.seed = plan.seed_for(r);
        c.id = std::string(to_string(structure)) + "-b" + format_budget(budget) + "-r" + std::to_string(r);
        cells.push_back(std::move(c));
      }
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

const MetricReport* RunRecord::report(Split split) const {
  for (const auto& r : reports) {
    if (r.split == split) return &r.report;
  }
  return nullptr;
}

json RunRecord::to_json() const {
  json reps = json::object();
  for (const auto& r : reports) reps[std::string(explkit::to_string(r.split))] = r.report.to_json();
  json j{{"cell",
          {{"id", cell.id},
           {"structure", std::string(explkit::to_string(cell.structure))},
           {"budget", cell.budget},
           {"repetition", cell.repetition},
           {"seed", cell.seed}}},
         {"explained", explained},
         {"label_only", label_only},
         {"reports", reps},
         {"artifacts", artifacts}};
  if (error) j["error"] = *error;
  return j;
}

std::vector<EvalPair> make_eval_pairs(const Dataset& ds, std::span<const InferenceResult> results, RefPolicy refs) {
  if (results.size() != ds.size())
    throw ExperimentError("got " + std::to_string(results.size()) + " generations for " + std::to_string(ds.size()) +
                          " instances");
  std::vector<EvalPair> pairs;
  pairs.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto& inst = ds.instances[i];
    const auto& r = results[i];
    if (r.id != inst.id) throw ExperimentError("generation " + std::to_string(i) + " is for '" + r.id + "', expected '" + inst.id + "'");
    EvalPair p;
    p.id = inst.id;
    p.candidate = r.generated_explanation;
    const size_t n_refs = refs == RefPolicy::First2 ? std::min<size_t>(2, inst.gold_explanations.size())
                                                    : inst.gold_explanations.size();
    p.references.assign(inst.gold_explanations.begin(), inst.gold_explanations.begin() + static_cast<long>(n_refs));
    p.gold_label = inst.gold_label;
    p.predicted_label = r.predicted_label;
    p.parse_failure = !r.clean_parse || r.error.has_value();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

namespace {

std::vector<std::pair<Split, const Dataset*>> eval_splits(const ExperimentPlan& plan, const GridData& data) {
  std::vector<std::pair<Split, const Dataset*>> out{{Split::Dev, data.dev}};
  if (data.test && evaluates_test(plan.dataset)) out.emplace_back(Split::Test, data.test);
  return out;
}

}  // namespace

RunRecord run_cell(const ExperimentPlan& plan, const Cell& cell, const GridData& data, Backend& backend,
                   const GridOptions& options, TrainedStructure* trained_out,
                   std::map<Split, std::vector<InferenceResult>>* generations_out) {
  RunRecord rec;
  rec.cell = cell;
  try {
    if (!data.train || !data.dev) throw ExperimentError("grid needs train and dev datasets");
    const auto view = sample_budget(*data.train, cell.budget, cell.seed);
    rec.explained = view.explained_count();
    rec.label_only = view.label_only_count();

    const auto spec = StructureSpec::of(cell.structure);
    TrainOptions topt;
    topt.model_prefix = (options.model_prefix.empty() ? plan.dataset : options.model_prefix) + "/" + cell.id;
    topt.hyper = plan.hyper;
    topt.decode = plan.decode;
    topt.wait = options.wait;
    topt.batching = options.batching;
    auto trained = train_structure(view, spec, backend, topt, rec.ledger);

    for (const auto& [split, ds] : eval_splits(plan, data)) {
      auto results = run_inference(*ds, spec, backend, trained.models, plan.decode, &rec.ledger, options.batching);
      const auto pairs = make_eval_pairs(*ds, results, plan.refs);
      rec.reports.push_back({split, evaluate(pairs)});
      if (generations_out) (*generations_out)[split] = std::move(results);
    }
    if (trained_out) *trained_out = std::move(trained);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExperimentError("cannot write " + path.string());
  out << content;
}

std::string dump(const json& j) {
  return j.dump(2) + "\n";
}

void write_cell_artifacts(const fs::path& root, RunRecord& rec, const TrainedStructure& trained,
                          const std::map<Split, std::vector<InferenceResult>>& generations) {
  const fs::path rel = fs::path("cells") / rec.cell.id;
  for (const auto& sp : trained.pairs.stages) {
    const auto file = rel / "pairs" / (std::string(to_string(sp.stage)) + ".jsonl");
    std::ostringstream out;
    write_pairs(sp.pairs, out);
    write_file(root / file, out.str());
    rec.artifacts["pairs/" + std::string(to_string(sp.stage))] = file.generic_string();
  }
  for (const auto& [split, results] : generations) {
    const auto file = rel / "generations" / (std::string(to_string(split)) + ".jsonl");
    std::ostringstream out;
    write_generations(results, out);
    write_file(root / file, out.str());
    rec.artifacts["generations/" + std::string(to_string(split))] = file.generic_string();
  }
  rec.artifacts["report"] = (rel / "report.json").generic_string();
  rec.artifacts["ledger"] = (rel / "ledger.json").generic_string();
  write_file(root / rel / "ledger.json", dump(rec.ledger.to_json()));
  write_file(root / rel / "report.json", dump(rec.to_json()));
}

}  // namespace

GridResult run_grid(const ExperimentPlan& plan, const GridData& data, Backend& backend, const GridOptions& options) {
  plan.validate();
  if (!data.train || !data.dev) throw ExperimentError("grid needs train and dev datasets");
  if (plan.test && !data.test) throw ExperimentError("plan names a test file but no test dataset was loaded");
  if (data.test && !evaluates_test(plan.dataset))
    spdlog::warn("dataset {} has no test split; evaluating dev only", plan.dataset);

  const auto cells = enumerate_cells(plan);
  if (options.results_dir) {
    fs::create_directories(*options.results_dir);
    write_file(*options.results_dir / "plan.json", dump(plan.to_json()));
  }

  GridResult result;
  result.records.resize(cells.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      const auto& cell = cells[i];
      spdlog::info("cell {} ({}/{})", cell.id, i + 1, cells.size());
      TrainedStructure trained;
      std::map<Split, std::vector<InferenceResult>> generations;
      auto rec = run_cell(plan, cell, data, backend, options, &trained, &generations);
      if (options.results_dir) {
        try {
          write_cell_artifacts(*options.results_dir, rec, trained, generations);
        } catch (const std::exception& e) {
          if (!rec.error) rec.error = e.what();
        }
      }
      if (rec.error) spdlog::error("cell {} failed: {}", cell.id, *rec.error);
      result.records[i] = std::move(rec);
    }
  };
  const size_t n_threads = std::min(std::max<size_t>(1, options.cell_jobs), std::max<size_t>(1, cells.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }

  result.summaries = summarize(plan, result.records);
  if (options.results_dir) {
    std::ostringstream flat;
    for (const auto& rec : result.records) {
      for (const auto& r : rec.reports) {
        flat << flat_record(r.report, {{"cell", rec.cell.id},
                                       {"structure", std::string(to_string(rec.cell.structure))},
                                       {"budget", rec.cell.budget},
                                       {"repetition", rec.cell.repetition},
                                       {"seed", rec.cell.seed},
                                       {"split", std::string(to_string(r.split))}})
             << '\n';
      }
    }
    write_file(*options.results_dir / "results.jsonl", flat.str());
    write_file(*options.results_dir / "summary.tsv", summary_tsv(result.summaries));
    write_file(*options.results_dir / "summary.txt", summary_text(result.summaries));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

namespace {

std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

std::vector<CellSummary> summarize(const ExperimentPlan& plan, std::span<const RunRecord> records) {
  std::vector<Split> splits{Split::Dev};
  if (plan.test && evaluates_test(plan.dataset)) splits.push_back(Split::Test);

  std::vector<CellSummary> out;
  for (auto structure : plan.structures) {
    for (double budget : plan.budgets) {
      for (Split split : splits) {
        CellSummary s;
        s.structure = structure;
        s.budget = budget;
        s.split = split;
        std::vector<double> bleu, rouge, met;
        for (const auto& rec : records) {
          if (rec.cell.structure != structure || rec.cell.budget != budget) continue;
          const MetricReport* r = rec.ok() ? rec.report(split) : nullptr;
          if (!r) {
            ++s.failed;
            continue;
          }
          ++s.completed;
          s.accuracies.push_back(r->accuracy);
          if (r->bleu) bleu.push_back(*r->bleu);
          if (r->rouge_l) rouge.push_back(*r->rouge_l);
          if (r->meteor) met.push_back(*r->meteor);
          s.mean.n_evaluated += r->n_evaluated;
          s.mean.n_parse_failures += r->n_parse_failures;
          s.mean.n_with_references += r->n_with_references;
        }
        s.mean.accuracy = mean_of(s.accuracies).value_or(0.0);
        s.mean.bleu = mean_of(bleu);
        s.mean.rouge_l = mean_of(rouge);
        s.mean.meteor = mean_of(met);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

std::string summary_tsv(std::span<const CellSummary> summaries) {
  std::ostringstream out;
  out << "structure\tbudget\tsplit\tcompleted\tfailed\taccuracy\tbleu\tmeteor\trouge_l\tn_evaluated\tn_parse_failures\n";
  auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 6) : std::string("NA"); };
  for (const auto& s : summaries) {
    out << to_string(s.structure) << '\t' << format_budget(s.budget) << '\t' << to_string(s.split) << '\t'
        << s.completed << '\t' << s.failed << '\t'
        << (s.completed ? fixed(s.mean.accuracy, 6) : std::string("NA")) << '\t' << opt(s.mean.bleu) << '\t'
        << opt(s.mean.meteor) << '\t' << opt(s.mean.rouge_l) << '\t' << s.mean.n_evaluated << '\t'
        << s.mean.n_parse_failures << '\n';
  }
  return out.str();
}

std::string summary_text(std::span<const CellSummary> summaries) {
  std::vector<std::pair<std::string, MetricReport>> rows;
  std::ostringstream failures;
  for (const auto& s : summaries) {
    const std::string name =
        std::string(to_string(s.structure)) + " " + format_budget(s.budget) + "% " + std::string(to_string(s.split));
    if (s.completed) rows.emplace_back(name, s.mean);
    if (s.failed)
      failures << name << ": " << s.failed << " of " << (s.completed + s.failed) << " repetition(s) failed\n";
  }
  std::string out = format_report_table(rows);
  if (!failures.str().empty()) out += "\n" + failures.str();
  return out;
}

// ---------------------------------------------------------------------------
// Label informedness
// ---------------------------------------------------------------------------

ExplanationMap gold_explanation_source(std::span<const Dataset* const> datasets) {
  ExplanationMap out;
  for (const Dataset* ds : datasets) {
    for (const auto& inst : ds->instances) {
      if (inst.has_explanation()) out.emplace(inst.id, inst.gold_explanations.front());
    }
  }
  return out;
}

ExplanationMap explanations_from_results(std::span<const InferenceResult> results) {
  ExplanationMap out;
  for (const auto& r : results) out[r.id] = r.generated_explanation;
  return out;
}

std::vector<InformednessRow> label_informedness(const Dataset& train, const Dataset& eval,
                                                std::span<const ExplanationSource> sources, Backend& backend,
                                                const InformednessOptions& options, Ledger* ledger) {
  std::vector<const ExplanationSource*> ordered;
  for (const auto& s : sources) {
    if (s.name == options.gold_source) ordered.insert(ordered.begin(), &s);
    else ordered.push_back(&s);
  }
  if (ordered.empty() || ordered.front()->name != options.gold_source)
    throw ExperimentError("label informedness needs the gold source '" + options.gold_source + "'");
  if (eval.instances.empty()) throw ExperimentError("label informedness needs evaluation instances");

  std::vector<InformednessRow> rows;
  for (const ExplanationSource* src : ordered) {
    std::vector<std::string> missing;
    for (const auto& inst : eval.instances) {
      if (!src->explanations.count(inst.id)) missing.push_back(inst.id);
    }
    if (!missing.empty())
      throw ExperimentError("source '" + src->name + "' has no explanation for " + std::to_string(missing.size()) +
                            " evaluation id(s), first '" + missing.front() + "'");

    std::vector<TrainingPair> pairs;
    for (const auto& inst : train.instances) {
      auto it = src->explanations.find(inst.id);
      if (it == src->explanations.end()) continue;
      pairs.push_back({StageKind::RtoL, render_input(inst, StageKind::RtoL, Injected::with_explanation(it->second)),
                       inst.gold_label, inst.id, Provenance::Gold});
    }
    if (pairs.empty()) throw ExperimentError("source '" + src->name + "' covers no training instance");

    const std::string model = options.model_prefix + "/" + src->name + "/" + std::string(to_string(StageKind::RtoL));
    const auto job = backend.train(model, pairs, options.hyper);
    const auto status = wait_for_job(backend, job, options.wait);
    if (ledger) ledger->record(std::string(to_string(StageKind::RtoL)) + "/" + src->name, 1, status.elapsed, pairs.size());

    std::vector<std::string> inputs;
    for (const auto& inst : eval.instances) {
      inputs.push_back(render_input(inst, StageKind::RtoL, Injected::with_explanation(src->explanations.at(inst.id))));
    }
    std::chrono::nanoseconds elapsed{0};
    const auto generated = generate_all(backend, model, inputs, options.decode, options.batching, elapsed);
    if (ledger)
      ledger->record(std::string(kInferPrefix) + std::string(to_string(StageKind::RtoL)) + "/" + src->name,
                     inputs.size(), elapsed, 0);

    std::vector<EvalPair> eval_pairs;
    for (size_t i = 0; i < eval.size(); ++i) {
      const auto& inst = eval.instances[i];
      EvalPair p;
      p.id = inst.id;
      p.gold_label = inst.gold_label;
      if (!generated[i].error) {
        const auto parsed = parse_output(generated[i].output, StageKind::RtoL, label_vocabulary(inst));
        p.predicted_label = parsed.label.value_or(std::string());
        p.parse_failure = !parsed.clean_parse;
      } else {
        p.parse_failure = true;
      }
      eval_pairs.push_back(std::move(p));
    }
    rows.push_back({src->name, accuracy(eval_pairs), 0.0, pairs.size()});
  }

  const double gold_acc = rows.front().accuracy;
  if (!(gold_acc > 0.0)) throw ExperimentError("gold explanations give zero accuracy; recover ratios are undefined");
  for (auto& row : rows) row.recover_ratio = recover_ratio(row.accuracy, gold_acc);
  return rows;
}

std::string format_informedness(std::span<const InformednessRow> rows) {
  size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.source.size() + 4);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "model" << std::right << std::setw(18) << "accuracy"
      << '\n';
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string cell = fixed(r.accuracy * 100.0, 2);
    if (i > 0) cell += " (" + fixed(r.recover_ratio, 2) + "%)";
    out << std::left << std::setw(static_cast<int>(width)) << (r.source + "->L") << std::right << std::setw(18) << cell
        << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Efficiency
// ---------------------------------------------------------------------------

namespace {

bool is_training_stage(std::string_view stage) {
  for (StageKind s : kAllStages) {
    if (to_string(s) == stage) return true;
  }
  return false;
}

std::string millis(std::chrono::nanoseconds ns) {
  return fixed(static_cast<double>(ns.count()) / 1e6, 3);
}

}  // namespace

EfficiencyReport efficiency_report(std::span<const RunRecord> records) {
  EfficiencyReport report;
  std::vector<std::pair<StructureKind, double>> keys;
  for (const auto& rec : records) {
    if (!rec.ok()) continue;
    const auto key = std::make_pair(rec.cell.structure, rec.cell.budget);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [structure, budget] : keys) {
    EfficiencyRow row;
    row.structure = structure;
    row.budget = budget;
    for (const auto& rec : records) {
      if (!rec.ok() || rec.cell.structure != structure || rec.cell.budget != budget) continue;
      ++row.runs;
      for (const auto& e : rec.ledger.entries()) {
        if (e.stage == kSemiLabelingStage) row.semi_label_time += e.wall_time;
        else if (e.stage.starts_with(kInferPrefix)) row.inference_time += e.wall_time;
        else if (is_training_stage(e.stage)) row.train_time += e.wall_time;
      }
      row.total_time += rec.ledger.total_time();
      row.pairs_trained += rec.ledger.total_pairs();
    }
    const auto runs = static_cast<long long>(row.runs);
    row.train_time /= runs;
    row.semi_label_time /= runs;
    row.inference_time /= runs;
    row.total_time /= runs;
    row.pairs_trained /= row.runs;
    report.rows.push_back(row);
  }

  for (const auto& sl : records) {
    if (!sl.ok() || sl.cell.structure != StructureKind::EtP_SL) continue;
    for (const auto& etp : records) {
      if (!etp.ok() || etp.cell.structure != StructureKind::EtP || etp.cell.budget != sl.cell.budget ||
          etp.cell.repetition != sl.cell.repetition)
        continue;
      ++report.identity_checks;
      const auto semi = sl.ledger.stage_total(kSemiLabelingStage);
      const auto semi_time = semi ? semi->wall_time : std::chrono::nanoseconds{0};
      const auto diff = sl.ledger.total_time() - etp.ledger.total_time();
      if (diff < std::chrono::nanoseconds{0} || diff != semi_time) {
        report.identity_violations.push_back("budget " + format_budget(sl.cell.budget) + " repetition " +
                                             std::to_string(sl.cell.repetition) + ": total(etp_sl) - total(etp) = " +
                                             millis(diff) + " ms, semi-labeling = " + millis(semi_time) + " ms");
      }
    }
  }
  return report;
}

std::string EfficiencyReport::to_string() const {
  std::ostringstream out;
  out << std::left << std::setw(10) << "structure" << std::right << std::setw(8) << "budget" << std::setw(6) << "runs"
      << std::setw(14) << "train_ms" << std::setw(14) << "semi_ms" << std::setw(14) << "infer_ms" << std::setw(14)
      << "total_ms" << std::setw(10) << "pairs" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(10) << explkit::to_string(r.structure) << std::right << std::setw(8)
        << format_budget(r.budget) << std::setw(6) << r.runs << std::setw(14) << millis(r.train_time) << std::setw(14)
        << millis(r.semi_label_time) << std::setw(14) << millis(r.inference_time) << std::setw(14)
        << millis(r.total_time) << std::setw(10) << r.pairs_trained << '\n';
  }
  if (identity_checks > 0) {
    out << "\naccounting identity total(etp_sl) - total(etp) = semi-labeling: " << (identity_checks - identity_violations.size())
        << "/" << identity_checks << " hold\n";
    for (const auto& v : identity_violations) out << "  " << v << '\n';
  }
  return out.str();
}

}  // namespace explkit
