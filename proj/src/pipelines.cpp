#include "explkit/pipelines.hpp"

#include <atomic>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include "explkit/text.hpp"

namespace explkit {

using nlohmann::json;

std::string_view to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::Joint: return "joint";
    case StructureKind::EtP: return "etp";
    case StructureKind::PtE: return "pte";
    case StructureKind::EtP_SL: return "etp_sl";
  }
  return "joint";
}

StructureKind parse_structure(std::string_view s) {
  for (StructureKind kind : kAllStructures) {
    if (text::iequals(to_string(kind), s)) return kind;
  }
  throw PipelineError("unknown structure '" + std::string(s) + "' (expected joint, etp, pte or etp_sl)");
}

StructureSpec StructureSpec::of(StructureKind kind) {
  switch (kind) {
    case StructureKind::Joint:
      return {kind, {StageKind::JointStage}};
    case StructureKind::EtP:
    case StructureKind::EtP_SL:
      return {kind, {StageKind::EtPExplainer, StageKind::EtPPredictor}};
    case StructureKind::PtE:
      return {kind, {StageKind::PtEPredictor, StageKind::PtEExplainer}};
  }
  throw PipelineError("unhandled structure");
}

StageModels default_stage_models(const StructureSpec& spec, const std::string& prefix) {
  StageModels models;
  for (StageKind stage : spec.stages) models[stage] = prefix + "/" + std::string(to_string(stage));
  return models;
}

size_t CompiledPairs::total() const {
  size_t n = 0;
  for (const auto& s : stages) n += s.pairs.size();
  return n;
}

const std::vector<TrainingPair>* CompiledPairs::find(StageKind stage) const {
  for (const auto& s : stages) {
    if (s.stage == stage) return &s.pairs;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Batched generation
// ---------------------------------------------------------------------------

std::vector<GeneratedText> generate_all(Backend& backend, std::string_view model, std::span<const std::string> inputs,
                                        const GenerationConfig& decode, const BatchOptions& batching,
                                        std::chrono::nanoseconds& elapsed) {
  std::vector<GeneratedText> results(inputs.size());
  elapsed = std::chrono::nanoseconds{0};
  if (inputs.empty()) return results;

  const size_t batch = std::max<size_t>(1, batching.batch_size);
  const size_t n_batches = (inputs.size() + batch - 1) / batch;
  std::vector<std::chrono::nanoseconds> batch_elapsed(n_batches, std::chrono::nanoseconds{0});

  auto call = [&](size_t begin, size_t end) -> std::chrono::nanoseconds {
    Generation gen = backend.generate(model, inputs.subspan(begin, end - begin), decode);
    if (gen.outputs.size() != end - begin)
      throw BackendError(BackendError::Kind::Server, "backend returned " + std::to_string(gen.outputs.size()) +
                                                         " outputs for " + std::to_string(end - begin) + " inputs");
    for (size_t i = begin; i < end; ++i) results[i].output = std::move(gen.outputs[i - begin]);
    return gen.elapsed;
  };

  auto run_batch = [&](size_t b) {
    const size_t begin = b * batch;
    const size_t end = std::min(inputs.size(), begin + batch);
    try {
      batch_elapsed[b] = call(begin, end);
      return;
    } catch (const std::exception&) {
      // fall through to per-input retry
    }
    for (size_t i = begin; i < end; ++i) {
      try {
        batch_elapsed[b] += call(i, i + 1);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };

  const size_t n_threads = std::min(std::max<size_t>(1, batching.jobs), n_batches);
  if (n_threads == 1) {
    for (size_t b = 0; b < n_batches; ++b) run_batch(b);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::jthread> threads;
    for (size_t t = 0; t < n_threads; ++t) {
      threads.emplace_back([&] {
        for (size_t b = next.fetch_add(1); b < n_batches; b = next.fetch_add(1)) run_batch(b);
      });
    }
  }
  for (auto e : batch_elapsed) elapsed += e;
  return results;
}

// ---------------------------------------------------------------------------
// Semi-labeling
// ---------------------------------------------------------------------------

SemiLabelResult semi_label(const DatasetView& view, Backend& backend, std::string_view explainer_model,
                           const GenerationConfig& decode, Ledger* ledger, const BatchOptions& batching,
                           const std::map<std::string, std::string>* resume) {
  SemiLabelResult result;
  std::vector<const Instance*> todo;
  std::vector<std::string> inputs;
  for (const auto& inst : view.base().instances) {
    if (resume) {
      if (auto it = resume->find(inst.id); it != resume->end()) {
        result.explanations[inst.id] = it->second;
        continue;
      }
    }
    todo.push_back(&inst);
    inputs.push_back(render_input(inst, StageKind::EtPExplainer));
  }

  std::chrono::nanoseconds elapsed{0};
  auto generated = generate_all(backend, explainer_model, inputs, decode, batching, elapsed);
  for (size_t i = 0; i < todo.size(); ++i) {
    if (generated[i].error) {
      result.failures.push_back({todo[i]->id, *generated[i].error});
      continue;
    }
    auto parsed = parse_output(generated[i].output, StageKind::EtPExplainer, {});
    result.explanations[todo[i]->id] = parsed.explanation.value_or(std::string());
  }
  if (ledger) ledger->record(std::string(kSemiLabelingStage), inputs.size(), elapsed, 0);
  return result;
}

// ---------------------------------------------------------------------------
// Compilation
// ---------------------------------------------------------------------------

namespace {

bool structure_has_stage(StructureKind kind, StageKind stage) {
  const auto spec = StructureSpec::of(kind);
  return std::find(spec.stages.begin(), spec.stages.end(), stage) != spec.stages.end();
}

TrainingPair make_pair(const Instance& inst, StageKind stage, std::string input, std::string target,
                       Provenance provenance = Provenance::Gold) {
  return {stage, std::move(input), std::move(target), inst.id, provenance};
}

}  // namespace

std::vector<TrainingPair> compile_stage_pairs(const DatasetView& view, StructureKind structure, StageKind stage,
                                              const std::map<std::string, std::string>* semi_labels) {
  if (!structure_has_stage(structure, stage))
    throw PipelineError(std::string(to_string(structure)) + " has no " + std::string(to_string(stage)) + " stage");

  std::vector<TrainingPair> pairs;
  for (const auto& inst : view.base().instances) {
    if (inst.gold_label.empty()) throw PipelineError("instance '" + inst.id + "' has no gold label");
    const bool explained = view.is_explained(inst.id);
    switch (stage) {
      case StageKind::JointStage:
      case StageKind::EtPExplainer:
        if (explained) pairs.push_back(make_pair(inst, stage, render_input(inst, stage), render_target(inst, stage)));
        break;
      case StageKind::PtEPredictor:
        pairs.push_back(make_pair(inst, stage, render_input(inst, stage), render_target(inst, stage)));
        break;
      case StageKind::PtEExplainer:
        if (explained) {
          pairs.push_back(make_pair(inst, stage, render_input(inst, stage, Injected::with_label(inst.gold_label)),
                                    render_target(inst, stage)));
        }
        break;
      case StageKind::EtPPredictor:
        if (structure == StructureKind::EtP_SL) {
          if (!semi_labels) throw PipelineError("EtP_SL predictor pairs need semi-labeled explanations");
          auto it = semi_labels->find(inst.id);
          if (it == semi_labels->end()) throw PipelineError("no semi-labeled explanation for '" + inst.id + "'");
          pairs.push_back(make_pair(inst, stage,
                                    render_input(inst, stage, Injected::with_explanation(it->second)),
                                    render_target(inst, stage), Provenance::SemiLabeled));
        } else if (explained) {
          pairs.push_back(make_pair(
              inst, stage, render_input(inst, stage, Injected::with_explanation(inst.gold_explanations.front())),
              render_target(inst, stage)));
        }
        break;
      case StageKind::RtoL:
        throw PipelineError("r2l pairs are compiled by the label-informedness protocol");
    }
  }
  return pairs;
}

CompiledPairs compile_training_pairs(const DatasetView& view, const StructureSpec& spec, const SemiLabelContext* semi) {
  CompiledPairs out;
  out.structure = spec.kind;
  std::map<std::string, std::string> semi_labels;
  if (spec.kind == StructureKind::EtP_SL) {
    if (!semi) throw PipelineError("EtP_SL compilation needs a backend to semi-label the training set");
    auto result = semi_label(view, semi->backend, semi->explainer_model, semi->decode, semi->ledger, semi->batching);
    if (!result.failures.empty())
      throw PipelineError("semi-labeling failed for " + std::to_string(result.failures.size()) +
                          " instance(s), first '" + result.failures.front().id +
                          "': " + result.failures.front().message);
    semi_labels = std::move(result.explanations);
  }
  for (StageKind stage : spec.stages) {
    out.stages.push_back({stage, compile_stage_pairs(view, spec.kind, stage, &semi_labels)});
  }
  return out;
}

void write_pairs(std::span<const TrainingPair> pairs, std::ostream& out) {
  for (const auto& p : pairs) {
    json j{{"stage", to_string(p.stage)},
           {"input", p.input},
           {"target", p.target},
           {"provenance", to_string(p.provenance)}};
    out << j.dump() << '\n';
  }
}

std::vector<TrainingPair> read_pairs(std::istream& in) {
  std::vector<TrainingPair> pairs;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      TrainingPair p;
      p.stage = parse_stage(j.at("stage").get<std::string>());
      p.input = j.at("input").get<std::string>();
      p.target = j.at("target").get<std::string>();
      p.provenance = parse_provenance(j.value("provenance", std::string("gold")));
      pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw PipelineError("pairs line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainedStructure train_structure(const DatasetView& view, const StructureSpec& spec, Backend& backend,
                                 const TrainOptions& options, Ledger& ledger) {
  TrainedStructure out;
  out.spec = spec;
  out.models = default_stage_models(spec, options.model_prefix);
  out.pairs.structure = spec.kind;

  for (StageKind stage : spec.stages) {
    std::vector<TrainingPair> pairs;
    if (spec.kind == StructureKind::EtP_SL && stage == StageKind::EtPPredictor) {
      auto result = semi_label(view, backend, out.models.at(StageKind::EtPExplainer), options.decode, &ledger,
                               options.batching);
      if (!result.failures.empty())
        throw PipelineError("semi-labeling failed for " + std::to_string(result.failures.size()) +
                            " instance(s), first '" + result.failures.front().id +
                            "': " + result.failures.front().message);
      out.semi_labels = std::move(result.explanations);
      pairs = compile_stage_pairs(view, spec.kind, stage, &out.semi_labels);
    } else {
      pairs = compile_stage_pairs(view, spec.kind, stage);
    }
    if (pairs.empty())
      throw PipelineError("no training pairs for stage " + std::string(to_string(stage)) + " (budget " +
                          std::to_string(view.budget_percent()) + "%)");

    const auto job = backend.train(out.models.at(stage), pairs, options.hyper);
    const auto status = wait_for_job(backend, job, options.wait);
    ledger.record(std::string(to_string(stage)), 1, status.elapsed, pairs.size());
    out.pairs.stages.push_back({stage, std::move(pairs)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

json to_json(const InferenceResult& r) {
  json inputs = json::object();
  json raw = json::object();
  for (const auto& [stage, s] : r.per_stage_input) inputs[std::string(to_string(stage))] = s;
  for (const auto& [stage, s] : r.per_stage_raw) raw[std::string(to_string(stage))] = s;
  json j{{"id", r.id},
         {"predicted_label", r.predicted_label},
         {"generated_explanation", r.generated_explanation},
         {"clean_parse", r.clean_parse},
         {"inputs", inputs},
         {"raw", raw}};
  if (r.error) j["error"] = *r.error;
  return j;
}

InferenceResult inference_result_from_json(const json& j) {
  InferenceResult r;
  r.id = j.at("id").get<std::string>();
  r.predicted_label = j.value("predicted_label", std::string());
  r.generated_explanation = j.value("generated_explanation", std::string());
  r.clean_parse = j.value("clean_parse", false);
  if (auto it = j.find("inputs"); it != j.end()) {
    for (const auto& [k, v] : it->items()) r.per_stage_input[parse_stage(k)] = v.get<std::string>();
  }
  if (auto it = j.find("raw"); it != j.end()) {
    for (const auto& [k, v] : it->items()) r.per_stage_raw[parse_stage(k)] = v.get<std::string>();
  }
  if (auto it = j.find("error"); it != j.end() && it->is_string()) r.error = it->get<std::string>();
  return r;
}

void write_generations(std::span<const InferenceResult> results, std::ostream& out) {
  for (const auto& r : results) out << to_json(r).dump() << '\n';
}

std::vector<InferenceResult> read_generations(std::istream& in) {
  std::vector<InferenceResult> results;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      results.push_back(inference_result_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw PipelineError("generations line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return results;
}

namespace {

// Runs one stage for the instances whose `input` is set, storing raw outputs
// and errors on the results.
void run_stage(Backend& backend, const StageModels& models, StageKind stage, std::vector<InferenceResult>& results,
               const std::vector<std::optional<std::string>>& inputs, const GenerationConfig& decode,
               const BatchOptions& batching, Ledger* ledger) {
  auto model = models.find(stage);
  if (model == models.end()) throw PipelineError("no model for stage " + std::string(to_string(stage)));

  std::vector<size_t> index;
  std::vector<std::string> batch_inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i]) continue;
    index.push_back(i);
    batch_inputs.push_back(*inputs[i]);
  }
  std::chrono::nanoseconds elapsed{0};
  auto generated = generate_all(backend, model->second, batch_inputs, decode, batching, elapsed);
  for (size_t k = 0; k < index.size(); ++k) {
    auto& r = results[index[k]];
    r.per_stage_input[stage] = std::move(batch_inputs[k]);
    if (generated[k].error) {
      r.error = std::string(to_string(stage)) + ": " + *generated[k].error;
    } else {
      r.per_stage_raw[stage] = std::move(generated[k].output);
    }
  }
  if (ledger) ledger->record(std::string(kInferPrefix) + std::string(to_string(stage)), batch_inputs.size(), elapsed, 0);
}

}  // namespace

std::vector<InferenceResult> run_inference(const Dataset& ds, const StructureSpec& spec, Backend& backend,
                                           const StageModels& models, const GenerationConfig& decode, Ledger* ledger,
                                           const BatchOptions& batching) {
  decode.validate();
  const size_t n = ds.size();
  std::vector<InferenceResult> results(n);
  std::vector<std::vector<std::string>> vocab(n);
  for (size_t i = 0; i < n; ++i) {
    results[i].id = ds.instances[i].id;
    vocab[i] = label_vocabulary(ds.instances[i]);
  }

  auto first_inputs = [&](StageKind stage) {
    std::vector<std::optional<std::string>> inputs(n);
    for (size_t i = 0; i < n; ++i) inputs[i] = render_input(ds.instances[i], stage);
    return inputs;
  };
  auto raw_of = [&](size_t i, StageKind stage) -> const std::string* {
    auto it = results[i].per_stage_raw.find(stage);
    return it == results[i].per_stage_raw.end() ? nullptr : &it->second;
  };

  switch (spec.kind) {
    case StructureKind::Joint: {
      run_stage(backend, models, StageKind::JointStage, results, first_inputs(StageKind::JointStage), decode, batching,
                ledger);
      for (size_t i = 0; i < n; ++i) {
        const auto* raw = raw_of(i, StageKind::JointStage);
        if (!raw) continue;
        auto parsed = parse_output(*raw, StageKind::JointStage, vocab[i]);
        results[i].predicted_label = parsed.label.value_or(std::string());
        results[i].generated_explanation = parsed.explanation.value_or(std::string());
        results[i].clean_parse = parsed.clean_parse;
      }
      break;
    }
    case StructureKind::EtP:
    case StructureKind::EtP_SL: {
      run_stage(backend, models, StageKind::EtPExplainer, results, first_inputs(StageKind::EtPExplainer), decode,
                batching, ledger);
      std::vector<std::optional<std::string>> second(n);
      std::vector<bool> explainer_clean(n, false);
      for (size_t i = 0; i < n; ++i) {
        const auto* raw = raw_of(i, StageKind::EtPExplainer);
        if (!raw) continue;
        auto parsed = parse_output(*raw, StageKind::EtPExplainer, vocab[i]);
        explainer_clean[i] = parsed.clean_parse;
        results[i].generated_explanation = parsed.explanation.value_or(std::string());
        second[i] = render_input(ds.instances[i], StageKind::EtPPredictor,
                                 Injected::with_explanation(results[i].generated_explanation));
      }
      run_stage(backend, models, StageKind::EtPPredictor, results, second, decode, batching, ledger);
      for (size_t i = 0; i < n; ++i) {
        const auto* raw = raw_of(i, StageKind::EtPPredictor);
        if (!raw) continue;
        auto parsed = parse_output(*raw, StageKind::EtPPredictor, vocab[i]);
        results[i].predicted_label = parsed.label.value_or(std::string());
        results[i].clean_parse = explainer_clean[i] && parsed.clean_parse;
      }
      break;
    }
    case StructureKind::PtE: {
      run_stage(backend, models, StageKind::PtEPredictor, results, first_inputs(StageKind::PtEPredictor), decode,
                batching, ledger);
      std::vector<std::optional<std::string>> second(n);
      std::vector<bool> predictor_clean(n, false);
      for (size_t i = 0; i < n; ++i) {
        const auto* raw = raw_of(i, StageKind::PtEPredictor);
        if (!raw) continue;
        auto parsed = parse_output(*raw, StageKind::PtEPredictor, vocab[i]);
        predictor_clean[i] = parsed.clean_parse;
        results[i].predicted_label = parsed.label.value_or(std::string());
        // An empty prediction leaves nothing to condition the explainer on.
        if (!results[i].predicted_label.empty())
          second[i] = render_input(ds.instances[i], StageKind::PtEExplainer, Injected::with_label(results[i].predicted_label));
      }
      run_stage(backend, models, StageKind::PtEExplainer, results, second, decode, batching, ledger);
      for (size_t i = 0; i < n; ++i) {
        const auto* raw = raw_of(i, StageKind::PtEExplainer);
        if (!raw) continue;
        auto parsed = parse_output(*raw, StageKind::PtEExplainer, vocab[i]);
        results[i].generated_explanation = parsed.explanation.value_or(std::string());
        results[i].clean_parse = predictor_clean[i] && parsed.clean_parse;
      }
      break;
    }
  }
  for (auto& r : results) {
    if (r.error) r.clean_parse = false;
  }
  return results;
}

std::string generate_conditioned(const Instance& inst, std::string_view label, Backend& backend,
                                 std::string_view explainer_model, const GenerationConfig& decode) {
  const auto vocab = label_vocabulary(inst);
  const std::string* canonical = nullptr;
  for (const auto& v : vocab) {
    if (text::iequals(v, text::trim(label))) canonical = &v;
  }
  if (!canonical)
    throw PipelineError("label '" + std::string(label) + "' is not in the label vocabulary of '" + inst.id + "'");
  const std::vector<std::string> inputs{render_input(inst, StageKind::PtEExplainer, Injected::with_label(*canonical))};
  auto gen = backend.generate(explainer_model, inputs, decode);
  if (gen.outputs.size() != 1) throw BackendError(BackendError::Kind::Server, "expected one output");
  return parse_output(gen.outputs.front(), StageKind::PtEExplainer, vocab).explanation.value_or(std::string());
}

}  // namespace explkit
