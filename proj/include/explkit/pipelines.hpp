#pragma once

#include <array>
#include <chrono>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "explkit/backend.hpp"
#include "explkit/corpus.hpp"
#include "explkit/ledger.hpp"
#include "explkit/taskformat.hpp"
#include "explkit/training_pair.hpp"

namespace explkit {

/// The four ways of combining label prediction and explanation generation:
///   Joint   p(y, e | x) in one generation
///   EtP     p(e | x) p(y | x, e)   explainer first, predictor reads its output
///   PtE     p(y | x) p(e | x, y)   predictor first, explainer reads the label
///   EtP_SL  EtP whose predictor trains on explainer-generated explanations
enum class StructureKind { Joint, EtP, PtE, EtP_SL };

inline constexpr std::array<StructureKind, 4> kAllStructures{StructureKind::Joint, StructureKind::EtP,
                                                             StructureKind::PtE, StructureKind::EtP_SL};

std::string_view to_string(StructureKind kind);
StructureKind parse_structure(std::string_view s);

struct StructureSpec {
  StructureKind kind = StructureKind::Joint;
  std::vector<StageKind> stages;  // inference order

  static StructureSpec of(StructureKind kind);
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using StageModels = std::map<StageKind, std::string>;

/// "{prefix}/{stage}" for every stage of the structure.
StageModels default_stage_models(const StructureSpec& spec, const std::string& prefix);

struct StagePairs {
  StageKind stage;
  std::vector<TrainingPair> pairs;
};

struct CompiledPairs {
  StructureKind structure = StructureKind::Joint;
  std::vector<StagePairs> stages;  // in spec order

  size_t total() const;
  const std::vector<TrainingPair>* find(StageKind stage) const;
};

// ---------------------------------------------------------------------------
// Semi-labeling
// ---------------------------------------------------------------------------

struct GenerationFailure {
  std::string id;
  std::string message;
};

struct SemiLabelResult {
  std::map<std::string, std::string> explanations;  // id -> generated explanation
  std::vector<GenerationFailure> failures;
};

struct BatchOptions {
  size_t batch_size = 64;
  size_t jobs = 1;  // concurrent backend calls
};

/// Generates an explanation for every instance of the view's base dataset
/// (explained and label-only alike) with an explainer already trained under
/// `explainer_model`. Ids present in `resume` are kept and not regenerated.
/// Records one "semi_labeling" ledger entry whose call count is the number of
/// generated inputs.
SemiLabelResult semi_label(const DatasetView& view, Backend& backend, std::string_view explainer_model,
                           const GenerationConfig& decode, Ledger* ledger = nullptr, const BatchOptions& batching = {},
                           const std::map<std::string, std::string>* resume = nullptr);

// ---------------------------------------------------------------------------
// Training-pair compilation
// ---------------------------------------------------------------------------

/// Pairs for one stage of one structure. For the EtP_SL predictor,
/// `semi_labels` supplies the generated explanation for every instance.
std::vector<TrainingPair> compile_stage_pairs(const DatasetView& view, StructureKind structure, StageKind stage,
                                              const std::map<std::string, std::string>* semi_labels = nullptr);

struct SemiLabelContext {
  Backend& backend;
  std::string explainer_model;
  GenerationConfig decode{};
  Ledger* ledger = nullptr;
  BatchOptions batching{};
};

/// With n explained and m label-only instances:
///   Joint  -> n joint pairs
///   EtP    -> n explainer + n predictor pairs (predictor sees gold explanations)
///   PtE    -> (m+n) predictor + n explainer pairs
///   EtP_SL -> n explainer + (m+n) semi-labeled predictor pairs
/// EtP_SL needs `semi` to generate the predictor's explanations.
CompiledPairs compile_training_pairs(const DatasetView& view, const StructureSpec& spec,
                                     const SemiLabelContext* semi = nullptr);

/// Line-delimited {stage, input, target, provenance} records.
void write_pairs(std::span<const TrainingPair> pairs, std::ostream& out);
std::vector<TrainingPair> read_pairs(std::istream& in);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string model_prefix = "explkit";
  Hyperparams hyper = default_train_hyperparams();
  GenerationConfig decode{};
  WaitOptions wait{};
  BatchOptions batching{};
};

struct TrainedStructure {
  StructureSpec spec;
  StageModels models;
  CompiledPairs pairs;
  std::map<std::string, std::string> semi_labels;  // EtP_SL only
};

/// Compiles and trains every stage in order, waiting for each job. For EtP_SL
/// the explainer is trained first, then semi-labels the whole training set,
/// then the predictor trains on the generated explanations. Each training job
/// is a ledger entry named after its stage.
TrainedStructure train_structure(const DatasetView& view, const StructureSpec& spec, Backend& backend,
                                 const TrainOptions& options, Ledger& ledger);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct InferenceResult {
  std::string id;
  std::string predicted_label;
  std::string generated_explanation;
  std::map<StageKind, std::string> per_stage_input;
  std::map<StageKind, std::string> per_stage_raw;
  bool clean_parse = false;
  std::optional<std::string> error;  // backend failure for this instance

  bool operator==(const InferenceResult&) const = default;
};

nlohmann::json to_json(const InferenceResult& r);
InferenceResult inference_result_from_json(const nlohmann::json& j);
void write_generations(std::span<const InferenceResult> results, std::ostream& out);
std::vector<InferenceResult> read_generations(std::istream& in);

/// Runs the structure's stages over every instance. The second stage of EtP
/// reads the explainer's generated explanation, the second stage of PtE reads
/// the predicted label; gold values are never fed forward. Backend failures
/// are retried per instance and then recorded on the result; unparseable
/// outputs are flagged with clean_parse=false. Results come back in dataset
/// order.
std::vector<InferenceResult> run_inference(const Dataset& ds, const StructureSpec& spec, Backend& backend,
                                           const StageModels& models, const GenerationConfig& decode,
                                           Ledger* ledger = nullptr, const BatchOptions& batching = {});

/// PtE explainer output for a caller-chosen label. The label must belong to
/// the instance's label vocabulary (case-insensitive).
std::string generate_conditioned(const Instance& inst, std::string_view label, Backend& backend,
                                 std::string_view explainer_model, const GenerationConfig& decode);

// ---------------------------------------------------------------------------

struct GeneratedText {
  std::string output;
  std::optional<std::string> error;
};

/// Batched, optionally concurrent generation. A failed batch is retried one
/// input at a time; inputs that still fail carry the error. `elapsed` sums the
/// backend-reported time of the successful calls.
std::vector<GeneratedText> generate_all(Backend& backend, std::string_view model, std::span<const std::string> inputs,
                                        const GenerationConfig& decode, const BatchOptions& batching,
                                        std::chrono::nanoseconds& elapsed);

}  // namespace explkit
