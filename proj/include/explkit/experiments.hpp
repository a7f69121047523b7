#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "explkit/backend.hpp"
#include "explkit/corpus.hpp"
#include "explkit/ledger.hpp"
#include "explkit/metrics.hpp"
#include "explkit/pipelines.hpp"

namespace explkit {

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which gold explanations serve as references: the first two (e-SNLI
/// convention; CosE has one anyway) or all of them.
enum class RefPolicy { First2, All };

std::string_view to_string(RefPolicy policy);
RefPolicy parse_ref_policy(std::string_view s);

/// [30, 100] for CosE datasets (names starting with "cose"), [10, 30, 100]
/// otherwise.
std::vector<double> default_budgets(std::string_view dataset);

/// CosE ships no test split; only dev is evaluated for it.
bool evaluates_test(std::string_view dataset);

struct ExperimentPlan {
  std::string dataset;
  std::filesystem::path train;
  std::filesystem::path dev;
  std::optional<std::filesystem::path> test;
  std::vector<double> budgets;
  std::vector<StructureKind> structures{kAllStructures.begin(), kAllStructures.end()};
  std::vector<uint64_t> seeds;
  size_t repetitions = 3;
  GenerationConfig decode{};
  RefPolicy refs = RefPolicy::First2;
  Hyperparams hyper = default_train_hyperparams();

  /// Seed of repetition r: seeds[r], or seeds[0] + r past the end of the list.
  uint64_t seed_for(size_t repetition) const;

  void validate() const;

  nlohmann::json to_json() const;
  /// Missing budgets fall back to default_budgets(dataset); `hyper` entries
  /// override the training defaults key by key.
  static ExperimentPlan from_json(const nlohmann::json& j, uint64_t default_seed = 0);
  static ExperimentPlan load(const std::filesystem::path& path, uint64_t default_seed = 0);
};

struct Cell {
  std::string id;  // "{structure}-b{budget}-r{repetition}"
  StructureKind structure = StructureKind::Joint;
  double budget = 100.0;
  size_t repetition = 0;
  uint64_t seed = 0;
};

/// structure x budget x repetition, in plan order.
std::vector<Cell> enumerate_cells(const ExperimentPlan& plan);

struct SplitReport {
  Split split = Split::Dev;
  MetricReport report;
};

struct RunRecord {
  Cell cell;
  std::vector<SplitReport> reports;
  Ledger ledger;
  size_t explained = 0;
  size_t label_only = 0;
  std::map<std::string, std::string> artifacts;  // label -> path relative to the results directory
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
  const MetricReport* report(Split split) const;
  nlohmann::json to_json() const;
};

/// Arithmetic mean over the successful repetitions of one (structure, budget)
/// for one split. Count fields of `mean` are summed.
struct CellSummary {
  StructureKind structure = StructureKind::Joint;
  double budget = 100.0;
  Split split = Split::Dev;
  size_t completed = 0;
  size_t failed = 0;
  std::vector<double> accuracies;  // per successful repetition
  MetricReport mean;
};

std::vector<CellSummary> summarize(const ExperimentPlan& plan, std::span<const RunRecord> records);
std::string summary_tsv(std::span<const CellSummary> summaries);
std::string summary_text(std::span<const CellSummary> summaries);

struct GridData {
  const Dataset* train = nullptr;
  const Dataset* dev = nullptr;
  const Dataset* test = nullptr;
};

struct GridOptions {
  std::optional<std::filesystem::path> results_dir;
  size_t cell_jobs = 1;  // cells run concurrently
  BatchOptions batching{};
  WaitOptions wait{};
  std::string model_prefix;  // defaults to the dataset name
};

struct GridResult {
  std::vector<RunRecord> records;
  std::vector<CellSummary> summaries;
};

/// Runs every cell: sample budget, compile and train the stages, infer on
/// dev (and test where the dataset has one), score, record. A failing cell
/// carries its error and does not stop the grid. With a results directory,
/// writes plan.json, cells/<id>/{pairs/, generations/, report.json,
/// ledger.json} and summary.tsv / summary.txt.
GridResult run_grid(const ExperimentPlan& plan, const GridData& data, Backend& backend, const GridOptions& options);

/// Trains and evaluates one cell without writing anything.
RunRecord run_cell(const ExperimentPlan& plan, const Cell& cell, const GridData& data, Backend& backend,
                   const GridOptions& options, TrainedStructure* trained_out = nullptr,
                   std::map<Split, std::vector<InferenceResult>>* generations_out = nullptr);

std::vector<EvalPair> make_eval_pairs(const Dataset& ds, std::span<const InferenceResult> results, RefPolicy refs);

// ---------------------------------------------------------------------------
// Label informedness
// ---------------------------------------------------------------------------

using ExplanationMap = std::map<std::string, std::string>;

struct ExplanationSource {
  std::string name;
  ExplanationMap explanations;  // id -> explanation, for training and evaluation ids
};

/// First gold explanation of every instance that has one.
ExplanationMap gold_explanation_source(std::span<const Dataset* const> datasets);
ExplanationMap explanations_from_results(std::span<const InferenceResult> results);

struct InformednessOptions {
  std::string gold_source = "gold";
  std::string model_prefix = "r2l";
  Hyperparams hyper = default_train_hyperparams();
  GenerationConfig decode{};
  WaitOptions wait{};
  BatchOptions batching{};
};

struct InformednessRow {
  std::string source;
  double accuracy = 0.0;       // [0, 1]
  double recover_ratio = 0.0;  // percent of the gold row's accuracy
  size_t train_pairs = 0;
};

/// Trains one explanation-only classifier per source on the training
/// instances the source covers and evaluates it on `eval`, whose ids the
/// source must all cover. The gold source comes first and its ratio is 100.
std::vector<InformednessRow> label_informedness(const Dataset& train, const Dataset& eval,
                                                std::span<const ExplanationSource> sources, Backend& backend,
                                                const InformednessOptions& options, Ledger* ledger = nullptr);

std::string format_informedness(std::span<const InformednessRow> rows);

// ---------------------------------------------------------------------------
// Efficiency
// ---------------------------------------------------------------------------

struct EfficiencyRow {
  StructureKind structure = StructureKind::Joint;
  double budget = 100.0;
  size_t runs = 0;
  std::chrono::nanoseconds train_time{0};
  std::chrono::nanoseconds semi_label_time{0};
  std::chrono::nanoseconds inference_time{0};
  std::chrono::nanoseconds total_time{0};
  size_t pairs_trained = 0;
};

struct EfficiencyReport {
  std::vector<EfficiencyRow> rows;  // means over successful runs
  /// One entry per (budget, repetition) where both EtP and EtP_SL ran and
  /// total(EtP_SL) - total(EtP) differs from EtP_SL's semi-labeling time, or
  /// total(EtP_SL) < total(EtP).
  std::vector<std::string> identity_violations;
  size_t identity_checks = 0;

  std::string to_string() const;
};

EfficiencyReport efficiency_report(std::span<const RunRecord> records);

}  // namespace explkit
