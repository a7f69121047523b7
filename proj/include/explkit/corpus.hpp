#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace explkit {

enum class Task { NLI, CQA };
enum class Split { Train, Dev, Test };

std::string_view to_string(Task task);
std::string_view to_string(Split split);
Task parse_task(std::string_view s);
Split parse_split(std::string_view s);

inline constexpr std::array<std::string_view, 3> kNliLabels{"entailment", "neutral", "contradiction"};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One task example. NLI instances use premise/hypothesis, CQA instances use
/// question/choices; the other pair stays empty.
struct Instance {
  std::string id;
  Task task = Task::NLI;
  std::string premise;
  std::string hypothesis;
  std::string question;
  std::vector<std::string> choices;
  std::string gold_label;
  std::vector<std::string> gold_explanations;

  bool has_explanation() const { return !gold_explanations.empty(); }

  bool operator==(const Instance&) const = default;
};

/// Labels a predictor may emit for this instance: the three NLI classes, or
/// the instance's own answer choices for CQA.
std::vector<std::string> label_vocabulary(const Instance& inst);

/// Throws CorpusError naming the first violated invariant.
void validate(const Instance& inst, Split split);

struct Dataset {
  std::string name;
  Split split = Split::Train;
  std::vector<Instance> instances;

  size_t size() const { return instances.size(); }
  const Instance* find(std::string_view id) const;

  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

enum class SourceFormat { EsnliCsv, CoseCsv, CanonicalJsonl };

SourceFormat parse_source_format(std::string_view s);

/// Column layout of a CosE CSV export. Choices come either from one column
/// per choice or from a single column split on `choices_separator`.
struct CoseMapping {
  std::string id_column;
  std::string question_column = "question";
  std::vector<std::string> choice_columns;
  std::string choices_column;
  std::string choices_separator = "|";
  std::string answer_column = "answer";
  std::vector<std::string> explanation_columns{"explanation"};

  /// Parses `key = value` lines; `#` starts a comment. Recognised keys: id,
  /// question, choices (comma-separated column list), choices_column,
  /// choices_separator, answer, explanation (comma-separated column list).
  static CoseMapping parse(std::istream& in);
  static CoseMapping load(const std::filesystem::path& path);
};

struct RowError {
  size_t line = 0;
  std::string message;
};

struct IngestOptions {
  std::string name;  // defaults to the file stem
  std::optional<CoseMapping> cose_mapping;
};

struct IngestResult {
  Dataset dataset;
  std::vector<RowError> rejected;
};

/// Rows that fail validation land in `rejected` with their line number; the
/// rest become instances in file order. File-level problems (unreadable file,
/// missing required columns) throw CorpusError.
IngestResult ingest(const std::filesystem::path& path, SourceFormat format, Split split,
                    const IngestOptions& options = {});
IngestResult ingest(std::istream& in, SourceFormat format, Split split, const IngestOptions& options);

/// Strict canonical load: any rejected row is an error.
Dataset load_canonical(const std::filesystem::path& path, Split split, std::string name = {});

void write_canonical(const Dataset& ds, std::ostream& out);
void save_canonical(const Dataset& ds, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Explanation budgets
// ---------------------------------------------------------------------------

/// floor(percent/100 * n).
size_t budget_count(size_t n, double budget_percent);

/// Fisher-Yates permutation of [0, n) driven by mt19937_64, with bounded draws
/// done by rejection so the result is identical across standard libraries.
std::vector<size_t> seeded_permutation(size_t n, uint64_t seed);

/// A seeded split of a dataset into explained instances (gold explanation
/// visible to training) and label-only instances. Holds a non-owning
/// reference to `base`, which must outlive the view.
class DatasetView {
 public:
  DatasetView(const Dataset& base, double budget_percent, uint64_t seed, std::set<std::string, std::less<>> explained);

  const Dataset& base() const { return *base_; }
  double budget_percent() const { return budget_percent_; }
  uint64_t seed() const { return seed_; }

  const std::set<std::string, std::less<>>& explained_ids() const { return explained_; }
  bool is_explained(std::string_view id) const { return explained_.find(id) != explained_.end(); }
  size_t explained_count() const { return explained_.size(); }
  size_t label_only_count() const { return base_->size() - explained_.size(); }

 private:
  const Dataset* base_;
  double budget_percent_;
  uint64_t seed_;
  std::set<std::string, std::less<>> explained_;
};

/// Draws a seeded permutation of the explanation-bearing instances and keeps
/// the first floor(percent/100 * |base|) of them (capped at the number of
/// bearing instances). Prefixes make budgets nested for a fixed seed.
DatasetView sample_budget(const Dataset& base, double budget_percent, uint64_t seed);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct DatasetStats {
  size_t count = 0;
  size_t explanation_count = 0;
  std::optional<double> mean_input_tokens;
  std::optional<double> sd_input_tokens;
  std::optional<double> mean_expl_tokens;
  std::optional<double> sd_expl_tokens;
};

/// Whitespace token counts. Input is premise + hypothesis for NLI and the
/// question for CQA; explanation figures cover every gold explanation. Sample
/// (n-1) standard deviation, 0 for a single observation.
DatasetStats compute_stats(const Dataset& ds);

}  // namespace explkit
