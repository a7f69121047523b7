#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace explkit {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalPair {
  std::string id;
  std::string candidate;                // generated explanation
  std::vector<std::string> references;  // gold explanations
  std::string gold_label;
  std::string predicted_label;
  bool parse_failure = false;
};

/// Fraction of pairs whose predicted label equals the gold label after
/// trimming and lowercasing. Empty or out-of-vocabulary predictions never
/// match a gold label, so unparseable outputs count as wrong.
double accuracy(std::span<const EvalPair> pairs);

// ---------------------------------------------------------------------------
// BLEU (SacreBLEU 1.5.0 compatible: 13a tokenizer, exp smoothing)
// ---------------------------------------------------------------------------

/// mteval-v13a tokenization as done by SacreBLEU's default tokenizer.
std::string tokenize_13a(std::string_view line);

struct BleuStats {
  std::array<size_t, 4> correct{};
  std::array<size_t, 4> total{};
  size_t sys_len = 0;
  size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
  bool operator==(const BleuStats&) const = default;
};

/// Sufficient statistics for one segment. Empty references are ignored; at
/// least one non-empty reference is required.
BleuStats bleu_segment_stats(std::string_view candidate, std::span<const std::string> references);

/// Corpus score on the 0-100 scale from summed statistics.
double bleu_from_stats(const BleuStats& stats);

double corpus_bleu(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references);
double corpus_bleu(std::span<const EvalPair> pairs);

// ---------------------------------------------------------------------------
// ROUGE-L and METEOR
// ---------------------------------------------------------------------------

/// Lowercased runs of ASCII letters, digits and non-ASCII bytes; every other
/// byte separates tokens.
std::vector<std::string> tokenize_words(std::string_view s);

size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// LCS F1 of one candidate against its best reference.
double rouge_l_sentence(std::string_view candidate, std::span<const std::string> references);
double rouge_l(std::span<const EvalPair> pairs);

struct MeteorAlignment {
  size_t matches = 0;
  size_t exact_matches = 0;
  size_t chunks = 0;
  std::vector<std::pair<size_t, size_t>> pairs;  // (hypothesis index, reference index), hypothesis order
};

/// Unigram alignment: exact matches first, then Porter-stem matches among
/// the remaining words. Among alignments with the most exact and then the
/// most total matches, one with the fewest chunks is returned.
MeteorAlignment meteor_align(std::span<const std::string> hypothesis, std::span<const std::string> reference);

inline constexpr double kMeteorAlpha = 0.9;
inline constexpr double kMeteorBeta = 3.0;
inline constexpr double kMeteorGamma = 0.5;

double meteor_sentence(std::string_view candidate, std::span<const std::string> references);
double meteor(std::span<const EvalPair> pairs);

/// 100 * acc_generated / acc_gold.
double recover_ratio(double acc_generated, double acc_gold);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricReport {
  double accuracy = 0.0;             // [0, 1]
  std::optional<double> bleu;        // [0, 100]
  std::optional<double> rouge_l;     // [0, 1]
  std::optional<double> meteor;      // [0, 1]
  size_t n_evaluated = 0;
  size_t n_parse_failures = 0;
  size_t n_with_references = 0;      // pairs scored by the generation metrics

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  bool operator==(const MetricReport&) const = default;
};

/// Accuracy over every pair; generation metrics over the pairs that carry at
/// least one non-empty reference (unset when there are none).
MetricReport evaluate(std::span<const EvalPair> pairs);

/// Single-line JSON record: `extra` fields followed by the report's fields.
std::string flat_record(const MetricReport& report, const nlohmann::json& extra = nlohmann::json::object());

/// Fixed-width table with columns Acc, BLEU, METEOR, Rouge-L (percent).
std::string format_report_table(std::span<const std::pair<std::string, MetricReport>> rows);

}  // namespace explkit
