#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "explkit/corpus.hpp"

namespace explkit {

/// One trainable text-to-text stage. RtoL is the explanation-only label
/// classifier used for label-informedness.
enum class StageKind { JointStage, PtEPredictor, PtEExplainer, EtPExplainer, EtPPredictor, RtoL };

inline constexpr std::array<StageKind, 6> kAllStages{StageKind::JointStage,   StageKind::PtEPredictor,
                                                     StageKind::PtEExplainer, StageKind::EtPExplainer,
                                                     StageKind::EtPPredictor, StageKind::RtoL};

std::string_view to_string(StageKind stage);
StageKind parse_stage(std::string_view s);

bool emits_label(StageKind stage);
bool emits_explanation(StageKind stage);

class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Values spliced into an input that do not come from the instance's own
/// gold fields: the label for PtEExplainer, the explanation for EtPPredictor
/// and RtoL.
struct Injected {
  std::optional<std::string> label;
  std::optional<std::string> explanation;

  static Injected with_label(std::string label) { return {std::move(label), std::nullopt}; }
  static Injected with_explanation(std::string expl) { return {std::nullopt, std::move(expl)}; }
};

/// Model input string for `stage`. Throws FormatError when a required
/// injected value is missing, an injected value the stage does not take is
/// supplied, or the instance lacks its task's fields.
std::string render_input(const Instance& inst, StageKind stage, const Injected& injected = {});

/// Gold target string: "{label} explanation {expl}" for JointStage, the label
/// for predictor stages, the first gold explanation for explainer stages.
std::string render_target(const Instance& inst, StageKind stage);

struct ParsedOutput {
  std::optional<std::string> label;
  std::optional<std::string> explanation;
  std::string raw;
  bool clean_parse = false;
};

/// Never throws: degraded generations come back with clean_parse=false.
/// Labels matching the vocabulary case-insensitively are returned with the
/// vocabulary's spelling, others verbatim (trimmed).
ParsedOutput parse_output(std::string_view raw, StageKind stage, std::span<const std::string> label_vocabulary);

}  // namespace explkit
