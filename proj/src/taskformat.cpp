#include "explkit/taskformat.hpp"

#include "explkit/text.hpp"
#include "explkit/training_pair.hpp"

namespace explkit {

std::string_view to_string(StageKind stage) {
  switch (stage) {
    case StageKind::JointStage: return "joint";
    case StageKind::PtEPredictor: return "pte_predictor";
    case StageKind::PtEExplainer: return "pte_explainer";
    case StageKind::EtPExplainer: return "etp_explainer";
    case StageKind::EtPPredictor: return "etp_predictor";
    case StageKind::RtoL: return "r2l";
  }
  return "joint";
}

StageKind parse_stage(std::string_view s) {
  for (StageKind stage : kAllStages) {
    if (to_string(stage) == s) return stage;
  }
  throw FormatError("unknown stage '" + std::string(s) + "'");
}

bool emits_label(StageKind stage) {
  return stage == StageKind::JointStage || stage == StageKind::PtEPredictor || stage == StageKind::EtPPredictor ||
         stage == StageKind::RtoL;
}

bool emits_explanation(StageKind stage) {
  return stage == StageKind::JointStage || stage == StageKind::PtEExplainer || stage == StageKind::EtPExplainer;
}

std::string_view to_string(Provenance p) {
  return p == Provenance::Gold ? "gold" : "semi_labeled";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "gold") return Provenance::Gold;
  if (s == "semi_labeled") return Provenance::SemiLabeled;
  throw FormatError("unknown provenance '" + std::string(s) + "'");
}

namespace {

void check_task_fields(const Instance& inst) {
  if (inst.task == Task::NLI) {
    if (inst.premise.empty() || inst.hypothesis.empty())
      throw FormatError("instance '" + inst.id + "' is NLI but lacks premise or hypothesis");
  } else if (inst.question.empty() || inst.choices.empty()) {
    throw FormatError("instance '" + inst.id + "' is CQA but lacks question or choices");
  }
}

std::string_view task_prefix(Task task) {
  return task == Task::NLI ? "nli" : "cos";
}

std::string choices_text(const Instance& inst) {
  std::string out;
  for (const auto& c : inst.choices) {
    out += " Choice: ";
    out += c;
  }
  return out;
}

std::string body(const Instance& inst) {
  if (inst.task == Task::NLI) return "Premise: " + inst.premise + " Hypothesis: " + inst.hypothesis;
  return "Question: " + inst.question + choices_text(inst);
}

const std::string& require(const std::optional<std::string>& v, StageKind stage, const char* what) {
  if (!v) throw FormatError(std::string(to_string(stage)) + " input needs an injected " + what);
  return *v;
}

void forbid(const std::optional<std::string>& v, StageKind stage, const char* what) {
  if (v) throw FormatError(std::string(to_string(stage)) + " input does not take an injected " + what);
}

}  // namespace

std::string render_input(const Instance& inst, StageKind stage, const Injected& injected) {
  check_task_fields(inst);
  const std::string task(task_prefix(inst.task));
  switch (stage) {
    case StageKind::JointStage:
    case StageKind::EtPExplainer:
      forbid(injected.label, stage, "label");
      forbid(injected.explanation, stage, "explanation");
      return "explain " + task + " " + body(inst);
    case StageKind::PtEPredictor:
      forbid(injected.label, stage, "label");
      forbid(injected.explanation, stage, "explanation");
      return task + " " + body(inst);
    case StageKind::PtEExplainer: {
      forbid(injected.explanation, stage, "explanation");
      const auto& label = require(injected.label, stage, "label");
      return "explain " + task + " " + body(inst) + " Label: " + label;
    }
    case StageKind::EtPPredictor: {
      forbid(injected.label, stage, "label");
      const auto& expl = require(injected.explanation, stage, "explanation");
      return task + " " + body(inst) + " Explanation: " + expl;
    }
    case StageKind::RtoL: {
      forbid(injected.label, stage, "label");
      const auto& expl = require(injected.explanation, stage, "explanation");
      if (inst.task == Task::NLI) return "nli Explanation: " + expl;
      return "cos Question-free." + choices_text(inst) + " Explanation: " + expl;
    }
  }
  throw FormatError("unhandled stage");
}

std::string render_target(const Instance& inst, StageKind stage) {
  if (inst.gold_label.empty() && emits_label(stage))
    throw FormatError("instance '" + inst.id + "' has no gold label");
  if (emits_explanation(stage) && !inst.has_explanation())
    throw FormatError("instance '" + inst.id + "' has no gold explanation for a " + std::string(to_string(stage)) +
                      " target");
  switch (stage) {
    case StageKind::JointStage:
      return inst.gold_label + " explanation " + inst.gold_explanations.front();
    case StageKind::PtEExplainer:
    case StageKind::EtPExplainer:
      return inst.gold_explanations.front();
    case StageKind::PtEPredictor:
    case StageKind::EtPPredictor:
    case StageKind::RtoL:
      return inst.gold_label;
  }
  throw FormatError("unhandled stage");
}

namespace {

constexpr std::string_view kDelimiter = "explanation";

// Position of the first "explanation" token bounded by a space or the string
// edges, or npos.
size_t find_delimiter(std::string_view raw) {
  size_t pos = raw.find(kDelimiter);
  while (pos != std::string_view::npos) {
    const bool left = pos == 0 || raw[pos - 1] == ' ';
    const size_t end = pos + kDelimiter.size();
    const bool right = end == raw.size() || raw[end] == ' ';
    if (left && right) return pos;
    pos = raw.find(kDelimiter, pos + 1);
  }
  return std::string_view::npos;
}

// Returns true when the label is in the vocabulary (or the vocabulary is empty).
bool normalize_label(std::string_view text_in, std::span<const std::string> vocab, std::string& out) {
  const auto trimmed = text::trim(text_in);
  for (const auto& v : vocab) {
    if (text::iequals(v, trimmed)) {
      out = v;
      return true;
    }
  }
  out = std::string(trimmed);
  return vocab.empty();
}

}  // namespace

ParsedOutput parse_output(std::string_view raw, StageKind stage, std::span<const std::string> label_vocabulary) {
  ParsedOutput out;
  out.raw = std::string(raw);
  switch (stage) {
    case StageKind::JointStage: {
      const size_t pos = find_delimiter(raw);
      std::string label;
      if (pos == std::string_view::npos) {
        normalize_label(raw, label_vocabulary, label);
        out.label = std::move(label);
        out.explanation = std::string();
        out.clean_parse = false;
        break;
      }
      const bool in_vocab = normalize_label(raw.substr(0, pos), label_vocabulary, label);
      const size_t rest = pos + kDelimiter.size();
      std::string expl(text::trim(raw.substr(std::min(rest, raw.size()))));
      out.clean_parse = in_vocab && !label.empty() && !expl.empty();
      out.label = std::move(label);
      out.explanation = std::move(expl);
      break;
    }
    case StageKind::PtEPredictor:
    case StageKind::EtPPredictor:
    case StageKind::RtoL: {
      std::string label;
      const bool in_vocab = normalize_label(raw, label_vocabulary, label);
      out.clean_parse = in_vocab && !label.empty();
      out.label = std::move(label);
      break;
    }
    case StageKind::PtEExplainer:
    case StageKind::EtPExplainer: {
      std::string expl(text::trim(raw));
      out.clean_parse = !expl.empty();
      out.explanation = std::move(expl);
      break;
    }
  }
  return out;
}

}  // namespace explkit
