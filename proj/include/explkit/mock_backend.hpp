#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "explkit/backend.hpp"
#include "explkit/corpus.hpp"

namespace explkit {

enum class MockMode { Echo, Table, Oracle };

std::string_view to_string(MockMode mode);

struct MockCall {
  enum class Kind { Generate, Train };
  Kind kind = Kind::Generate;
  std::string model;
  std::string input;  // generate calls: one entry per input
  GenerationConfig config;
  std::vector<TrainingPair> pairs;  // train calls
  Hyperparams hyper;
};

/// Deterministic in-process backend.
///
/// Echo returns each input. Table answers from an input->output map and
/// flags misses with an empty output. Oracle answers from gold data: for
/// every instance and stage it precomputes render_input (with gold values
/// injected) -> render_target, and resolves the stage from the model name
/// (the text after the last '/', e.g. "cell-3/pte_predictor").
///
/// No time passes: `elapsed` is the configured latency per generated input
/// and per train call, so ledgers built on a mock are exact and reproducible.
class MockBackend : public Backend {
 public:
  static std::unique_ptr<MockBackend> echo();
  static std::unique_ptr<MockBackend> table(std::map<std::string, std::string> entries);
  static std::unique_ptr<MockBackend> oracle(std::span<const Dataset* const> gold);

  std::string identity() const override;
  Capabilities capabilities() const override { return {}; }

  Generation generate(std::string_view model, std::span<const std::string> inputs,
                      const GenerationConfig& config) override;
  JobHandle train(std::string_view model, std::span<const TrainingPair> pairs, const Hyperparams& hyper) override;
  JobStatus job_status(const JobHandle& job) override;

  void set_generate_latency(std::chrono::nanoseconds per_input) { generate_latency_ = per_input; }
  void set_train_latency(std::chrono::nanoseconds per_call) { train_latency_ = per_call; }

  MockMode mode() const { return mode_; }
  std::vector<MockCall> call_log() const;
  size_t generate_count() const;
  size_t train_count() const;

 private:
  explicit MockBackend(MockMode mode) : mode_(mode) {}

  std::string answer(std::string_view model, const std::string& input, bool& missed) const;

  MockMode mode_;
  std::map<std::string, std::string> table_;
  std::map<StageKind, std::map<std::string, std::string>> oracle_;
  std::chrono::nanoseconds generate_latency_{0};
  std::chrono::nanoseconds train_latency_{0};

  mutable std::mutex mu_;
  std::vector<MockCall> log_;
  std::map<std::string, JobStatus> jobs_;
};

/// Stage named by a model string ("prefix/etp_explainer" -> EtPExplainer).
std::optional<StageKind> stage_from_model_name(std::string_view model);

}  // namespace explkit
