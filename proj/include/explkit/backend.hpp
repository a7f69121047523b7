#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "explkit/training_pair.hpp"
#include "json.hpp"

namespace explkit {

enum class DecodeMode { Greedy };

std::string_view to_string(DecodeMode mode);

/// Decoding settings forwarded with every generate request. Defaults follow
/// the experimental setup: greedy decoding for up to 100 tokens, stopping at
/// the end-of-sequence token.
struct GenerationConfig {
  int max_new_tokens = 100;
  DecodeMode decode = DecodeMode::Greedy;
  bool stop_on_eos = true;

  void validate() const;
  bool operator==(const GenerationConfig&) const = default;
};

/// Opaque training options. Validation happens on the model server.
using Hyperparams = nlohmann::json;

/// Training defaults forwarded to the server. The source setup states both a
/// learning rate of 1e-4 and a linear schedule decaying from 5e-5; both are
/// passed through under separate keys.
Hyperparams default_train_hyperparams();

struct Generation {
  std::vector<std::string> outputs;
  std::vector<bool> missed;  // set when a mock had no answer for the input
  std::chrono::nanoseconds elapsed{0};
};

enum class JobState { Queued, Running, Done, Failed };

std::string_view to_string(JobState state);
JobState parse_job_state(std::string_view s);

struct JobHandle {
  std::string id;
  std::string model;
};

struct JobStatus {
  JobState state = JobState::Queued;
  std::string detail;
  std::chrono::nanoseconds elapsed{0};
};

struct Capabilities {
  bool generate = true;
  bool train = true;
  bool status = true;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind { Precondition, Transport, Timeout, Rejected, Server, JobFailed };

  BackendError(Kind kind, const std::string& what, std::optional<size_t> batch_index = std::nullopt,
               int http_status = 0, std::string code = {})
      : std::runtime_error(what), kind_(kind), batch_index_(batch_index), http_status_(http_status),
        code_(std::move(code)) {}

  Kind kind() const { return kind_; }
  std::optional<size_t> batch_index() const { return batch_index_; }
  int http_status() const { return http_status_; }
  const std::string& code() const { return code_; }

  bool retriable() const { return kind_ == Kind::Transport || kind_ == Kind::Timeout || kind_ == Kind::Server; }

 private:
  Kind kind_;
  std::optional<size_t> batch_index_;
  int http_status_;
  std::string code_;
};

/// A text-to-text model service. Each trained stage is a named model state;
/// `train` produces one under the requested name.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string identity() const = 0;
  virtual Capabilities capabilities() const = 0;

  /// Outputs are index-aligned with `inputs`.
  virtual Generation generate(std::string_view model, std::span<const std::string> inputs,
                              const GenerationConfig& config) = 0;

  virtual JobHandle train(std::string_view model, std::span<const TrainingPair> pairs, const Hyperparams& hyper) = 0;

  virtual JobStatus job_status(const JobHandle& job) = 0;
};

struct WaitOptions {
  std::chrono::milliseconds poll{500};
  std::chrono::milliseconds timeout{0};  // 0 waits forever
};

/// Polls until the job is done. Throws BackendError(JobFailed) with the
/// server's detail when the job fails, Timeout when `timeout` elapses.
JobStatus wait_for_job(Backend& backend, const JobHandle& job, const WaitOptions& options = {});

/// Truncates a decoded string the way a greedy decoder would: at the first
/// end-of-sequence marker (when enabled) and after max_new_tokens whitespace
/// tokens.
std::string apply_decode_limits(std::string_view output, const GenerationConfig& config);

inline constexpr std::string_view kEosMarker = "</s>";

}  // namespace explkit
