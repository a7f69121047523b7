#include "explkit/backend.hpp"

#include <thread>

#include "explkit/text.hpp"

namespace explkit {

std::string_view to_string(DecodeMode) {
  return "greedy";
}

void GenerationConfig::validate() const {
  if (max_new_tokens < 1)
    throw BackendError(BackendError::Kind::Precondition,
                       "max_new_tokens must be >= 1, got " + std::to_string(max_new_tokens));
}

Hyperparams default_train_hyperparams() {
  return Hyperparams{
      {"epochs", 20},
      {"batch_size", 8},
      {"optimizer", "adamw"},
      {"learning_rate", 1e-4},
      {"adam_epsilon", 1e-8},
      {"max_grad_norm", 1.0},
      {"lr_schedule", "linear"},
      {"lr_schedule_start", 5e-5},
      {"early_stopping_patience", 10},
  };
}

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "queued";
}

JobState parse_job_state(std::string_view s) {
  if (s == "queued") return JobState::Queued;
  if (s == "running") return JobState::Running;
  if (s == "done") return JobState::Done;
  if (s == "failed") return JobState::Failed;
  throw BackendError(BackendError::Kind::Server, "unknown job state '" + std::string(s) + "'");
}

JobStatus wait_for_job(Backend& backend, const JobHandle& job, const WaitOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  while (true) {
    JobStatus status = backend.job_status(job);
    if (status.state == JobState::Done) return status;
    if (status.state == JobState::Failed) {
      constexpr size_t kExcerpt = 2000;
      std::string detail = status.detail.size() > kExcerpt ? status.detail.substr(status.detail.size() - kExcerpt)
                                                           : status.detail;
      throw BackendError(BackendError::Kind::JobFailed, "training job " + job.id + " failed: " + detail);
    }
    if (options.timeout.count() > 0 && std::chrono::steady_clock::now() - start > options.timeout)
      throw BackendError(BackendError::Kind::Timeout, "timed out waiting for job " + job.id);
    std::this_thread::sleep_for(options.poll);
  }
}

std::string apply_decode_limits(std::string_view output, const GenerationConfig& config) {
  if (config.stop_on_eos) {
    const size_t eos = output.find(kEosMarker);
    if (eos != std::string_view::npos) output = output.substr(0, eos);
  }
  auto tokens = text::split_whitespace(output);
  if (tokens.size() <= static_cast<size_t>(config.max_new_tokens)) return std::string(text::trim(output));
  tokens.resize(static_cast<size_t>(config.max_new_tokens));
  return text::join(tokens, " ");
}

}  // namespace explkit
