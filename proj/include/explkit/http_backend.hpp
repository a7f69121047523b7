#pragma once

#include <chrono>
#include <map>
#include <mutex>

#include "explkit/backend.hpp"

namespace explkit {

struct HttpBackendOptions {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  std::chrono::milliseconds timeout{120000};
  size_t batch_size = 32;
  size_t max_in_flight = 1;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
};

/// Client for the model-server wire protocol:
///
///   POST /v1/generate {model, inputs, max_new_tokens, decode} -> {outputs}
///   POST /v1/train    {model, pairs: [{input, target}], hyper} -> {job_id}
///   GET  /v1/jobs/{id} -> {state, detail}
///
/// 4xx replies ({error, message}) surface as Rejected; 5xx replies are
/// retried with exponential backoff up to max_attempts. Generate requests are
/// split into batches, up to max_in_flight of them concurrently, and the
/// outputs reassembled in request order.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  std::string identity() const override { return "http:" + options_.base_url; }
  Capabilities capabilities() const override { return {}; }

  Generation generate(std::string_view model, std::span<const std::string> inputs,
                      const GenerationConfig& config) override;
  JobHandle train(std::string_view model, std::span<const TrainingPair> pairs, const Hyperparams& hyper) override;
  JobStatus job_status(const JobHandle& job) override;

  const HttpBackendOptions& options() const { return options_; }

  static nlohmann::json generate_request(std::string_view model, std::span<const std::string> inputs,
                                         const GenerationConfig& config);
  static nlohmann::json train_request(std::string_view model, std::span<const TrainingPair> pairs,
                                      const Hyperparams& hyper);

 private:
  nlohmann::json send(const std::string& method, const std::string& path, const nlohmann::json* body,
                      std::optional<size_t> batch_index);

  HttpBackendOptions options_;
  std::mutex mu_;
  std::map<std::string, std::chrono::steady_clock::time_point> submitted_;
};

}  // namespace explkit
