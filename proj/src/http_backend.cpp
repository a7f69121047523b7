#include "explkit/http_backend.hpp"

#include <atomic>
#include <thread>

#include "httplib.h"

namespace explkit {

using nlohmann::json;

namespace {

std::string batch_suffix(std::optional<size_t> batch_index) {
  return batch_index ? " (batch " + std::to_string(*batch_index) + ")" : std::string();
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw BackendError(BackendError::Kind::Precondition, "backend URL is empty");
  if (options_.batch_size == 0) options_.batch_size = 1;
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

json HttpBackend::generate_request(std::string_view model, std::span<const std::string> inputs,
                                   const GenerationConfig& config) {
  return json{{"model", model},
              {"inputs", std::vector<std::string>(inputs.begin(), inputs.end())},
              {"max_new_tokens", config.max_new_tokens},
              {"decode", to_string(config.decode)}};
}

json HttpBackend::train_request(std::string_view model, std::span<const TrainingPair> pairs, const Hyperparams& hyper) {
  auto arr = json::array();
  for (const auto& p : pairs) arr.push_back({{"input", p.input}, {"target", p.target}});
  return json{{"model", model}, {"pairs", arr}, {"hyper", hyper.is_null() ? json::object() : hyper}};
}

json HttpBackend::send(const std::string& method, const std::string& path, const json* body,
                       std::optional<size_t> batch_index) {
  const std::string where = method + " " + path + batch_suffix(batch_index);
  for (int attempt = 1;; ++attempt) {
    httplib::Client client(options_.base_url);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);

    httplib::Result res = method == "GET" ? client.Get(path) : client.Post(path, body->dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const auto kind = (err == httplib::Error::Read || err == httplib::Error::Write ||
                         err == httplib::Error::ConnectionTimeout)
                            ? BackendError::Kind::Timeout
                            : BackendError::Kind::Transport;
      throw BackendError(kind, where + ": " + httplib::to_string(err), batch_index);
    }

    const int status = res->status;
    if (status >= 500) {
      if (attempt < options_.max_attempts) {
        std::this_thread::sleep_for(options_.initial_backoff * (1 << (attempt - 1)));
        continue;
      }
      throw BackendError(BackendError::Kind::Server,
                         where + ": server error " + std::to_string(status) + " after " + std::to_string(attempt) +
                             " attempt(s): " + res->body,
                         batch_index, status);
    }
    if (status >= 400) {
      std::string code = "http_" + std::to_string(status);
      std::string message = res->body;
      auto parsed = json::parse(res->body, nullptr, false);
      if (parsed.is_object()) {
        if (parsed.contains("error") && parsed["error"].is_string()) code = parsed["error"].get<std::string>();
        if (parsed.contains("message") && parsed["message"].is_string())
          message = parsed["message"].get<std::string>();
      }
      throw BackendError(BackendError::Kind::Rejected, where + ": " + code + ": " + message, batch_index, status,
                         code);
    }
    auto parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object())
      throw BackendError(BackendError::Kind::Server, where + ": response is not a JSON object", batch_index, status);
    return parsed;
  }
}

Generation HttpBackend::generate(std::string_view model, std::span<const std::string> inputs,
                                 const GenerationConfig& config) {
  config.validate();
  Generation gen;
  gen.outputs.resize(inputs.size());
  gen.missed.assign(inputs.size(), false);
  if (inputs.empty()) return gen;

  const size_t n_batches = (inputs.size() + options_.batch_size - 1) / options_.batch_size;
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  std::optional<BackendError> first_error;

  auto worker = [&] {
    while (true) {
      const size_t b = next.fetch_add(1);
      if (b >= n_batches) return;
      {
        std::lock_guard lock(err_mu);
        if (first_error) return;
      }
      const size_t begin = b * options_.batch_size;
      const size_t end = std::min(inputs.size(), begin + options_.batch_size);
      try {
        const json body = generate_request(model, inputs.subspan(begin, end - begin), config);
        const json reply = send("POST", "/v1/generate", &body, b);
        const auto it = reply.find("outputs");
        if (it == reply.end() || !it->is_array() || it->size() != end - begin)
          throw BackendError(BackendError::Kind::Server,
                             "POST /v1/generate (batch " + std::to_string(b) + "): expected " +
                                 std::to_string(end - begin) + " outputs",
                             b);
        for (size_t i = begin; i < end; ++i) {
          const auto& out = (*it)[i - begin];
          if (!out.is_string())
            throw BackendError(BackendError::Kind::Server, "POST /v1/generate: non-string output", b);
          gen.outputs[i] = out.get<std::string>();
        }
      } catch (const BackendError& e) {
        std::lock_guard lock(err_mu);
        if (!first_error || b < first_error->batch_index().value_or(n_batches)) first_error = e;
      }
    }
  };

  const auto start = std::chrono::steady_clock::now();
  const size_t n_threads = std::min(options_.max_in_flight, n_batches);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  if (first_error) throw *first_error;
  gen.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
  return gen;
}

JobHandle HttpBackend::train(std::string_view model, std::span<const TrainingPair> pairs, const Hyperparams& hyper) {
  if (pairs.empty()) throw BackendError(BackendError::Kind::Precondition, "train needs at least one pair");
  const json body = train_request(model, pairs, hyper);
  const json reply = send("POST", "/v1/train", &body, std::nullopt);
  const auto it = reply.find("job_id");
  if (it == reply.end() || !it->is_string())
    throw BackendError(BackendError::Kind::Server, "POST /v1/train: reply lacks job_id");
  JobHandle job{it->get<std::string>(), std::string(model)};
  std::lock_guard lock(mu_);
  submitted_[job.id] = std::chrono::steady_clock::now();
  return job;
}

JobStatus HttpBackend::job_status(const JobHandle& job) {
  const json reply = send("GET", "/v1/jobs/" + job.id, nullptr, std::nullopt);
  JobStatus status;
  const auto state = reply.find("state");
  if (state == reply.end() || !state->is_string())
    throw BackendError(BackendError::Kind::Server, "GET /v1/jobs: reply lacks state");
  status.state = parse_job_state(state->get<std::string>());
  if (auto d = reply.find("detail"); d != reply.end()) status.detail = d->is_string() ? d->get<std::string>() : d->dump();
  std::lock_guard lock(mu_);
  if (auto it = submitted_.find(job.id); it != submitted_.end()) {
    status.elapsed =
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - it->second);
  }
  return status;
}

}  // namespace explkit
