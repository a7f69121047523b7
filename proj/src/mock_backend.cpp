#include "explkit/mock_backend.hpp"

namespace explkit {

std::string_view to_string(MockMode mode) {
  switch (mode) {
    case MockMode::Echo: return "echo";
    case MockMode::Table: return "table";
    case MockMode::Oracle: return "oracle";
  }
  return "echo";
}

std::optional<StageKind> stage_from_model_name(std::string_view model) {
  const size_t slash = model.rfind('/');
  const auto tail = slash == std::string_view::npos ? model : model.substr(slash + 1);
  for (StageKind stage : kAllStages) {
    if (to_string(stage) == tail) return stage;
  }
  return std::nullopt;
}

std::unique_ptr<MockBackend> MockBackend::echo() {
  return std::unique_ptr<MockBackend>(new MockBackend(MockMode::Echo));
}

std::unique_ptr<MockBackend> MockBackend::table(std::map<std::string, std::string> entries) {
  auto mock = std::unique_ptr<MockBackend>(new MockBackend(MockMode::Table));
  mock->table_ = std::move(entries);
  return mock;
}

std::unique_ptr<MockBackend> MockBackend::oracle(std::span<const Dataset* const> gold) {
  auto mock = std::unique_ptr<MockBackend>(new MockBackend(MockMode::Oracle));
  auto& tables = mock->oracle_;
  for (const Dataset* ds : gold) {
    for (const auto& inst : ds->instances) {
      tables[StageKind::PtEPredictor].emplace(render_input(inst, StageKind::PtEPredictor), inst.gold_label);
      if (!inst.has_explanation()) continue;
      const auto& expl = inst.gold_explanations.front();
      tables[StageKind::JointStage].emplace(render_input(inst, StageKind::JointStage),
                                            render_target(inst, StageKind::JointStage));
      tables[StageKind::EtPExplainer].emplace(render_input(inst, StageKind::EtPExplainer), expl);
      tables[StageKind::PtEExplainer].emplace(
          render_input(inst, StageKind::PtEExplainer, {.label = inst.gold_label, .explanation = std::nullopt}), expl);
      for (const auto& e : inst.gold_explanations) {
        tables[StageKind::EtPPredictor].emplace(
            render_input(inst, StageKind::EtPPredictor, {.label = std::nullopt, .explanation = e}), inst.gold_label);
        tables[StageKind::RtoL].emplace(render_input(inst, StageKind::RtoL, {.label = std::nullopt, .explanation = e}),
                                        inst.gold_label);
      }
    }
  }
  return mock;
}

std::string MockBackend::identity() const {
  return "mock:" + std::string(to_string(mode_));
}

std::string MockBackend::answer(std::string_view model, const std::string& input, bool& missed) const {
  missed = false;
  switch (mode_) {
    case MockMode::Echo:
      return input;
    case MockMode::Table: {
      auto it = table_.find(input);
      if (it != table_.end()) return it->second;
      break;
    }
    case MockMode::Oracle: {
      const auto stage = stage_from_model_name(model);
      if (!stage) break;
      auto tit = oracle_.find(*stage);
      if (tit == oracle_.end()) break;
      auto it = tit->second.find(input);
      if (it != tit->second.end()) return it->second;
      break;
    }
  }
  missed = true;
  return {};
}

Generation MockBackend::generate(std::string_view model, std::span<const std::string> inputs,
                                 const GenerationConfig& config) {
  config.validate();
  Generation gen;
  gen.outputs.reserve(inputs.size());
  gen.missed.reserve(inputs.size());
  for (const auto& input : inputs) {
    bool missed = false;
    gen.outputs.push_back(apply_decode_limits(answer(model, input, missed), config));
    gen.missed.push_back(missed);
  }
  gen.elapsed = generate_latency_ * static_cast<int64_t>(inputs.size());

  std::lock_guard lock(mu_);
  for (const auto& input : inputs) {
    log_.push_back({MockCall::Kind::Generate, std::string(model), input, config, {}, {}});
  }
  return gen;
}

JobHandle MockBackend::train(std::string_view model, std::span<const TrainingPair> pairs, const Hyperparams& hyper) {
  if (pairs.empty()) throw BackendError(BackendError::Kind::Precondition, "train needs at least one pair");
  std::lock_guard lock(mu_);
  JobHandle job{"mock-job-" + std::to_string(jobs_.size() + 1), std::string(model)};
  jobs_[job.id] = JobStatus{JobState::Done, "mock: accepted " + std::to_string(pairs.size()) + " pairs", train_latency_};
  log_.push_back({MockCall::Kind::Train, std::string(model), {}, {}, {pairs.begin(), pairs.end()}, hyper});
  return job;
}

JobStatus MockBackend::job_status(const JobHandle& job) {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job.id);
  if (it == jobs_.end())
    throw BackendError(BackendError::Kind::Rejected, "unknown job '" + job.id + "'", std::nullopt, 404, "not_found");
  return it->second;
}

std::vector<MockCall> MockBackend::call_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

size_t MockBackend::generate_count() const {
  std::lock_guard lock(mu_);
  size_t n = 0;
  for (const auto& c : log_) n += c.kind == MockCall::Kind::Generate;
  return n;
}

size_t MockBackend::train_count() const {
  std::lock_guard lock(mu_);
  size_t n = 0;
  for (const auto& c : log_) n += c.kind == MockCall::Kind::Train;
  return n;
}

}  // namespace explkit
