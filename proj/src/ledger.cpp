#include "explkit/ledger.hpp"

namespace explkit {

const LedgerEntry& Ledger::record(std::string stage, size_t calls, std::chrono::nanoseconds wall_time,
                                  size_t pairs_used) {
  entries_.push_back({std::move(stage), calls, wall_time, pairs_used});
  return entries_.back();
}

bool Ledger::has_stage(std::string_view stage) const {
  for (const auto& e : entries_) {
    if (e.stage == stage) return true;
  }
  return false;
}

std::optional<LedgerEntry> Ledger::stage_total(std::string_view stage) const {
  std::optional<LedgerEntry> total;
  for (const auto& e : entries_) {
    if (e.stage != stage) continue;
    if (!total) total = LedgerEntry{e.stage, 0, std::chrono::nanoseconds{0}, 0};
    total->calls += e.calls;
    total->wall_time += e.wall_time;
    total->pairs_used += e.pairs_used;
  }
  return total;
}

std::chrono::nanoseconds Ledger::total_time() const {
  std::chrono::nanoseconds t{0};
  for (const auto& e : entries_) t += e.wall_time;
  return t;
}

size_t Ledger::total_calls() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.calls;
  return n;
}

size_t Ledger::total_pairs() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.pairs_used;
  return n;
}

nlohmann::json Ledger::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& e : entries_) {
    arr.push_back({{"stage", e.stage},
                   {"calls", e.calls},
                   {"wall_time_ns", e.wall_time.count()},
                   {"pairs_used", e.pairs_used}});
  }
  return {{"entries", arr}, {"total_time_ns", total_time().count()}, {"total_pairs", total_pairs()}};
}

Ledger Ledger::from_json(const nlohmann::json& j) {
  Ledger ledger;
  for (const auto& e : j.at("entries")) {
    ledger.record(e.at("stage").get<std::string>(), e.at("calls").get<size_t>(),
                  std::chrono::nanoseconds{e.at("wall_time_ns").get<int64_t>()}, e.at("pairs_used").get<size_t>());
  }
  return ledger;
}

}  // namespace explkit
