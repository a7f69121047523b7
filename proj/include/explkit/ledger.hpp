#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace explkit {

inline constexpr std::string_view kSemiLabelingStage = "semi_labeling";
inline constexpr std::string_view kInferPrefix = "infer/";

struct LedgerEntry {
  std::string stage;
  size_t calls = 0;
  std::chrono::nanoseconds wall_time{0};
  size_t pairs_used = 0;

  bool operator==(const LedgerEntry&) const = default;
};

/// Append-only record of backend work per stage. Training entries are named
/// after the stage, inference entries carry the "infer/" prefix, and
/// explanation generation for semi-labeling is "semi_labeling".
class Ledger {
 public:
  const LedgerEntry& record(std::string stage, size_t calls, std::chrono::nanoseconds wall_time, size_t pairs_used);

  const std::vector<LedgerEntry>& entries() const { return entries_; }

  bool has_stage(std::string_view stage) const;
  /// Sum of all entries carrying this stage name.
  std::optional<LedgerEntry> stage_total(std::string_view stage) const;

  std::chrono::nanoseconds total_time() const;
  size_t total_calls() const;
  size_t total_pairs() const;

  nlohmann::json to_json() const;
  static Ledger from_json(const nlohmann::json& j);

  bool operator==(const Ledger&) const = default;

 private:
  std::vector<LedgerEntry> entries_;
};

}  // namespace explkit
