#pragma once

#include <string>
#include <string_view>

#include "explkit/taskformat.hpp"

namespace explkit {

enum class Provenance { Gold, SemiLabeled };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

struct TrainingPair {
  StageKind stage = StageKind::JointStage;
  std::string input;
  std::string target;
  std::string source_id;
  Provenance provenance = Provenance::Gold;

  bool operator==(const TrainingPair&) const = default;
  auto operator<=>(const TrainingPair&) const = default;
};

}  // namespace explkit
