#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "explkit/corpus.hpp"

namespace explkit::testing {

inline std::filesystem::path data_dir() { return EXPLKIT_TEST_DATA; }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("explkit-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string random_words(std::mt19937_64& rng, size_t lo, size_t hi) {
  static const std::vector<std::string> vocab{"a",     "man",    "woman", "dog",   "runs",   "sits",  "on",
                                              "the",   "grass",  "is",    "not",   "red",    "blue",  "two",
                                              "kids",  "play",   "ball",  "inside", "outside", "sleeps", "eats",
                                              "food",  "because", "so",   "every", "person", "street", "with"};
  std::uniform_int_distribution<size_t> len(lo, hi);
  std::uniform_int_distribution<size_t> pick(0, vocab.size() - 1);
  const size_t n = len(rng);
  std::string out;
  for (size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += vocab[pick(rng)];
  }
  return out;
}

/// n NLI instances with distinct premises. The first `explained` instances
/// carry one gold explanation each (train split convention).
inline Dataset make_nli(size_t n, size_t explained, uint64_t seed = 7, Split split = Split::Train,
                        const std::string& name = "synthetic_nli") {
  std::mt19937_64 rng(seed);
  Dataset ds{name, split, {}};
  for (size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.id = "nli-" + std::to_string(i);
    inst.task = Task::NLI;
    inst.premise = "case " + std::to_string(i) + " " + random_words(rng, 3, 9);
    inst.hypothesis = random_words(rng, 2, 6);
    inst.gold_label = std::string(kNliLabels[i % kNliLabels.size()]);
    if (i < explained) inst.gold_explanations.push_back("because " + std::to_string(i) + " " + random_words(rng, 2, 10));
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

/// n CQA instances with three choices; every instance has an explanation.
inline Dataset make_cqa(size_t n, uint64_t seed = 11, Split split = Split::Train,
                        const std::string& name = "cose_synthetic") {
  std::mt19937_64 rng(seed);
  Dataset ds{name, split, {}};
  for (size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.id = "cqa-" + std::to_string(i);
    inst.task = Task::CQA;
    inst.question = "where would item " + std::to_string(i) + " be " + random_words(rng, 1, 4) + "?";
    inst.choices = {"kitchen " + std::to_string(i), "garage " + std::to_string(i), "office " + std::to_string(i)};
    inst.gold_label = inst.choices[i % 3];
    inst.gold_explanations.push_back(inst.gold_label + " is where " + random_words(rng, 2, 6));
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

}  // namespace explkit::testing
