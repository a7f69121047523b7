#include "explkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include "csv_reader.hpp"
#include "explkit/text.hpp"
#include "json.hpp"

namespace explkit {

using nlohmann::json;

std::string_view to_string(Task task) {
  return task == Task::NLI ? "nli" : "cqa";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "train";
}

Task parse_task(std::string_view s) {
  if (text::iequals(s, "nli")) return Task::NLI;
  if (text::iequals(s, "cqa")) return Task::CQA;
  throw CorpusError("unknown task '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (text::iequals(s, "train")) return Split::Train;
  if (text::iequals(s, "dev")) return Split::Dev;
  if (text::iequals(s, "test")) return Split::Test;
  throw CorpusError("unknown split '" + std::string(s) + "'");
}

SourceFormat parse_source_format(std::string_view s) {
  if (s == "esnli_csv") return SourceFormat::EsnliCsv;
  if (s == "cose_csv") return SourceFormat::CoseCsv;
  if (s == "canonical_jsonl") return SourceFormat::CanonicalJsonl;
  throw CorpusError("unknown source format '" + std::string(s) + "'");
}

std::vector<std::string> label_vocabulary(const Instance& inst) {
  if (inst.task == Task::CQA) return inst.choices;
  return {kNliLabels.begin(), kNliLabels.end()};
}

void validate(const Instance& inst, Split split) {
  if (inst.id.empty()) throw CorpusError("empty id");
  if (inst.gold_label.empty()) throw CorpusError("empty gold_label");
  if (inst.task == Task::NLI) {
    if (inst.premise.empty() || inst.hypothesis.empty())
      throw CorpusError("NLI instance needs premise and hypothesis");
    if (!inst.question.empty() || !inst.choices.empty())
      throw CorpusError("NLI instance must not carry question/choices");
    if (std::find(kNliLabels.begin(), kNliLabels.end(), inst.gold_label) == kNliLabels.end())
      throw CorpusError("unknown label '" + inst.gold_label + "'");
  } else {
    if (inst.question.empty()) throw CorpusError("CQA instance needs a question");
    if (!inst.premise.empty() || !inst.hypothesis.empty())
      throw CorpusError("CQA instance must not carry premise/hypothesis");
    if (inst.choices.size() != 3 && inst.choices.size() != 5)
      throw CorpusError("CQA instance needs 3 or 5 choices, got " + std::to_string(inst.choices.size()));
    if (std::find(inst.choices.begin(), inst.choices.end(), inst.gold_label) == inst.choices.end())
      throw CorpusError("answer '" + inst.gold_label + "' is not among the choices");
  }
  const size_t max_expl = split == Split::Train ? 1 : 3;
  if (inst.gold_explanations.size() > max_expl) {
    throw CorpusError(std::string(to_string(split)) + " instances carry at most " + std::to_string(max_expl) +
                      " explanation(s), got " + std::to_string(inst.gold_explanations.size()));
  }
}

const Instance* Dataset::find(std::string_view id) const {
  for (const auto& inst : instances) {
    if (inst.id == id) return &inst;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// CosE mapping
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    auto item = text::trim(s.substr(start, comma - start));
    if (!item.empty()) out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

}  // namespace

CoseMapping CoseMapping::parse(std::istream& in) {
  CoseMapping m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = text::trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw CorpusError("mapping line " + std::to_string(lineno) + ": expected key = value");
    auto key = text::trim(body.substr(0, eq));
    auto value = text::trim(body.substr(eq + 1));
    if (key == "id") {
      m.id_column = value;
    } else if (key == "question") {
      m.question_column = value;
    } else if (key == "choices") {
      m.choice_columns = split_list(value);
    } else if (key == "choices_column") {
      m.choices_column = value;
    } else if (key == "choices_separator") {
      m.choices_separator = value;
    } else if (key == "answer") {
      m.answer_column = value;
    } else if (key == "explanation") {
      m.explanation_columns = split_list(value);
    } else {
      throw CorpusError("mapping line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
    }
  }
  if (m.choice_columns.empty() && m.choices_column.empty())
    throw CorpusError("mapping must name choice columns (choices) or a choices_column");
  if (m.choices_separator.empty()) throw CorpusError("choices_separator must not be empty");
  return m;
}

CoseMapping CoseMapping::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open mapping file " + path.string());
  return parse(in);
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace {

class Header {
 public:
  explicit Header(const std::vector<std::string>& names) {
    for (size_t i = 0; i < names.size(); ++i) index_[std::string(text::trim(names[i]))] = i;
    width_ = names.size();
  }

  std::optional<size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  size_t require(const std::string& name) const {
    auto idx = find(name);
    if (!idx) throw CorpusError("missing required column '" + name + "'");
    return *idx;
  }

  size_t width() const { return width_; }

 private:
  std::map<std::string, size_t> index_;
  size_t width_ = 0;
};

void add_explanations(Instance& inst, const std::vector<std::string>& row, const std::vector<size_t>& cols) {
  for (size_t c : cols) {
    auto e = text::trim(row[c]);
    if (!e.empty()) inst.gold_explanations.emplace_back(e);
  }
}

class Collector {
 public:
  Collector(IngestResult& result, Split split) : result_(result), split_(split) {}

  void accept(Instance inst, size_t line) {
    try {
      validate(inst, split_);
      if (!ids_.insert(inst.id).second) throw CorpusError("duplicate id '" + inst.id + "'");
      result_.dataset.instances.push_back(std::move(inst));
    } catch (const CorpusError& e) {
      reject(line, e.what());
    }
  }

  void reject(size_t line, std::string message) { result_.rejected.push_back({line, std::move(message)}); }

 private:
  IngestResult& result_;
  Split split_;
  std::unordered_set<std::string> ids_;
};

void ingest_esnli(std::istream& in, Split split, IngestResult& result) {
  detail::CsvReader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row)) throw CorpusError("empty e-SNLI file");
  Header header(row);
  const size_t label_col = header.require("gold_label");
  const size_t s1_col = header.require("Sentence1");
  const size_t s2_col = header.require("Sentence2");
  const auto id_col = header.find("pairID");
  std::vector<size_t> expl_cols;
  for (const char* name : {"Explanation_1", "Explanation_2", "Explanation_3"}) {
    if (auto c = header.find(name)) expl_cols.push_back(*c);
  }

  Collector collector(result, split);
  size_t data_row = 0;
  while (true) {
    try {
      if (!reader.next(row)) break;
    } catch (const detail::CsvError& e) {
      collector.reject(e.line, e.what());
      break;
    }
    const size_t line = reader.record_line();
    const size_t index = data_row++;
    if (row.size() != header.width()) {
      collector.reject(line, "malformed row: expected " + std::to_string(header.width()) + " fields, got " +
                                 std::to_string(row.size()));
      continue;
    }
    Instance inst;
    inst.task = Task::NLI;
    inst.id = id_col ? std::string(text::trim(row[*id_col])) : std::string(to_string(split)) + "-" + std::to_string(index);
    inst.premise = text::trim(row[s1_col]);
    inst.hypothesis = text::trim(row[s2_col]);
    inst.gold_label = text::to_lower(text::trim(row[label_col]));
    add_explanations(inst, row, expl_cols);
    collector.accept(std::move(inst), line);
  }
}

std::vector<std::string> split_on(std::string_view s, std::string_view sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text::trim(s.substr(start)));
      break;
    }
    out.emplace_back(text::trim(s.substr(start, pos - start)));
    start = pos + sep.size();
  }
  return out;
}

void ingest_cose(std::istream& in, Split split, const CoseMapping& mapping, IngestResult& result) {
  detail::CsvReader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row)) throw CorpusError("empty CosE file");
  Header header(row);
  const size_t q_col = header.require(mapping.question_column);
  const size_t a_col = header.require(mapping.answer_column);
  std::optional<size_t> id_col;
  if (!mapping.id_column.empty()) id_col = header.require(mapping.id_column);
  std::vector<size_t> choice_cols;
  for (const auto& c : mapping.choice_columns) choice_cols.push_back(header.require(c));
  std::optional<size_t> choices_col;
  if (choice_cols.empty()) choices_col = header.require(mapping.choices_column);
  std::vector<size_t> expl_cols;
  for (const auto& c : mapping.explanation_columns) expl_cols.push_back(header.require(c));

  Collector collector(result, split);
  size_t data_row = 0;
  while (true) {
    try {
      if (!reader.next(row)) break;
    } catch (const detail::CsvError& e) {
      collector.reject(e.line, e.what());
      break;
    }
    const size_t line = reader.record_line();
    const size_t index = data_row++;
    if (row.size() != header.width()) {
      collector.reject(line, "malformed row: expected " + std::to_string(header.width()) + " fields, got " +
                                 std::to_string(row.size()));
      continue;
    }
    Instance inst;
    inst.task = Task::CQA;
    inst.id = id_col ? std::string(text::trim(row[*id_col])) : std::string(to_string(split)) + "-" + std::to_string(index);
    inst.question = text::trim(row[q_col]);
    if (choices_col) {
      inst.choices = split_on(row[*choices_col], mapping.choices_separator);
    } else {
      for (size_t c : choice_cols) inst.choices.emplace_back(text::trim(row[c]));
    }
    inst.gold_label = text::trim(row[a_col]);
    // Answers are matched case-insensitively and stored with the choice's spelling.
    for (const auto& choice : inst.choices) {
      if (choice != inst.gold_label && text::iequals(choice, inst.gold_label)) {
        inst.gold_label = choice;
        break;
      }
    }
    add_explanations(inst, row, expl_cols);
    collector.accept(std::move(inst), line);
  }
}

std::string get_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw CorpusError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::vector<std::string> get_string_list(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_array()) throw CorpusError(std::string("field '") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw CorpusError(std::string("field '") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

void ingest_canonical(std::istream& in, Split split, IngestResult& result) {
  Collector collector(result, split);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    Instance inst;
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw CorpusError("record must be a JSON object");
      inst.id = get_string(j, "id");
      inst.task = parse_task(get_string(j, "task"));
      inst.premise = get_string(j, "premise");
      inst.hypothesis = get_string(j, "hypothesis");
      inst.question = get_string(j, "question");
      inst.choices = get_string_list(j, "choices");
      inst.gold_label = get_string(j, "label");
      inst.gold_explanations = get_string_list(j, "explanations");
    } catch (const json::exception& e) {
      collector.reject(lineno, std::string("malformed record: ") + e.what());
      continue;
    } catch (const CorpusError& e) {
      collector.reject(lineno, e.what());
      continue;
    }
    collector.accept(std::move(inst), lineno);
  }
}

}  // namespace

IngestResult ingest(std::istream& in, SourceFormat format, Split split, const IngestOptions& options) {
  IngestResult result;
  result.dataset.name = options.name;
  result.dataset.split = split;
  switch (format) {
    case SourceFormat::EsnliCsv:
      ingest_esnli(in, split, result);
      break;
    case SourceFormat::CoseCsv:
      if (!options.cose_mapping) throw CorpusError("cose_csv ingestion needs a column mapping");
      ingest_cose(in, split, *options.cose_mapping, result);
      break;
    case SourceFormat::CanonicalJsonl:
      ingest_canonical(in, split, result);
      break;
  }
  return result;
}

IngestResult ingest(const std::filesystem::path& path, SourceFormat format, Split split, const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  IngestOptions opts = options;
  if (opts.name.empty()) opts.name = path.stem().string();
  return ingest(in, format, split, opts);
}

Dataset load_canonical(const std::filesystem::path& path, Split split, std::string name) {
  IngestOptions opts;
  opts.name = std::move(name);
  auto result = ingest(path, SourceFormat::CanonicalJsonl, split, opts);
  if (!result.rejected.empty()) {
    const auto& first = result.rejected.front();
    throw CorpusError(path.string() + ":" + std::to_string(first.line) + ": " + first.message + " (" +
                      std::to_string(result.rejected.size()) + " rejected row(s))");
  }
  return std::move(result.dataset);
}

void write_canonical(const Dataset& ds, std::ostream& out) {
  for (const auto& inst : ds.instances) {
    json j;
    j["id"] = inst.id;
    j["task"] = to_string(inst.task);
    if (inst.task == Task::NLI) {
      j["premise"] = inst.premise;
      j["hypothesis"] = inst.hypothesis;
    } else {
      j["question"] = inst.question;
      j["choices"] = inst.choices;
    }
    j["label"] = inst.gold_label;
    j["explanations"] = inst.gold_explanations;
    out << j.dump() << '\n';
  }
}

void save_canonical(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  write_canonical(ds, out);
}

// ---------------------------------------------------------------------------
// Budgets
// ---------------------------------------------------------------------------

size_t budget_count(size_t n, double budget_percent) {
  if (!(budget_percent > 0.0 && budget_percent <= 100.0))
    throw CorpusError("budget_percent must be in (0, 100], got " + std::to_string(budget_percent));
  // The epsilon keeps exact products like 30% of 10 from landing at 2.999...
  const long double exact = static_cast<long double>(budget_percent) * static_cast<long double>(n) / 100.0L;
  return static_cast<size_t>(std::floor(exact + 1e-9L));
}

std::vector<size_t> seeded_permutation(size_t n, uint64_t seed) {
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (size_t i = n; i > 1; --i) {
    const uint64_t bound = i;
    const uint64_t threshold = (0 - bound) % bound;
    uint64_t r = rng();
    while (r < threshold) r = rng();
    std::swap(perm[i - 1], perm[r % bound]);
  }
  return perm;
}

DatasetView::DatasetView(const Dataset& base, double budget_percent, uint64_t seed,
                         std::set<std::string, std::less<>> explained)
    : base_(&base), budget_percent_(budget_percent), seed_(seed), explained_(std::move(explained)) {}

DatasetView sample_budget(const Dataset& base, double budget_percent, uint64_t seed) {
  const size_t target = budget_count(base.size(), budget_percent);
  std::vector<const Instance*> bearing;
  for (const auto& inst : base.instances) {
    if (inst.has_explanation()) bearing.push_back(&inst);
  }
  const size_t take = std::min(target, bearing.size());
  const auto perm = seeded_permutation(bearing.size(), seed);
  std::set<std::string, std::less<>> explained;
  for (size_t k = 0; k < take; ++k) explained.insert(bearing[perm[k]]->id);
  return DatasetView(base, budget_percent, seed, std::move(explained));
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

namespace {

void mean_sd(const std::vector<size_t>& xs, std::optional<double>& mean, std::optional<double>& sd) {
  if (xs.empty()) return;
  double sum = 0.0;
  for (size_t x : xs) sum += static_cast<double>(x);
  const double m = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (size_t x : xs) ss += (static_cast<double>(x) - m) * (static_cast<double>(x) - m);
  mean = m;
  sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

}  // namespace

DatasetStats compute_stats(const Dataset& ds) {
  DatasetStats stats;
  stats.count = ds.size();
  std::vector<size_t> input_lengths;
  std::vector<size_t> expl_lengths;
  input_lengths.reserve(ds.size());
  for (const auto& inst : ds.instances) {
    if (inst.task == Task::NLI) {
      input_lengths.push_back(text::split_whitespace(inst.premise).size() +
                              text::split_whitespace(inst.hypothesis).size());
    } else {
      input_lengths.push_back(text::split_whitespace(inst.question).size());
    }
    for (const auto& e : inst.gold_explanations) expl_lengths.push_back(text::split_whitespace(e).size());
  }
  stats.explanation_count = expl_lengths.size();
  mean_sd(input_lengths, stats.mean_input_tokens, stats.sd_input_tokens);
  mean_sd(expl_lengths, stats.mean_expl_tokens, stats.sd_expl_tokens);
  return stats;
}

}  // namespace explkit
