#include "explkit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "explkit/porter_stemmer.hpp"
#include "explkit/text.hpp"

namespace explkit {

using nlohmann::json;

double accuracy(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw MetricError("accuracy needs at least one pair");
  size_t correct = 0;
  for (const auto& p : pairs) {
    const auto gold = text::to_lower(text::trim(p.gold_label));
    const auto pred = text::to_lower(text::trim(p.predicted_label));
    if (!gold.empty() && gold == pred) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// 13a tokenizer
// ---------------------------------------------------------------------------

namespace {

// Byte length of the whitespace code point starting at s[i] (Python's
// str.isspace set), or 0.
size_t whitespace_len(std::string_view s, size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  if (c == ' ' || (c >= 0x09 && c <= 0x0D) || (c >= 0x1C && c <= 0x1F)) return 1;
  if (c < 0x80) return 0;
  auto byte = [&](size_t k) -> unsigned { return k < s.size() ? static_cast<unsigned char>(s[k]) : 0u; };
  if (c == 0xC2 && (byte(i + 1) == 0x85 || byte(i + 1) == 0xA0)) return 2;
  if (c == 0xE1 && byte(i + 1) == 0x9A && byte(i + 2) == 0x80) return 3;  // U+1680
  if (c == 0xE2 && byte(i + 1) == 0x80) {
    const unsigned b = byte(i + 2);
    if ((b >= 0x80 && b <= 0x8A) || b == 0xA8 || b == 0xA9 || b == 0xAF) return 3;  // U+2000..200A, 2028, 2029, 202F
  }
  if (c == 0xE2 && byte(i + 1) == 0x81 && byte(i + 2) == 0x9F) return 3;  // U+205F
  if (c == 0xE3 && byte(i + 1) == 0x80 && byte(i + 2) == 0x80) return 3;  // U+3000
  return 0;
}

size_t utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) return 2;
  if ((c & 0xF0) == 0xE0) return 3;
  if ((c & 0xF8) == 0xF0) return 4;
  return 1;
}

std::string_view py_rstrip(std::string_view s) {
  size_t pos = 0;
  size_t keep = 0;
  while (pos < s.size()) {
    if (size_t w = whitespace_len(s, pos)) {
      pos += w;
    } else {
      pos = std::min(s.size(), pos + utf8_len(static_cast<unsigned char>(s[pos])));
      keep = pos;
    }
  }
  return s.substr(0, keep);
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_13a_symbol(char ch) {
  const auto c = static_cast<unsigned char>(ch);
  return (c >= 0x7B && c <= 0x7E) || (c >= 0x5B && c <= 0x60) || (c >= 0x20 && c <= 0x26) ||
         (c >= 0x28 && c <= 0x2B) || (c >= 0x3A && c <= 0x40) || c == '/';
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (start < s.size()) {
    size_t end = s.find(' ', start);
    if (end == std::string_view::npos) end = s.size();
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

}  // namespace

std::string tokenize_13a(std::string_view line) {
  std::string s(line);
  replace_all(s, "<skipped>", "");
  replace_all(s, "-\n", "");
  replace_all(s, "\n", " ");
  replace_all(s, "&quot;", "\"");
  replace_all(s, "&amp;", "&");
  replace_all(s, "&lt;", "<");
  replace_all(s, "&gt;", ">");
  s = " " + s + " ";

  std::string a;
  a.reserve(s.size() * 2);
  for (char c : s) {
    if (is_13a_symbol(c)) {
      a += ' ';
      a += c;
      a += ' ';
    } else {
      a += c;
    }
  }

  // The three two-character rules replace non-overlapping matches left to right.
  std::string b;
  b.reserve(a.size() * 2);
  for (size_t i = 0; i < a.size();) {
    if (i + 1 < a.size() && !is_digit(a[i]) && (a[i + 1] == '.' || a[i + 1] == ',')) {
      b += a[i];
      b += ' ';
      b += a[i + 1];
      b += ' ';
      i += 2;
    } else {
      b += a[i++];
    }
  }

  std::string c;
  c.reserve(b.size() * 2);
  for (size_t i = 0; i < b.size();) {
    if (i + 1 < b.size() && (b[i] == '.' || b[i] == ',') && !is_digit(b[i + 1])) {
      c += ' ';
      c += b[i];
      c += ' ';
      c += b[i + 1];
      i += 2;
    } else {
      c += b[i++];
    }
  }

  std::string d;
  d.reserve(c.size() * 2);
  for (size_t i = 0; i < c.size();) {
    if (i + 1 < c.size() && is_digit(c[i]) && c[i + 1] == '-') {
      d += c[i];
      d += " - ";
      i += 2;
    } else {
      d += c[i++];
    }
  }

  std::string out;
  out.reserve(d.size());
  bool pending_space = false;
  for (size_t i = 0; i < d.size();) {
    if (size_t w = whitespace_len(d, i)) {
      pending_space = true;
      i += w;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += d[i++];
  }
  return out;
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (size_t n = 0; n < 4; ++n) {
    correct[n] += o.correct[n];
    total[n] += o.total[n];
  }
  sys_len += o.sys_len;
  ref_len += o.ref_len;
  return *this;
}

namespace {

using NgramCounts = std::map<std::string, size_t, std::less<>>;

NgramCounts extract_ngrams(const std::vector<std::string_view>& tokens) {
  NgramCounts counts;
  std::string key;
  for (size_t n = 1; n <= 4; ++n) {
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
      key.assign(tokens[i]);
      for (size_t k = 1; k < n; ++k) {
        key += ' ';
        key += tokens[i + k];
      }
      ++counts[key];
    }
  }
  return counts;
}

size_t ngram_order(std::string_view key) {
  return static_cast<size_t>(std::count(key.begin(), key.end(), ' ')) + 1;
}

}  // namespace

BleuStats bleu_segment_stats(std::string_view candidate, std::span<const std::string> references) {
  const std::string sys = tokenize_13a(py_rstrip(candidate));
  const auto sys_tokens = split_spaces(sys);

  NgramCounts ref_max;
  std::optional<size_t> closest_diff;
  size_t closest_len = 0;
  bool any_ref = false;
  for (const auto& r : references) {
    if (r.empty()) continue;
    any_ref = true;
    const std::string ref = tokenize_13a(py_rstrip(r));
    const auto ref_tokens = split_spaces(ref);
    const size_t len = ref_tokens.size();
    const size_t diff = len > sys_tokens.size() ? len - sys_tokens.size() : sys_tokens.size() - len;
    if (!closest_diff || diff < *closest_diff) {
      closest_diff = diff;
      closest_len = len;
    } else if (diff == *closest_diff && len < closest_len) {
      closest_len = len;
    }
    for (const auto& [ngram, count] : extract_ngrams(ref_tokens)) {
      auto& m = ref_max[ngram];
      m = std::max(m, count);
    }
  }
  if (!any_ref) throw MetricError("segment has no non-empty reference");

  BleuStats stats;
  stats.sys_len = sys_tokens.size();
  stats.ref_len = closest_len;
  for (const auto& [ngram, count] : extract_ngrams(sys_tokens)) {
    const size_t n = ngram_order(ngram) - 1;
    auto it = ref_max.find(ngram);
    stats.correct[n] += std::min(count, it == ref_max.end() ? size_t{0} : it->second);
    stats.total[n] += count;
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats) {
  std::array<double, 4> precisions{};
  double smooth_mteval = 1.0;
  for (size_t n = 0; n < 4; ++n) {
    if (stats.total[n] == 0) break;
    if (stats.correct[n] == 0) {
      smooth_mteval *= 2.0;
      precisions[n] = 100.0 / (smooth_mteval * static_cast<double>(stats.total[n]));
    } else {
      precisions[n] = 100.0 * static_cast<double>(stats.correct[n]) / static_cast<double>(stats.total[n]);
    }
  }
  double bp = 1.0;
  if (stats.sys_len < stats.ref_len) {
    bp = stats.sys_len > 0
             ? std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.sys_len))
             : 0.0;
  }
  double log_sum = 0.0;
  for (double p : precisions) {
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
  }
  return bp * std::exp(log_sum / 4.0);
}

double corpus_bleu(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references) {
  if (candidates.empty()) throw MetricError("BLEU needs at least one segment");
  if (candidates.size() != references.size())
    throw MetricError("BLEU got " + std::to_string(candidates.size()) + " candidates but " +
                      std::to_string(references.size()) + " reference lists");
  BleuStats total;
  for (size_t i = 0; i < candidates.size(); ++i) total += bleu_segment_stats(candidates[i], references[i]);
  return bleu_from_stats(total);
}

double corpus_bleu(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw MetricError("BLEU needs at least one pair");
  BleuStats total;
  for (const auto& p : pairs) total += bleu_segment_stats(p.candidate, p.references);
  return bleu_from_stats(total);
}

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

std::vector<std::string> tokenize_words(std::string_view s) {
  std::vector<std::string> out;
  out.reserve(s.size() / 2 + 1);
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  // One DP row; `diag` holds the previous row's value at j-1.
  std::array<size_t, 65> small{};
  std::vector<size_t> large;
  size_t* row = small.data();
  if (b.size() >= small.size()) {
    large.assign(b.size() + 1, 0);
    row = large.data();
  }
  for (size_t i = 0; i < a.size(); ++i) {
    size_t diag = 0;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t up = row[j];
      row[j] = a[i] == b[j - 1] ? diag + 1 : std::max(up, row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

namespace {

void require_pairs(std::span<const EvalPair> pairs, const char* metric) {
  if (pairs.empty()) throw MetricError(std::string(metric) + " needs at least one pair");
}

bool has_reference(std::span<const std::string> refs) {
  return std::any_of(refs.begin(), refs.end(), [](const std::string& r) { return !r.empty(); });
}

}  // namespace

double rouge_l_sentence(std::string_view candidate, std::span<const std::string> references) {
  if (!has_reference(references)) throw MetricError("ROUGE-L pair has no non-empty reference");
  const auto cand = tokenize_words(candidate);
  double best = 0.0;
  for (const auto& r : references) {
    if (r.empty()) continue;
    const auto ref = tokenize_words(r);
    const size_t lcs = lcs_length(cand, ref);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / static_cast<double>(cand.size());
    const double rec = static_cast<double>(lcs) / static_cast<double>(ref.size());
    best = std::max(best, 2.0 * p * rec / (p + rec));
  }
  return best;
}

double rouge_l(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "ROUGE-L");
  double sum = 0.0;
  for (const auto& p : pairs) sum += rouge_l_sentence(p.candidate, p.references);
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// METEOR
// ---------------------------------------------------------------------------

namespace {

size_t count_chunks(const std::vector<std::pair<size_t, size_t>>& pairs) {
  size_t chunks = 0;
  for (size_t k = 0; k < pairs.size(); ++k) {
    if (k == 0 || pairs[k].first != pairs[k - 1].first + 1 || pairs[k].second != pairs[k - 1].second + 1) ++chunks;
  }
  return chunks;
}

class AlignmentSearch {
 public:
  AlignmentSearch(std::span<const std::string> hyp, std::span<const std::string> ref) : hyp_(hyp), ref_(ref) {
    for (const auto& w : hyp) hyp_stem_.push_back(porter_stem(w));
    for (const auto& w : ref) ref_stem_.push_back(porter_stem(w));
    candidates_.resize(hyp.size());
    for (size_t i = 0; i < hyp.size(); ++i) {
      for (size_t j = 0; j < ref.size(); ++j) {
        if (hyp[i] == ref[j]) candidates_[i].push_back({j, true});
      }
      for (size_t j = 0; j < ref.size(); ++j) {
        if (hyp[i] != ref[j] && hyp_stem_[i] == ref_stem_[j]) candidates_[i].push_back({j, false});
      }
    }
    exact_suffix_.assign(hyp.size() + 1, 0);
    any_suffix_.assign(hyp.size() + 1, 0);
    for (size_t i = hyp.size(); i-- > 0;) {
      const bool has_exact = !candidates_[i].empty() && candidates_[i].front().exact;
      exact_suffix_[i] = exact_suffix_[i + 1] + (has_exact ? 1 : 0);
      any_suffix_[i] = any_suffix_[i + 1] + (candidates_[i].empty() ? 0 : 1);
    }
  }

  MeteorAlignment run() {
    greedy();
    if (best_.chunks > 1) {
      used_.assign(ref_.size(), false);
      dfs(0, 0, 0, 0);
    }
    return best_;
  }

 private:
  struct Candidate {
    size_t j;
    bool exact;
  };

  static constexpr size_t kNodeBudget = 100000;

  std::span<const std::string> hyp_;
  std::span<const std::string> ref_;
  std::vector<std::string> hyp_stem_;
  std::vector<std::string> ref_stem_;
  std::vector<std::vector<Candidate>> candidates_;
  std::vector<size_t> exact_suffix_;
  std::vector<size_t> any_suffix_;

  MeteorAlignment best_;
  std::vector<bool> used_;
  std::vector<std::pair<size_t, size_t>> cur_;
  size_t nodes_ = 0;

  // Exact pass, then stem pass; each prefers the reference position right
  // after the previous hypothesis word's match.
  void greedy() {
    std::vector<std::optional<size_t>> match(hyp_.size());
    std::vector<bool> exact(hyp_.size(), false);
    std::vector<bool> used(ref_.size(), false);
    for (bool exact_pass : {true, false}) {
      for (size_t i = 0; i < hyp_.size(); ++i) {
        if (match[i]) continue;
        std::optional<size_t> pick;
        for (const auto& c : candidates_[i]) {
          if (c.exact != exact_pass || used[c.j]) continue;
          if (i > 0 && match[i - 1] && c.j == *match[i - 1] + 1) {
            pick = c.j;
            break;
          }
          if (!pick) pick = c.j;
        }
        if (pick) {
          match[i] = pick;
          exact[i] = exact_pass;
          used[*pick] = true;
        }
      }
    }
    best_ = {};
    for (size_t i = 0; i < hyp_.size(); ++i) {
      if (!match[i]) continue;
      best_.pairs.push_back({i, *match[i]});
      ++best_.matches;
      if (exact[i]) ++best_.exact_matches;
    }
    best_.chunks = count_chunks(best_.pairs);
  }

  void dfs(size_t i, size_t exact, size_t total, size_t chunks) {
    if (nodes_++ > kNodeBudget) return;
    if (chunks >= best_.chunks) return;
    if (exact + exact_suffix_[i] < best_.exact_matches) return;
    if (total + any_suffix_[i] < best_.matches) return;
    if (i == hyp_.size()) {
      if (exact == best_.exact_matches && total == best_.matches) {
        best_.pairs = cur_;
        best_.chunks = chunks;
      }
      return;
    }

    auto extends = [&](size_t j) { return !cur_.empty() && cur_.back().first + 1 == i && cur_.back().second + 1 == j; };
    auto take = [&](const Candidate& c) {
      used_[c.j] = true;
      const size_t next_chunks = chunks + (extends(c.j) ? 0 : 1);
      cur_.push_back({i, c.j});
      dfs(i + 1, exact + (c.exact ? 1 : 0), total + 1, next_chunks);
      cur_.pop_back();
      used_[c.j] = false;
    };

    for (const auto& c : candidates_[i]) {
      if (!used_[c.j] && extends(c.j)) take(c);
    }
    for (const auto& c : candidates_[i]) {
      if (!used_[c.j] && !extends(c.j)) take(c);
    }
    dfs(i + 1, exact, total, chunks);
  }
};

}  // namespace

MeteorAlignment meteor_align(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  return AlignmentSearch(hypothesis, reference).run();
}

double meteor_sentence(std::string_view candidate, std::span<const std::string> references) {
  if (!has_reference(references)) throw MetricError("METEOR pair has no non-empty reference");
  const auto hyp = tokenize_words(candidate);
  double best = 0.0;
  for (const auto& r : references) {
    if (r.empty()) continue;
    const auto ref = tokenize_words(r);
    const auto al = meteor_align(hyp, ref);
    if (al.matches == 0) continue;
    const double m = static_cast<double>(al.matches);
    const double p = m / static_cast<double>(hyp.size());
    const double rec = m / static_cast<double>(ref.size());
    const double fmean = p * rec / (kMeteorAlpha * p + (1.0 - kMeteorAlpha) * rec);
    const double penalty = kMeteorGamma * std::pow(static_cast<double>(al.chunks) / m, kMeteorBeta);
    best = std::max(best, fmean * (1.0 - penalty));
  }
  return best;
}

double meteor(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "METEOR");
  double sum = 0.0;
  for (const auto& p : pairs) sum += meteor_sentence(p.candidate, p.references);
  return sum / static_cast<double>(pairs.size());
}

double recover_ratio(double acc_generated, double acc_gold) {
  if (!(acc_gold > 0.0)) throw MetricError("recover ratio needs a positive gold accuracy");
  return 100.0 * acc_generated / acc_gold;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> read_optional(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

json MetricReport::to_json() const {
  return json{{"accuracy", accuracy},
              {"bleu", optional_number(bleu)},
              {"rouge_l", optional_number(rouge_l)},
              {"meteor", optional_number(meteor)},
              {"n_evaluated", n_evaluated},
              {"n_parse_failures", n_parse_failures},
              {"n_with_references", n_with_references}};
}

MetricReport MetricReport::from_json(const json& j) {
  MetricReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.bleu = read_optional(j, "bleu");
  r.rouge_l = read_optional(j, "rouge_l");
  r.meteor = read_optional(j, "meteor");
  r.n_evaluated = j.at("n_evaluated").get<size_t>();
  r.n_parse_failures = j.value("n_parse_failures", size_t{0});
  r.n_with_references = j.value("n_with_references", size_t{0});
  return r;
}

MetricReport evaluate(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw MetricError("nothing to evaluate");
  MetricReport report;
  report.n_evaluated = pairs.size();
  report.accuracy = accuracy(pairs);
  std::vector<EvalPair> scored;
  for (const auto& p : pairs) {
    if (p.parse_failure) ++report.n_parse_failures;
    if (has_reference(p.references)) scored.push_back(p);
  }
  report.n_with_references = scored.size();
  if (!scored.empty()) {
    report.bleu = corpus_bleu(scored);
    report.rouge_l = rouge_l(scored);
    report.meteor = meteor(scored);
  }
  return report;
}

std::string flat_record(const MetricReport& report, const json& extra) {
  json j = json::object();
  for (const auto& [k, v] : extra.items()) j[k] = v;
  const json fields = report.to_json();
  for (const auto& [k, v] : fields.items()) j[k] = v;
  return j.dump();
}

std::string format_report_table(std::span<const std::pair<std::string, MetricReport>> rows) {
  size_t name_width = 4;
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());

  std::ostringstream out;
  auto cell = [&](const std::optional<double>& v, double scale) {
    out << std::setw(9);
    if (v) {
      out << std::fixed << std::setprecision(2) << *v * scale;
    } else {
      out << "-";
    }
  };
  out << std::left << std::setw(static_cast<int>(name_width)) << "run" << std::right << std::setw(9) << "Acc"
      << std::setw(9) << "BLEU" << std::setw(9) << "METEOR" << std::setw(9) << "Rouge-L" << std::setw(8) << "n"
      << std::setw(8) << "fail" << '\n';
  for (const auto& [name, r] : rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name << std::right;
    cell(r.accuracy, 100.0);
    cell(r.bleu, 1.0);
    cell(r.meteor, 100.0);
    cell(r.rouge_l, 100.0);
    out << std::setw(8) << r.n_evaluated << std::setw(8) << r.n_parse_failures << '\n';
  }
  return out.str();
}

}  // namespace explkit
