#include <cmath>
#include <fstream>
#include <functional>
#include <random>

#include "doctest.h"
#include "explkit/metrics.hpp"
#include "explkit/porter_stemmer.hpp"
#include "support.hpp"

using namespace explkit;
using nlohmann::json;

namespace {

std::vector<std::string> toks(std::string_view s) { return tokenize_words(s); }

bool is_subsequence(const std::vector<std::string>& sub, const std::vector<std::string>& of) {
  size_t j = 0;
  for (const auto& t : of) {
    if (j < sub.size() && sub[j] == t) ++j;
  }
  return j == sub.size();
}

// Longest subsequence of a that is also a subsequence of b, by enumeration.
size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  size_t best = 0;
  for (uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    std::vector<std::string> sub;
    for (size_t i = 0; i < a.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(a[i]);
    }
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

EvalPair pair(std::string cand, std::vector<std::string> refs, std::string gold = "a", std::string pred = "a") {
  return {"id", std::move(cand), std::move(refs), std::move(gold), std::move(pred), false};
}

}  // namespace

TEST_CASE("13a tokenization") {
  CHECK(tokenize_13a("A man is walking.") == "A man is walking .");
  CHECK(tokenize_13a("He paid 1,000 dollars, then left.") == "He paid 1,000 dollars , then left .");
  CHECK(tokenize_13a("The 3-year-old girl") == "The 3 - year-old girl");
  CHECK(tokenize_13a("fish &amp; chips &quot;tasty&quot;") == "fish & chips \" tasty \"");
  CHECK(tokenize_13a("Tom's (red) dog:") == "Tom's ( red ) dog :");
  CHECK(tokenize_13a("  spaced   out  ") == "spaced out");
  CHECK(tokenize_13a("") == "");
}

TEST_CASE("bleu matches the reference scorer on frozen vectors") {
  std::ifstream in(testing::data_dir() / "bleu_vectors.json");
  REQUIRE(in);
  const json data = json::parse(in);
  REQUIRE(data["vectors"].size() == 20);
  for (const auto& v : data["vectors"]) {
    std::vector<std::string> cands;
    std::vector<std::vector<std::string>> refs;
    for (const auto& seg : v["segments"]) {
      cands.push_back(seg["candidate"]);
      refs.push_back(seg["references"].get<std::vector<std::string>>());
    }
    INFO(v["name"].get<std::string>());
    CHECK(std::abs(corpus_bleu(cands, refs) - v["bleu"].get<double>()) <= 1e-4);
  }
}

TEST_CASE("bleu hand-derived case") {
  const std::vector<std::string> c{"a b c d e"};
  const std::vector<std::vector<std::string>> r{{"a b c d"}};
  CHECK(std::abs(corpus_bleu(c, r) - 66.87) <= 0.01);
}

TEST_CASE("bleu statistics") {
  const std::vector<std::string> refs{"the cat sat", "", "the the mat"};
  auto s = bleu_segment_stats("the the the cat", refs);
  CHECK(s.correct[0] == 3);
  CHECK(s.total[0] == 4);
  CHECK(s.sys_len == 4);
  CHECK(s.ref_len == 3);
  const std::vector<std::string> empty{""};
  CHECK_THROWS_AS(bleu_segment_stats("x", empty), MetricError);
  BleuStats zero;
  CHECK(bleu_from_stats(zero) == 0.0);
}

TEST_CASE("bleu is corpus-level, not a mean of sentences") {
  const std::vector<std::string> c{"a b c d", "x"};
  const std::vector<std::vector<std::string>> r{{"a b c d"}, {"y"}};
  BleuStats total = bleu_segment_stats(c[0], r[0]);
  total += bleu_segment_stats(c[1], r[1]);
  CHECK(corpus_bleu(c, r) == doctest::Approx(bleu_from_stats(total)));
}

TEST_CASE("word tokenizer") {
  CHECK(toks("The dog's bone, 2x!") == std::vector<std::string>{"the", "dog", "s", "bone", "2x"});
  CHECK(toks("caf\xc3\xa9 ok") == std::vector<std::string>{"caf\xc3\xa9", "ok"});
}

TEST_CASE("lcs equals enumeration on random token strings") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(0, 9), sym(0, 3);
  for (int k = 0; k < 2000; ++k) {
    std::vector<std::string> a(static_cast<size_t>(len(rng))), b(static_cast<size_t>(len(rng)));
    for (auto& t : a) t = std::string(1, static_cast<char>('a' + sym(rng)));
    for (auto& t : b) t = std::string(1, static_cast<char>('a' + sym(rng)));
    REQUIRE(lcs_length(a, b) == brute_lcs(a, b));
    REQUIRE(lcs_length(a, b) == lcs_length(b, a));
  }
}

TEST_CASE("rouge-l") {
  const std::vector<std::string> refs{"police killed the gunman"};
  CHECK(rouge_l_sentence("police kill the gunman", refs) == doctest::Approx(0.75));
  CHECK(rouge_l_sentence("the gunman kill police", refs) == doctest::Approx(0.5));
  const std::vector<std::string> two{"x y", "police killed the gunman"};
  CHECK(rouge_l_sentence("police killed the gunman", two) == doctest::Approx(1.0));
  const std::vector<std::string> one{"a"};
  CHECK(rouge_l_sentence("", one) == 0.0);
  const std::vector<EvalPair> pairs{pair("a b", {"a b"}), pair("c", {"d"})};
  CHECK(rouge_l(pairs) == doctest::Approx(0.5));
}

TEST_CASE("porter stemmer matches frozen vectors") {
  std::ifstream in(testing::data_dir() / "porter_vectors.tsv");
  REQUIRE(in);
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    const auto word = line.substr(0, tab);
    INFO(word);
    CHECK(porter_stem(word) == line.substr(tab + 1));
    ++n;
  }
  CHECK(n > 2000);
}

TEST_CASE("meteor alignment") {
  const auto h = toks("the cats sat on the mat");
  const auto r = toks("on the mat the cat sat");
  auto a = meteor_align(h, r);
  CHECK(a.matches == 6);
  CHECK(a.exact_matches == 5);
  CHECK(a.chunks == 2);
  const auto none = meteor_align(toks("x y"), toks("z"));
  CHECK(none.matches == 0);
  CHECK(none.chunks == 0);
}

TEST_CASE("meteor formula") {
  const std::vector<std::string> one{"cat"};
  CHECK(meteor_sentence("cat", one) == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<std::string> self{"the cat sat"};
  CHECK(std::abs(meteor_sentence("the cat sat", self) - 0.98148) <= 1e-4);
  const std::vector<std::string> ref{"a b c d"};
  // 2 matches, P = 1, R = 1/2, Fmean = 10 P R / (R + 9 P), 2 chunks.
  const double p = 1.0, rr = 0.5;
  const double fmean = p * rr / (kMeteorAlpha * p + (1 - kMeteorAlpha) * rr);
  const double penalty = kMeteorGamma * std::pow(2.0 / 2.0, kMeteorBeta);
  CHECK(meteor_sentence("a c", ref) == doctest::Approx(fmean * (1 - penalty)));
  CHECK(meteor_sentence("zzz", ref) == 0.0);
}

TEST_CASE("recover ratio") {
  CHECK(recover_ratio(90.31, 97.81) == doctest::Approx(92.332));
  CHECK(recover_ratio(0.5, 0.5) == 100.0);
  CHECK_THROWS_AS(recover_ratio(1.0, 0.0), MetricError);
}

TEST_CASE("accuracy ignores case and whitespace, empty never matches") {
  const std::vector<EvalPair> pairs{pair("", {}, "Neutral", " neutral "), pair("", {}, "entailment", ""),
                                    pair("", {}, "", ""), pair("", {}, "fridge", "oven")};
  CHECK(accuracy(pairs) == doctest::Approx(0.25));
}

TEST_CASE("evaluate only scores generation on pairs with references") {
  std::vector<EvalPair> pairs{pair("a b c d e", {"a b c d e"}), pair("x", {}), pair("y", {""})};
  pairs[1].parse_failure = true;
  auto r = evaluate(pairs);
  CHECK(r.n_evaluated == 3);
  CHECK(r.n_parse_failures == 1);
  CHECK(r.n_with_references == 1);
  REQUIRE(r.bleu);
  CHECK(*r.bleu == doctest::Approx(100.0));
  CHECK(*r.rouge_l == doctest::Approx(1.0));
  CHECK(MetricReport::from_json(r.to_json()) == r);

  const std::vector<EvalPair> unref{pair("x", {})};
  auto u = evaluate(unref);
  CHECK_FALSE(u.bleu.has_value());
  CHECK(u.to_json()["bleu"].is_null());
  CHECK(MetricReport::from_json(u.to_json()) == u);
}

TEST_CASE("report formatting") {
  MetricReport r;
  r.accuracy = 0.9081;
  r.bleu = 33.5;
  r.meteor = 0.4;
  r.rouge_l = 0.5;
  r.n_evaluated = 10;
  const std::vector<std::pair<std::string, MetricReport>> rows{{"pte", r}};
  const auto table = format_report_table(rows);
  CHECK(table.find("90.81") != std::string::npos);
  CHECK(table.find("33.50") != std::string::npos);
  auto rec = json::parse(flat_record(r, {{"cell", "pte-b10-r0"}}));
  CHECK(rec["cell"] == "pte-b10-r0");
  CHECK(rec["accuracy"] == doctest::Approx(0.9081));
  CHECK(flat_record(r).find('\n') == std::string::npos);
}
