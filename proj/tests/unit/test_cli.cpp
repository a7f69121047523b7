#include <fstream>
#include <sstream>

#include "doctest.h"
#include "explkit/cli.hpp"
#include "explkit/experiments.hpp"
#include "explkit/pipelines.hpp"
#include "support.hpp"

using namespace explkit;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

/// Data directory with a 10-instance train file and a 6-instance dev file.
struct Workspace {
  testing::TempDir dir{"cli"};
  Dataset train = testing::make_nli(10, 10, 4, Split::Train, "train");
  Dataset dev = [] {
    auto d = testing::make_nli(6, 6, 8, Split::Dev, "dev");
    for (auto& inst : d.instances) inst.id = "d" + inst.id;
    return d;
  }();

  Workspace() {
    save_canonical(train, dir / "train.jsonl");
    save_canonical(dev, dir / "dev.jsonl");
  }
  std::string data() const { return dir.path().string(); }
};

}  // namespace

TEST_CASE("help exits cleanly") {
  auto r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("compile") != std::string::npos);
  auto sub = cli({"grid", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("--plan") != std::string::npos);
}

TEST_CASE("usage errors are JSON records") {
  auto r = cli({"compile", "--dataset", "x.jsonl"});
  CHECK(r.code == 2);
  auto j = json::parse(r.err);
  CHECK(j["error"] == "usage");
  CHECK(j["command"] == "compile");
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"compile", "--dataset", "x", "--structure", "tep", "--out", "o"}).code == 2);
}

TEST_CASE("runtime errors name their kind") {
  Workspace ws;
  auto r = cli({"--data-dir", ws.data(), "stats", "--dataset", "missing.jsonl"});
  CHECK(r.code == 1);
  CHECK(json::parse(r.err)["error"] == "corpus");
  auto remote = cli({"--data-dir", ws.data(), "infer", "--dataset", "dev.jsonl", "--structure", "pte", "--backend",
                     "remote", "--out", (ws.dir / "g.jsonl").string()});
  CHECK(remote.code == 2);
}

TEST_CASE("ingest and stats") {
  Workspace ws;
  const auto src = (testing::data_dir() / "esnli_dev.csv").string();
  auto r = cli({"--data-dir", ws.data(), "ingest", "--format", "esnli_csv", "--split", "dev", "--in", src, "--out",
                "esnli_dev.jsonl"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["instances"] == 4);
  CHECK(j["rejected"] == 2);
  CHECK(r.err.find("rejected_line") != std::string::npos);
  CHECK(std::filesystem::exists(ws.dir / "esnli_dev.jsonl"));
  CHECK(cli({"--data-dir", ws.data(), "ingest", "--format", "esnli_csv", "--split", "dev", "--in", src, "--out",
             "x.jsonl", "--strict"})
            .code == 1);

  auto s = cli({"--data-dir", ws.data(), "stats", "--dataset", "esnli_dev.jsonl", "--json"});
  REQUIRE(s.code == 0);
  auto st = json::parse(s.out);
  CHECK(st["count"] == 4);
  CHECK(st["explanations"] == 7);
  auto text = cli({"--data-dir", ws.data(), "stats", "--dataset", "esnli_dev.jsonl"});
  CHECK(text.out.find("instances") != std::string::npos);
}

TEST_CASE("cose ingestion needs a mapping") {
  Workspace ws;
  const auto src = (testing::data_dir() / "cose_train.csv").string();
  auto bad = cli({"--data-dir", ws.data(), "ingest", "--format", "cose_csv", "--split", "train", "--in", src, "--out",
                  "c.jsonl"});
  CHECK(bad.code == 2);
  auto ok = cli({"--data-dir", ws.data(), "ingest", "--format", "cose_csv", "--split", "train", "--in", src, "--out",
                 "c.jsonl", "--mapping", (testing::data_dir() / "cose_mapping.txt").string()});
  REQUIRE(ok.code == 0);
  CHECK(json::parse(ok.out)["instances"] == 3);
}

TEST_CASE("compile pte at 30 percent on ten instances") {
  Workspace ws;
  auto r = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "compile", "--dataset", "train.jsonl",
                "--structure", "pte", "--budget", "30", "--seed", "1", "--out", "pairs"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["pairs"]["pte_predictor"] == 10);
  CHECK(j["pairs"]["pte_explainer"] == 3);
  CHECK(line_count(ws.dir / "pairs" / "pte_predictor.jsonl") == 10);
  CHECK(line_count(ws.dir / "pairs" / "pte_explainer.jsonl") == 3);

  auto sl = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "compile", "--dataset", "train.jsonl",
                 "--structure", "etp_sl", "--budget", "30", "--out", "sl"});
  CHECK(sl.code == 2);
  auto sl_ok = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "compile", "--dataset", "train.jsonl",
                    "--structure", "etp_sl", "--budget", "30", "--out", "sl", "--backend", "mock-oracle"});
  REQUIRE(sl_ok.code == 0);
  CHECK(json::parse(sl_ok.out)["pairs"]["etp_predictor"] == 10);
}

TEST_CASE("train submits the stage's pairs") {
  Workspace ws;
  REQUIRE(cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "compile", "--dataset", "train.jsonl",
               "--structure", "pte", "--out", "pairs"})
              .code == 0);
  auto r = cli({"--results-dir", ws.data(), "train", "--pairs", "pairs/pte_predictor.jsonl", "--stage",
                "pte_predictor", "--backend", "mock-echo", "--model", "m/pte_predictor", "--hyper", "epochs=2",
                "--wait"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["model"] == "m/pte_predictor");
  CHECK(j["pairs"] == 10);
  CHECK(j["state"] == "done");
  CHECK(cli({"--results-dir", ws.data(), "train", "--pairs", "pairs/pte_predictor.jsonl", "--stage", "joint",
             "--backend", "mock-echo"})
            .code == 1);
}

TEST_CASE("infer then evaluate with the oracle") {
  Workspace ws;
  auto r = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "--jobs", "2", "--batch-size", "4", "infer",
                "--dataset", "dev.jsonl", "--structure", "etp", "--backend", "mock-oracle", "--out", "gen.jsonl"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["errors"] == 0);
  auto e = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "evaluate", "--generations", "gen.jsonl",
                "--dataset", "dev.jsonl"});
  REQUIRE(e.code == 0);
  auto rep = json::parse(e.out);
  CHECK(rep["accuracy"] == 1.0);
  CHECK(rep["bleu"].get<double>() == doctest::Approx(100.0));
  auto table = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "evaluate", "--generations", "gen.jsonl",
                    "--dataset", "dev.jsonl", "--table"});
  CHECK(table.out.find("100.00") != std::string::npos);
}

TEST_CASE("evaluate with candidate equal to reference gives bleu 100") {
  Workspace ws;
  {
    std::ofstream out(ws.dir / "gen.jsonl");
    for (const auto& inst : ws.dev.instances) {
      InferenceResult r;
      r.id = inst.id;
      r.predicted_label = inst.gold_label;
      r.generated_explanation = inst.gold_explanations[0];
      r.clean_parse = true;
      out << to_json(r).dump() << '\n';
    }
  }
  auto e = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "evaluate", "--generations", "gen.jsonl",
                "--dataset", "dev.jsonl", "--refs", "all"});
  REQUIRE(e.code == 0);
  CHECK(json::parse(e.out)["bleu"].get<double>() == doctest::Approx(100.0));
}

TEST_CASE("explain conditions on true, predicted and requested labels") {
  Workspace ws;
  const auto& inst = ws.dev.instances[1];
  auto r = cli({"--data-dir", ws.data(), "explain", "--dataset", "dev.jsonl", "--id", inst.id, "--backend",
                "mock-oracle", "--label", "contradiction"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["true"]["label"] == inst.gold_label);
  CHECK(j["true"]["explanation"] == inst.gold_explanations[0]);
  CHECK(j["predicted"]["label"] == inst.gold_label);
  CHECK(j["requested"]["label"] == "contradiction");
  CHECK(cli({"--data-dir", ws.data(), "explain", "--dataset", "dev.jsonl", "--id", "nope", "--backend", "mock-echo"})
            .code == 2);
}

TEST_CASE("informedness with gold and a gold copy") {
  Workspace ws;
  {
    std::ofstream out(ws.dir / "copy.jsonl");
    for (const auto* ds : {&ws.train, &ws.dev})
      for (const auto& inst : ds->instances)
        out << json{{"id", inst.id}, {"explanation", inst.gold_explanations[0]}}.dump() << '\n';
  }
  auto r = cli({"--data-dir", ws.data(), "--results-dir", ws.data(), "informedness", "--train", "train.jsonl",
                "--dataset", "dev.jsonl", "--source", "copy=copy.jsonl", "--backend", "mock-oracle", "--json"});
  REQUIRE(r.code == 0);
  auto rows = json::parse(r.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["source"] == "gold");
  CHECK(rows[0]["accuracy"] == 1.0);
  CHECK(rows[1]["recover_ratio"] == 100.0);
  CHECK(cli({"--data-dir", ws.data(), "informedness", "--train", "train.jsonl", "--dataset", "dev.jsonl", "--source",
             "gold=copy.jsonl", "--backend", "mock-oracle"})
            .code == 2);
}

TEST_CASE("grid from a plan file") {
  Workspace ws;
  {
    std::ofstream out(ws.dir / "plan.json");
    out << json{{"dataset", "synthetic"}, {"train", "train.jsonl"}, {"dev", "dev.jsonl"}, {"budgets", {50, 100}},
                {"structures", {"etp", "etp_sl"}}, {"repetitions", 1}}
               .dump();
  }
  auto r = cli({"--data-dir", ws.data(), "--results-dir", (ws.dir / "results").string(), "--mock-latency-ms", "2",
                "grid", "--plan", "plan.json", "--backend", "mock-oracle"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("2/2 hold") != std::string::npos);
  CHECK(std::filesystem::exists(ws.dir / "results" / "synthetic" / "summary.tsv"));
  CHECK(std::filesystem::exists(ws.dir / "results" / "synthetic" / "efficiency.txt"));
}

TEST_CASE("config file supplies defaults below flags") {
  Workspace ws;
  {
    std::ofstream out(ws.dir / "explkit.toml");
    out << "data-dir = \"" << ws.data() << "\"\n";
  }
  auto r = cli({"--config", (ws.dir / "explkit.toml").string(), "stats", "--dataset", "train.jsonl", "--json"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["count"] == 10);
}
