#include <atomic>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "explkit/http_backend.hpp"
#include "explkit/ledger.hpp"
#include "explkit/mock_backend.hpp"
#include "httplib.h"
#include "support.hpp"

using namespace explkit;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

/// In-process stand-in for the model server.
class FakeServer {
 public:
  FakeServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpBackendOptions options_for(const FakeServer& s) {
  HttpBackendOptions o;
  o.base_url = s.url();
  o.timeout = 5000ms;
  o.initial_backoff = 1ms;
  return o;
}

}  // namespace

TEST_CASE("echo mock returns inputs and logs calls") {
  auto m = MockBackend::echo();
  const std::vector<std::string> in{"a b", "c"};
  auto g = m->generate("x/joint", in, {});
  CHECK(g.outputs == in);
  CHECK(m->generate_count() == 2);
  CHECK(m->call_log()[1].input == "c");
}

TEST_CASE("table mock flags misses") {
  auto m = MockBackend::table({{"q", "answer"}});
  const std::vector<std::string> in{"q", "other"};
  auto g = m->generate("any", in, {});
  CHECK(g.outputs[0] == "answer");
  CHECK(g.outputs[1].empty());
  CHECK(g.missed == std::vector<bool>{false, true});
}

TEST_CASE("oracle mock answers gold targets per stage") {
  const auto ds = testing::make_nli(5, 5);
  const Dataset* gold[] = {&ds};
  auto m = MockBackend::oracle(gold);
  const auto& inst = ds.instances[2];
  const std::vector<std::string> joint{render_input(inst, StageKind::JointStage)};
  CHECK(m->generate("p/joint", joint, {}).outputs[0] == render_target(inst, StageKind::JointStage));
  CHECK(m->generate("p/etp_explainer", joint, {}).outputs[0] == inst.gold_explanations[0]);
  CHECK(m->generate("p/pte_predictor", joint, {}).missed[0]);
  const std::vector<std::string> wrong_label{
      render_input(inst, StageKind::PtEExplainer, Injected::with_label("neutral"))};
  if (inst.gold_label != "neutral") CHECK(m->generate("p/pte_explainer", wrong_label, {}).missed[0]);
}

TEST_CASE("model names resolve to stages") {
  CHECK(stage_from_model_name("esnli/joint-b10-r0/etp_predictor") == StageKind::EtPPredictor);
  CHECK(stage_from_model_name("r2l") == StageKind::RtoL);
  CHECK_FALSE(stage_from_model_name("x/unknown").has_value());
}

TEST_CASE("mock latency is deterministic") {
  auto m = MockBackend::echo();
  m->set_generate_latency(3ms);
  m->set_train_latency(7ms);
  const std::vector<std::string> in{"a", "b", "c"};
  CHECK(m->generate("m", in, {}).elapsed == 9ms);
  const std::vector<TrainingPair> pairs{{StageKind::JointStage, "i", "t", "id", Provenance::Gold}};
  auto job = m->train("m", pairs, default_train_hyperparams());
  auto status = wait_for_job(*m, job);
  CHECK(status.state == JobState::Done);
  CHECK(status.elapsed == 7ms);
  CHECK_THROWS_AS(m->train("m", {}, {}), BackendError);
}

TEST_CASE("decode limits") {
  GenerationConfig c;
  c.max_new_tokens = 3;
  CHECK(apply_decode_limits("a b c d e", c) == "a b c");
  CHECK(apply_decode_limits("a b</s> c", c) == "a b");
  c.stop_on_eos = false;
  CHECK(apply_decode_limits("a </s> c d", c) == "a </s> c");
  c.max_new_tokens = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("default hyperparameters carry both learning rates") {
  const auto h = default_train_hyperparams();
  CHECK(h.size() >= 2);
  CHECK(h.dump().find("0.0001") != std::string::npos);
  CHECK(h.dump().find("5e-05") != std::string::npos);
}

TEST_CASE("ledger totals and json round-trip") {
  Ledger l;
  l.record("pte_predictor", 1, 10ms, 100);
  l.record("infer/pte_predictor", 50, 5ms, 0);
  l.record("pte_predictor", 1, 2ms, 3);
  CHECK(l.total_time() == 17ms);
  CHECK(l.total_calls() == 52);
  CHECK(l.total_pairs() == 103);
  auto t = l.stage_total("pte_predictor");
  REQUIRE(t);
  CHECK(t->wall_time == 12ms);
  CHECK(l.has_stage("infer/pte_predictor"));
  CHECK_FALSE(l.has_stage("semi_labeling"));
  CHECK(Ledger::from_json(l.to_json()) == l);
}

TEST_CASE("wire request bodies") {
  const std::vector<std::string> in{"x", "y"};
  GenerationConfig c;
  c.max_new_tokens = 20;
  CHECK(HttpBackend::generate_request("m/joint", in, c) ==
        json::parse(R"({"model":"m/joint","inputs":["x","y"],"max_new_tokens":20,"decode":"greedy"})"));
  const std::vector<TrainingPair> pairs{{StageKind::PtEPredictor, "in", "out", "id-1", Provenance::Gold}};
  CHECK(HttpBackend::train_request("m/pte_predictor", pairs, json{{"epochs", 2}}) ==
        json::parse(R"({"model":"m/pte_predictor","pairs":[{"input":"in","target":"out"}],"hyper":{"epochs":2}})"));
}

TEST_CASE("http generate batches and reassembles in order") {
  FakeServer fake;
  std::atomic<int> calls{0};
  fake.server().Post("/v1/generate", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    auto body = json::parse(req.body);
    CHECK(body["model"] == "m/pte_predictor");
    json outs = json::array();
    for (const auto& in : body["inputs"]) outs.push_back("out:" + in.get<std::string>());
    res.set_content(json{{"outputs", outs}}.dump(), "application/json");
  });
  auto o = options_for(fake);
  o.batch_size = 3;
  o.max_in_flight = 2;
  HttpBackend backend(o);
  std::vector<std::string> in;
  for (int i = 0; i < 10; ++i) in.push_back("i" + std::to_string(i));
  auto g = backend.generate("m/pte_predictor", in, {});
  REQUIRE(g.outputs.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(g.outputs[i] == "out:i" + std::to_string(i));
  CHECK(calls == 4);
}

TEST_CASE("http 4xx is rejected without retry") {
  FakeServer fake;
  std::atomic<int> calls{0};
  fake.server().Post("/v1/generate", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 404;
    res.set_content(R"({"error":"unknown_model","message":"no such model"})", "application/json");
  });
  HttpBackend backend(options_for(fake));
  const std::vector<std::string> in{"a"};
  try {
    backend.generate("missing", in, {});
    FAIL("expected an error");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendError::Kind::Rejected);
    CHECK(e.code() == "unknown_model");
    CHECK(e.http_status() == 404);
    CHECK(std::string(e.what()).find("no such model") != std::string::npos);
  }
  CHECK(calls == 1);
}

TEST_CASE("http 5xx is retried then succeeds") {
  FakeServer fake;
  std::atomic<int> calls{0};
  fake.server().Post("/v1/generate", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"outputs":["ok"]})", "application/json");
  });
  HttpBackend backend(options_for(fake));
  const std::vector<std::string> in{"a"};
  CHECK(backend.generate("m", in, {}).outputs[0] == "ok");
  CHECK(calls == 3);
}

TEST_CASE("http 5xx exhausts attempts") {
  FakeServer fake;
  fake.server().Post("/v1/generate", [&](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  HttpBackend backend(options_for(fake));
  const std::vector<std::string> in{"a"};
  try {
    backend.generate("m", in, {});
    FAIL("expected an error");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendError::Kind::Server);
    CHECK(e.batch_index() == 0u);
  }
}

TEST_CASE("http output count mismatch is an error") {
  FakeServer fake;
  fake.server().Post("/v1/generate", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"outputs":["only one"]})", "application/json");
  });
  HttpBackend backend(options_for(fake));
  const std::vector<std::string> in{"a", "b"};
  CHECK_THROWS_AS(backend.generate("m", in, {}), BackendError);
}

TEST_CASE("http train and job polling") {
  FakeServer fake;
  std::atomic<int> polls{0};
  json seen;
  fake.server().Post("/v1/train", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(R"({"job_id":"j-7"})", "application/json");
  });
  fake.server().Get(R"(/v1/jobs/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
    CHECK(req.matches[1] == "j-7");
    const char* state = ++polls < 3 ? "running" : "done";
    res.set_content(json{{"state", state}, {"detail", "step"}}.dump(), "application/json");
  });
  HttpBackend backend(options_for(fake));
  const std::vector<TrainingPair> pairs{{StageKind::JointStage, "in", "lbl explanation e", "x", Provenance::Gold}};
  auto job = backend.train("d/joint", pairs, default_train_hyperparams());
  CHECK(job.id == "j-7");
  CHECK(job.model == "d/joint");
  CHECK(seen["pairs"].size() == 1);
  WaitOptions w;
  w.poll = 1ms;
  auto status = wait_for_job(backend, job, w);
  CHECK(status.state == JobState::Done);
  CHECK(polls == 3);
}

TEST_CASE("failed job surfaces the server detail") {
  FakeServer fake;
  fake.server().Get(R"(/v1/jobs/(.+))", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"state":"failed","detail":"out of memory"})", "application/json");
  });
  HttpBackend backend(options_for(fake));
  try {
    wait_for_job(backend, JobHandle{"j", "m"}, {1ms, 0ms});
    FAIL("expected an error");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendError::Kind::JobFailed);
    CHECK(std::string(e.what()).find("out of memory") != std::string::npos);
  }
}

TEST_CASE("unreachable server is a transport error") {
  HttpBackendOptions o;
  o.base_url = "http://127.0.0.1:1";
  o.timeout = 500ms;
  HttpBackend backend(o);
  const std::vector<std::string> in{"a"};
  try {
    backend.generate("m", in, {});
    FAIL("expected an error");
  } catch (const BackendError& e) {
    CHECK(e.retriable());
  }
}

namespace {

json load_wire_vectors() {
  std::ifstream in(testing::data_dir() / "wire_vectors.json");
  REQUIRE(in);
  return json::parse(in);
}

void serve(httplib::Response& res, const json& response) {
  res.status = response["status"].get<int>();
  res.set_content(response["body"].dump(), "application/json");
}

void check_rejection(const BackendError& e, const json& expect) {
  CHECK(expect["error"] == "rejected");
  CHECK(e.kind() == BackendError::Kind::Rejected);
  CHECK(e.code() == expect["code"].get<std::string>());
}

}  // namespace

TEST_CASE("client conforms to the shared wire vectors") {
  const json vectors = load_wire_vectors();
  for (const auto& v : vectors["generate"]) {
    INFO(v["name"].get<std::string>());
    FakeServer fake;
    json seen;
    fake.server().Post("/v1/generate", [&](const httplib::Request& req, httplib::Response& res) {
      seen = json::parse(req.body);
      serve(res, v["response"]);
    });
    HttpBackend backend(options_for(fake));
    GenerationConfig config;
    config.max_new_tokens = v["call"]["max_new_tokens"];
    const auto inputs = v["call"]["inputs"].get<std::vector<std::string>>();
    try {
      auto g = backend.generate(v["call"]["model"].get<std::string>(), inputs, config);
      CHECK(g.outputs == v["expect"]["outputs"].get<std::vector<std::string>>());
    } catch (const BackendError& e) {
      check_rejection(e, v["expect"]);
    }
    CHECK(seen == v["request"]);
  }
  for (const auto& v : vectors["train"]) {
    INFO(v["name"].get<std::string>());
    FakeServer fake;
    json seen;
    fake.server().Post("/v1/train", [&](const httplib::Request& req, httplib::Response& res) {
      seen = json::parse(req.body);
      serve(res, v["response"]);
    });
    HttpBackend backend(options_for(fake));
    std::vector<TrainingPair> pairs;
    for (const auto& p : v["call"]["pairs"]) pairs.push_back({StageKind::JointStage, p["input"], p["target"], "", {}});
    try {
      auto job = backend.train(v["call"]["model"].get<std::string>(), pairs, v["call"]["hyper"]);
      CHECK(job.id == v["expect"]["job_id"].get<std::string>());
    } catch (const BackendError& e) {
      check_rejection(e, v["expect"]);
    }
    CHECK(seen == v["request"]);
  }
  for (const auto& v : vectors["jobs"]) {
    INFO(v["name"].get<std::string>());
    FakeServer fake;
    std::string path;
    fake.server().Get(R"(/v1/jobs/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
      path = req.path;
      serve(res, v["response"]);
    });
    HttpBackend backend(options_for(fake));
    try {
      auto status = backend.job_status({v["job_id"], "m"});
      CHECK(to_string(status.state) == v["expect"]["state"].get<std::string>());
      CHECK(status.detail == v["expect"]["detail"].get<std::string>());
    } catch (const BackendError& e) {
      check_rejection(e, v["expect"]);
    }
    CHECK(path == "/v1/jobs/" + v["job_id"].get<std::string>());
  }
}
