#include <doctest.h>

#include <Eigen/Dense>  // before httplib, which defines conflicting macros
#include <httplib.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "faithcheck/error.hpp"
#include "faithcheck/ids.hpp"
#include "faithcheck/llm.hpp"
#include "net_probe.hpp"
#include "support.hpp"

using namespace faithcheck;
using namespace faithcheck::llm;
using testsupport::json;
using testsupport::TempDir;

namespace {

ChatRequest request(const std::string& stage, const std::string& prompt, const std::string& pid = "P0001") {
  ChatRequest r;
  r.prompt_asset_id = "test@1";
  r.rendered_prompt = prompt;
  r.tags = {{"stage", stage}, {"patient_id", pid}};
  return r;
}

// Chat-completions stub answering from a scripted list of HTTP statuses.
class StubServer {
 public:
  explicit StubServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      const std::size_t i = hits_++;
      const int status = i < statuses_.size() ? statuses_[i] : 200;
      res.status = status;
      if (status == 200) {
        res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "pong"}}}}}}}.dump(),
                        "application/json");
      } else {
        res.set_content("{\"error\": \"scripted\"}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::size_t hits() const { return hits_; }

 private:
  std::vector<int> statuses_;
  std::atomic<std::size_t> hits_{0};
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteConfig stub_config(const StubServer& s, std::vector<double>* sleeps) {
  RemoteConfig c;
  c.base_url = s.base_url();
  c.token = "test-token";
  c.timeout_seconds = 5;
  c.sleep = [sleeps](double d) { sleeps->push_back(d); };
  return c;
}

}  // namespace

TEST_SUITE("llm") {
  TEST_CASE("scripted playback order and exhaustion") {
    auto mock = std::make_shared<ScriptedMock>(testsupport::one_stage("detect", json::array({"first", "second"})));
    Gateway gw(mock);
    CHECK(gw.complete(request("detect", "a")) == "first");
    CHECK(gw.complete(request("detect", "b")) == "second");
    CHECK_THROWS_WITH_AS(gw.complete(request("detect", "c")), doctest::Contains("MockExhausted"), Error);
    CHECK(mock->consumption() == std::vector<std::size_t>{2});
  }

  TEST_CASE("matchers by stage, patient and content") {
    const json scenario = {
        {"strict", true},
        {"matchers",
         {{{"stage", "detect"}, {"patient_id", "P0002"}, {"responses", {"p2"}}, {"sticky", true}},
          {{"stage", "detect"}, {"contains", {"SENTENCE: fever"}}, {"responses", {"fever"}}, {"sticky", true}},
          {{"stage", "*"}, {"responses", {"any {{patient_id}} [ent:{{entity:DIAGNOSIS|Pneumonia}}]"}},
           {"sticky", true}}}}};
    Gateway gw(std::make_shared<ScriptedMock>(scenario));
    CHECK(gw.complete(request("detect", "x", "P0002")) == "p2");
    CHECK(gw.complete(request("detect", "x", "P0002")) == "p2");
    CHECK(gw.complete(request("detect", "SENTENCE: fever")) == "fever");
    CHECK(gw.complete(request("extract", "x", "P0007")) ==
          "any P0007 [ent:" + entity_id("P0007", "DIAGNOSIS", "Pneumonia") + "]");
  }

  TEST_CASE("strict scenarios reject unmatched requests") {
    Gateway strict(std::make_shared<ScriptedMock>(json{{"strict", true}, {"matchers", json::array()}}));
    CHECK_THROWS_WITH_AS(strict.complete(request("detect", "x")), doctest::Contains("UnmatchedRequest"), Error);
    Gateway loose(std::make_shared<ScriptedMock>(
        json{{"strict", false}, {"default_response", "fallback"}, {"matchers", json::array()}}));
    CHECK(loose.complete(request("detect", "x")) == "fallback");
  }

  TEST_CASE("gateway log is reproducible for deterministic backends") {
    auto run = [] {
      Gateway gw(std::make_shared<FunctionBackend>("echo", [](const ChatRequest& r) { return r.rendered_prompt; }));
      gw.complete(request("detect", "one"));
      gw.complete(request("extract", "two"));
      TempDir tmp("gw-log");
      gw.write_log(tmp / "log.jsonl");
      const auto entries = read_log(tmp / "log.jsonl");
      CHECK(entries.size() == 2);
      CHECK(gw.log({{"stage", "detect"}}).size() == 1);
      return testsupport::slurp(tmp / "log.jsonl");
    };
    CHECK(run() == run());
  }

  TEST_CASE("gateway rejects empty prompts") {
    Gateway gw(std::make_shared<FunctionBackend>("echo", [](const ChatRequest&) { return "x"; }));
    CHECK_THROWS_AS(gw.complete(request("detect", "   ")), Error);
  }

  TEST_CASE("remote retries server errors with backoff") {
    StubServer server({500, 500, 200});
    std::vector<double> sleeps;
    OpenAiBackend backend(stub_config(server, &sleeps));
    const auto before = network_calls();
    const auto sockets_before = testsupport::socket_connects();
    const auto res = backend.complete(request("detect", "ping"));
    CHECK(res.text == "pong");
    CHECK(res.attempt == 3);
    CHECK(server.hits() == 3);
    CHECK(network_calls() - before == 3);
    CHECK(testsupport::socket_connects() > sockets_before);
    CHECK(sleeps == std::vector<double>{1.0, 2.0});
  }

  TEST_CASE("remote client errors are not retried") {
    StubServer server({400});
    std::vector<double> sleeps;
    OpenAiBackend backend(stub_config(server, &sleeps));
    CHECK_THROWS_WITH_AS(backend.complete(request("detect", "ping")), doctest::Contains("HTTP 400"), Error);
    CHECK(server.hits() == 1);
    CHECK(sleeps.empty());
  }

  TEST_CASE("remote gives up after the retry budget") {
    StubServer server({503, 503, 503, 503, 503});
    std::vector<double> sleeps;
    auto cfg = stub_config(server, &sleeps);
    cfg.max_retries = 2;
    OpenAiBackend backend(cfg);
    try {
      backend.complete(request("detect", "ping"));
      FAIL("expected LlmError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Llm);
    }
    CHECK(server.hits() == 3);
  }

  TEST_CASE("distillation export") {
    Gateway gw(std::make_shared<FunctionBackend>("echo", [](const ChatRequest& r) { return "out:" + r.rendered_prompt; }));
    std::vector<DistillationItem> items;
    for (int i = 0; i < 12; ++i) {
      auto req = request("detect", "prompt " + std::to_string(i));
      gw.complete(req);
      DistillationItem item;
      item.patient_id = "P0001";
      item.sentence_index = i;
      item.request_digest = req.digest();
      item.output = json{{"i", i}};
      item.flagged = i == 10;
      item.failed = i == 11;
      items.push_back(item);
    }
    TempDir tmp("distill");
    const auto summary = export_distillation(gw.log(), items, tmp / "out.jsonl");
    CHECK(summary.written == 10);
    CHECK(summary.excluded_flagged == 1);
    CHECK(summary.excluded_failed == 1);
    std::ifstream in(tmp / "out.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      const auto rec = json::parse(line);
      CHECK(rec.at("prompt") == "prompt " + std::to_string(n));
      ++n;
    }
    CHECK(n == 10);

    const auto empty = export_distillation(gw.log(), {}, tmp / "empty.jsonl");
    CHECK(empty.written == 0);
    const auto text = testsupport::slurp(tmp / "empty.jsonl");
    CHECK(text.rfind("#", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  }
}
