#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace faithcheck::llm {

using nlohmann::json;

struct ChatRequest {
  std::string prompt_asset_id;  // e.g. "prompts/detect.txt@detect/1"
  std::string rendered_prompt;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::map<std::string, std::string> tags;  // patient_id, sentence_index, stage, attempt

  std::string tag(const std::string& key) const;
  std::string digest() const;
};

struct ChatResponse {
  std::string text;
  int attempt = 1;  // network attempts used (1 = first try)
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  // True when responses are a pure function of the request stream (mocks);
  // the gateway then stamps a fixed clock so logs are reproducible.
  virtual bool deterministic() const { return false; }
  // True when the response depends on call order (scripted playback); batch
  // stages then issue requests sequentially.
  virtual bool order_sensitive() const { return false; }
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Replays responses from a scenario document:
//   {"strict": true, "default_response": "...",
//    "matchers": [{"stage": "detect", "contains": ["SENTENCE: No fever"],
//                  "patient_id": "P0204", "responses": ["..."], "sticky": false}]}
// Matchers are tried in file order; an exhausted non-sticky matcher is
// skipped. Response text may reference graph entities as
// {{entity:TYPE|Canonical name}}, expanded to the entity id of the request's
// patient, and {{patient_id}}.
class ScriptedMock : public Backend {
 public:
  struct Matcher {
    std::string stage;  // empty or "*" matches any stage
    std::vector<std::string> contains;
    std::string patient_id;  // empty matches any patient
    std::vector<std::string> responses;
    bool sticky = false;
    std::size_t consumed = 0;
  };

  explicit ScriptedMock(const json& scenario, std::string name = "scripted-mock");
  static std::shared_ptr<ScriptedMock> from_file(const std::filesystem::path& path);

  std::string id() const override { return "mock:" + name_; }
  bool deterministic() const override { return true; }
  bool order_sensitive() const override { return true; }
  ChatResponse complete(const ChatRequest& request) override;

  // Per-matcher consumption counts, in file order.
  std::vector<std::size_t> consumption() const;

 private:
  std::string name_;
  bool strict_ = true;
  std::optional<std::string> default_response_;
  std::vector<Matcher> matchers_;
  mutable std::mutex mu_;
};

std::string expand_templates(const std::string& text, const std::string& patient_id);

// Deterministic stand-in for callers that build responses programmatically.
class FunctionBackend : public Backend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  FunctionBackend(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string id() const override { return "mock:" + name_; }
  bool deterministic() const override { return true; }
  ChatResponse complete(const ChatRequest& request) override { return {fn_(request), 1}; }

 private:
  std::string name_;
  Fn fn_;
};

struct RemoteConfig {
  std::string base_url = "http://localhost:8000/v1";
  std::string model = "gpt-4o-mini";
  std::string token_env = "OPENAI_API_KEY";
  std::string token;  // overrides token_env when non-empty
  double timeout_seconds = 120;
  int max_retries = 3;        // network retries after the first attempt
  double backoff_base = 1.0;  // seconds
  double backoff_factor = 2.0;
  std::function<void(double)> sleep;  // defaults to this_thread::sleep_for

  static RemoteConfig from_json(const json& j);
};

// OpenAI-compatible /chat/completions client. 5xx and transport failures
// are retried with exponential backoff; 4xx fails immediately.
class OpenAiBackend : public Backend {
 public:
  explicit OpenAiBackend(RemoteConfig config);
  std::string id() const override { return "openai:" + config_.model; }
  ChatResponse complete(const ChatRequest& request) override;

 private:
  RemoteConfig config_;
};

// Process-wide count of HTTP requests attempted by OpenAiBackend.
std::uint64_t network_calls();

struct CallLogEntry {
  std::string timestamp;
  std::string request_digest;
  std::string prompt_asset_id;
  std::string prompt;
  std::string response;
  std::string error;
  double latency_ms = 0;
  int attempt = 1;
  std::string backend_id;
  std::map<std::string, std::string> tags;

  json to_json() const;
  static CallLogEntry from_json(const json& j);
};

// Reads a JSONL log written by Gateway::write_log.
std::vector<CallLogEntry> read_log(const std::filesystem::path& path);

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, int max_concurrent = 4);

  std::string complete(const ChatRequest& request);

  const Backend& backend() const { return *backend_; }
  bool deterministic() const { return backend_->deterministic(); }
  // Worker count to use for a batch stage.
  int workers(int requested) const { return backend_->order_sensitive() ? 1 : requested; }

  // Snapshot; sorted by (tags, digest, response) so the order does not depend
  // on thread scheduling.
  std::vector<CallLogEntry> log() const;
  void write_log(const std::filesystem::path& path) const;
  // Only entries whose tags contain every (key, value) in `match`.
  void write_log(const std::filesystem::path& path, const std::map<std::string, std::string>& match) const;
  std::vector<CallLogEntry> log(const std::map<std::string, std::string>& match) const;
  std::optional<CallLogEntry> find(const std::string& request_digest) const;

 private:
  std::shared_ptr<Backend> backend_;
  std::counting_semaphore<> limiter_;
  mutable std::mutex mu_;
  std::vector<CallLogEntry> log_;
};

struct DistillationItem {
  std::string patient_id;
  int sentence_index = 0;
  std::string request_digest;  // accepted attempt
  json output;                 // accepted structured output
  std::string reasoning;
  bool flagged = false;
  bool failed = false;
};

struct DistillationSummary {
  std::size_t written = 0;
  std::size_t excluded_flagged = 0;
  std::size_t excluded_failed = 0;
  std::size_t missing_log = 0;
};

// One JSONL record per accepted detection: {"patient_id", "sentence_index",
// "prompt", "completion", "reasoning"}. Flagged and failed results are left
// out and counted. An empty export still gets a "#" header line.
DistillationSummary export_distillation(const std::vector<CallLogEntry>& logs,
                                        const std::vector<DistillationItem>& items,
                                        const std::filesystem::path& out_path);

}  // namespace faithcheck::llm
