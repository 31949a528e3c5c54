#include <httplib.h>

#include "faithcheck/llm.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include "faithcheck/error.hpp"
#include "faithcheck/hash.hpp"
#include "faithcheck/ids.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::llm {

namespace {
std::atomic<std::uint64_t> g_network_calls{0};
}

std::uint64_t network_calls() { return g_network_calls.load(); }

std::string ChatRequest::tag(const std::string& key) const {
  auto it = tags.find(key);
  return it == tags.end() ? std::string() : it->second;
}

std::string ChatRequest::digest() const {
  Digest d;
  d.add(prompt_asset_id).add(rendered_prompt).add(text::format_double(temperature)).add(std::to_string(max_tokens));
  for (const auto& [k, v] : tags) d.add(k).add(v);
  return d.hex();
}

// ------------------------------------------------------------- scripted mock

std::string expand_templates(const std::string& text, const std::string& patient_id) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("{{", pos);
    if (open == std::string::npos) break;
    const auto close = text.find("}}", open);
    if (close == std::string::npos) break;
    out.append(text, pos, open - pos);
    const std::string body = text.substr(open + 2, close - open - 2);
    if (body == "patient_id") {
      out += patient_id;
    } else if (text::starts_with_ci(body, "entity:") && body.find('|') != std::string::npos) {
      const auto bar = body.find('|');
      out += entity_id(patient_id, body.substr(7, bar - 7), body.substr(bar + 1));
    } else {
      out.append(text, open, close + 2 - open);
    }
    pos = close + 2;
  }
  out.append(text, pos);
  return out;
}

ScriptedMock::ScriptedMock(const json& scenario, std::string name) : name_(std::move(name)) {
  if (!scenario.is_object() || !scenario.contains("matchers") || !scenario["matchers"].is_array()) {
    fail(ErrorKind::Config, "scenario must be an object with a \"matchers\" array");
  }
  strict_ = scenario.value("strict", true);
  if (scenario.contains("default_response")) default_response_ = scenario["default_response"].get<std::string>();
  if (scenario.contains("name")) name_ = scenario["name"].get<std::string>();
  for (const auto& m : scenario["matchers"]) {
    Matcher matcher;
    matcher.stage = m.value("stage", "");
    if (m.contains("contains")) {
      if (m["contains"].is_string()) {
        matcher.contains.push_back(m["contains"].get<std::string>());
      } else {
        matcher.contains = m["contains"].get<std::vector<std::string>>();
      }
    }
    matcher.patient_id = m.value("patient_id", "");
    matcher.sticky = m.value("sticky", false);
    for (const auto& r : m.at("responses")) {
      matcher.responses.push_back(r.is_string() ? r.get<std::string>() : r.dump());
    }
    if (matcher.responses.empty()) fail(ErrorKind::Config, "scenario matcher without responses");
    matchers_.push_back(std::move(matcher));
  }
}

std::shared_ptr<ScriptedMock> ScriptedMock::from_file(const std::filesystem::path& path) {
  json scenario;
  try {
    scenario = json::parse(text::read_file(path.string()));
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return std::make_shared<ScriptedMock>(scenario, path.stem().string());
}

ChatResponse ScriptedMock::complete(const ChatRequest& request) {
  const std::string stage = request.tag("stage");
  const std::string patient = request.tag("patient_id");
  std::lock_guard lock(mu_);
  bool matched_exhausted = false;
  for (auto& m : matchers_) {
    if (!m.stage.empty() && m.stage != "*" && m.stage != stage) continue;
    if (!m.patient_id.empty() && m.patient_id != patient) continue;
    const bool all = std::all_of(m.contains.begin(), m.contains.end(), [&](const std::string& needle) {
      return request.rendered_prompt.find(needle) != std::string::npos;
    });
    if (!all) continue;
    if (m.consumed >= m.responses.size()) {
      if (!m.sticky) {
        matched_exhausted = true;
        continue;
      }
      return {expand_templates(m.responses.back(), patient), 1};
    }
    return {expand_templates(m.responses[m.consumed++], patient), 1};
  }
  if (matched_exhausted) fail(ErrorKind::MockExhausted, "scenario responses exhausted for stage '" + stage + "'");
  if (strict_ || !default_response_) {
    fail(ErrorKind::UnmatchedRequest, "no scenario matcher for stage '" + stage + "' (patient " + patient + ")");
  }
  return {expand_templates(*default_response_, patient), 1};
}

std::vector<std::size_t> ScriptedMock::consumption() const {
  std::lock_guard lock(mu_);
  std::vector<std::size_t> out;
  for (const auto& m : matchers_) out.push_back(m.consumed);
  return out;
}

// ------------------------------------------------------------------ remote

RemoteConfig RemoteConfig::from_json(const json& j) {
  RemoteConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.token_env = j.value("token_env", c.token_env);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_base = j.value("backoff_base", c.backoff_base);
  c.backoff_factor = j.value("backoff_factor", c.backoff_factor);
  return c;
}

OpenAiBackend::OpenAiBackend(RemoteConfig config) : config_(std::move(config)) {
  if (!config_.sleep) {
    config_.sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }
  if (config_.token.empty() && !config_.token_env.empty()) {
    if (const char* t = std::getenv(config_.token_env.c_str())) config_.token = t;
  }
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // /v1/chat/completions
};

Endpoint split_url(const std::string& base) {
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) fail(ErrorKind::Config, "base_url needs a scheme: " + base);
  const auto path_start = base.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = base.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

}  // namespace

ChatResponse OpenAiBackend::complete(const ChatRequest& request) {
  const Endpoint ep = split_url(config_.base_url);
  const json body{{"model", config_.model},
                  {"messages", json::array({json{{"role", "user"}, {"content", request.rendered_prompt}}})},
                  {"temperature", request.temperature},
                  {"max_tokens", request.max_tokens}};
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  httplib::Client client(ep.origin);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  std::string last_error;
  double delay = config_.backoff_base;
  for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
    if (attempt > 1) {
      config_.sleep(delay);
      delay *= config_.backoff_factor;
    }
    ++g_network_calls;
    auto res = client.Post(ep.path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 400 && res->status < 500) {
      fail(ErrorKind::Llm, "HTTP " + std::to_string(res->status) + " from " + ep.origin + ep.path + ": " + res->body);
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      const auto doc = json::parse(res->body);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      return {content.is_string() ? content.get<std::string>() : content.dump(), attempt};
    } catch (const json::exception& e) {
      fail(ErrorKind::Llm, std::string("malformed chat-completions response: ") + e.what());
    }
  }
  fail(ErrorKind::Llm, last_error + " after " + std::to_string(config_.max_retries + 1) + " attempts");
}

// ----------------------------------------------------------------- gateway

json CallLogEntry::to_json() const {
  json j{{"timestamp", timestamp}, {"request_digest", request_digest}, {"prompt_asset_id", prompt_asset_id},
         {"prompt", prompt},       {"response", response},             {"latency_ms", latency_ms},
         {"attempt", attempt},     {"backend_id", backend_id},         {"tags", tags}};
  if (!error.empty()) j["error"] = error;
  return j;
}

Gateway::Gateway(std::shared_ptr<Backend> backend, int max_concurrent)
    : backend_(std::move(backend)), limiter_(std::max(1, max_concurrent)) {
  if (!backend_) fail(ErrorKind::InvalidArgument, "gateway needs a backend");
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string Gateway::complete(const ChatRequest& request) {
  if (text::trim(request.rendered_prompt).empty()) fail(ErrorKind::InvalidArgument, "empty prompt");
  if (request.temperature < 0) fail(ErrorKind::InvalidArgument, "temperature must be >= 0");

  CallLogEntry entry;
  entry.request_digest = request.digest();
  entry.prompt_asset_id = request.prompt_asset_id;
  entry.prompt = request.rendered_prompt;
  entry.backend_id = backend_->id();
  entry.tags = request.tags;
  const bool fixed = backend_->deterministic();
  entry.timestamp = fixed ? "1970-01-01T00:00:00Z" : utc_now();

  limiter_.acquire();
  const auto start = std::chrono::steady_clock::now();
  try {
    ChatResponse r = backend_->complete(request);
    limiter_.release();
    entry.response = r.text;
    entry.attempt = r.attempt;
    if (!fixed) {
      entry.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    std::lock_guard lock(mu_);
    log_.push_back(entry);
    return r.text;
  } catch (const std::exception& e) {
    limiter_.release();
    entry.error = e.what();
    std::lock_guard lock(mu_);
    log_.push_back(std::move(entry));
    throw;
  }
}

std::vector<CallLogEntry> Gateway::log() const {
  std::vector<CallLogEntry> out;
  {
    std::lock_guard lock(mu_);
    out = log_;
  }
  auto key = [](const CallLogEntry& e) { return json(e.tags).dump() + "\x1f" + e.request_digest + "\x1f" + e.response; };
  std::stable_sort(out.begin(), out.end(), [&](const CallLogEntry& a, const CallLogEntry& b) { return key(a) < key(b); });
  return out;
}

void Gateway::write_log(const std::filesystem::path& path) const { write_log(path, {}); }

std::vector<CallLogEntry> Gateway::log(const std::map<std::string, std::string>& match) const {
  std::vector<CallLogEntry> out;
  for (auto& e : log()) {
    const bool keep = std::all_of(match.begin(), match.end(), [&](const auto& kv) {
      auto it = e.tags.find(kv.first);
      return it != e.tags.end() && it->second == kv.second;
    });
    if (keep) out.push_back(std::move(e));
  }
  return out;
}

void Gateway::write_log(const std::filesystem::path& path, const std::map<std::string, std::string>& match) const {
  std::string body;
  for (const auto& e : log(match)) body += e.to_json().dump() + "\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  text::write_file(path.string(), body);
}

CallLogEntry CallLogEntry::from_json(const json& j) {
  CallLogEntry e;
  e.timestamp = j.value("timestamp", "");
  e.request_digest = j.value("request_digest", "");
  e.prompt_asset_id = j.value("prompt_asset_id", "");
  e.prompt = j.value("prompt", "");
  e.response = j.value("response", "");
  e.error = j.value("error", "");
  e.latency_ms = j.value("latency_ms", 0.0);
  e.attempt = j.value("attempt", 1);
  e.backend_id = j.value("backend_id", "");
  if (j.contains("tags")) e.tags = j.at("tags").get<std::map<std::string, std::string>>();
  return e;
}

std::vector<CallLogEntry> read_log(const std::filesystem::path& path) {
  std::vector<CallLogEntry> out;
  for (const auto& line : text::split(text::read_file(path.string()), '\n')) {
    if (text::trim(line).empty()) continue;
    out.push_back(CallLogEntry::from_json(json::parse(line)));
  }
  return out;
}

std::optional<CallLogEntry> Gateway::find(const std::string& request_digest) const {
  std::lock_guard lock(mu_);
  for (const auto& e : log_) {
    if (e.request_digest == request_digest && e.error.empty()) return e;
  }
  return std::nullopt;
}

DistillationSummary export_distillation(const std::vector<CallLogEntry>& logs,
                                        const std::vector<DistillationItem>& items,
                                        const std::filesystem::path& out_path) {
  std::map<std::string, const CallLogEntry*> by_digest;
  for (const auto& e : logs) {
    if (e.error.empty()) by_digest.emplace(e.request_digest, &e);
  }
  DistillationSummary summary;
  std::string body;
  for (const auto& item : items) {
    if (item.failed) {
      ++summary.excluded_failed;
      continue;
    }
    if (item.flagged) {
      ++summary.excluded_flagged;
      continue;
    }
    auto it = by_digest.find(item.request_digest);
    if (it == by_digest.end()) {
      ++summary.missing_log;
      continue;
    }
    json rec{{"patient_id", item.patient_id},
             {"sentence_index", item.sentence_index},
             {"prompt", it->second->prompt},
             {"completion", item.output.dump()},
             {"reasoning", item.reasoning}};
    body += rec.dump() + "\n";
    ++summary.written;
  }
  if (summary.written == 0) body = "# faithcheck distillation export: no accepted detections\n";
  std::error_code ec;
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path(), ec);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + out_path.string());
  out << body;
  if (!out) fail(ErrorKind::Io, "write failed: " + out_path.string());
  return summary;
}

}  // namespace faithcheck::llm
