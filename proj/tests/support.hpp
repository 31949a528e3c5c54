#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "faithcheck/llm.hpp"
#include "faithcheck/text.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path data_dir() { return fs::path(FAITHCHECK_TEST_DATA); }

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("faithcheck-test-" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) { return faithcheck::text::read_file(p.string()); }

inline std::shared_ptr<faithcheck::llm::Gateway> scripted_gateway(const json& scenario) {
  return std::make_shared<faithcheck::llm::Gateway>(std::make_shared<faithcheck::llm::ScriptedMock>(scenario));
}

// Single matcher replaying `responses` for one stage.
inline json one_stage(const std::string& stage, const json& responses, bool sticky = false) {
  return json{{"strict", true},
              {"matchers", json::array({json{{"stage", stage}, {"responses", responses}, {"sticky", sticky}}})}};
}

}  // namespace testsupport
