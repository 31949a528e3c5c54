#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "faithcheck/pipeline.hpp"
#include "support.hpp"

namespace testsupport {

// Every file under `dir` by relative path. The manifest's "run" block
// (wall-clock timestamps and timings) is dropped.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    std::string bytes = slurp(e.path());
    if (rel == "manifest.json") {
      auto m = json::parse(bytes);
      m.erase("run");
      bytes = m.dump(2);
    }
    out.emplace(rel, std::move(bytes));
  }
  return out;
}

inline faithcheck::pipeline::PipelineConfig e2e_config(const fs::path& out_dir) {
  auto cfg = faithcheck::pipeline::PipelineConfig::load(data_dir() / "e2e" / "pipeline.json");
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace testsupport
