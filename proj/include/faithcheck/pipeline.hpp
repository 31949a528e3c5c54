#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithcheck/community.hpp"
#include "faithcheck/detector.hpp"
#include "faithcheck/ehr.hpp"
#include "faithcheck/generator.hpp"
#include "faithcheck/graph.hpp"
#include "faithcheck/llm.hpp"

namespace faithcheck::pipeline {

using nlohmann::json;

struct Range {
  int lo = 0, hi = -1;  // inclusive patient numbers
  bool contains(int n) const { return n >= lo && n <= hi; }
  bool empty() const { return hi < lo; }
};

struct Partitions {
  Range train{1, 190};
  Range validation{191, 200};
  Range test{201, 250};

  // "train" | "validation" | "test" | "" (outside every range)
  std::string of(const std::string& patient_id) const;
  // Throws Config when two ranges share a patient number.
  void check_disjoint() const;
};

struct BackendConfig {
  std::string kind = "rules";  // rules | scripted | openai
  std::filesystem::path scenario;
  llm::RemoteConfig remote;
  int max_concurrent = 4;
};

std::shared_ptr<llm::Backend> make_backend(const BackendConfig& cfg);

struct PipelineConfig {
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  std::vector<std::string> patients;  // empty: every patient in the bundle
  Partitions partitions;
  std::vector<std::string> evaluate_partitions = {"test"};
  double ratio = 0.4;
  std::uint64_t generation_seed = 7;
  std::uint64_t community_seed = 11;
  int regeneration_attempts = 2;
  double tau_s = 0.5;
  int k = 20;
  int retries = 3;
  int workers = 8;
  bool extract_with_llm = true;
  bool summarize_with_llm = false;
  structured::SchemaMode mode = structured::SchemaMode::Strict;
  BackendConfig backend;
  json baseline_f1 = json::object();  // stratum -> base F1, for ceiling gains

  // Relative paths resolve against base_dir. Unknown keys are rejected.
  static PipelineConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  // Partition overlap, ranges and existing paths; throws Config.
  void validate() const;
  json to_json() const;
};

struct GraphBuildOptions {
  int attempts = 3;
  std::uint64_t seed = 11;
  bool summarize_with_llm = false;
  community::HierarchyOptions hierarchy;
};

// Raw extraction, quality before, normalization, quality after, communities
// and summaries. `llm` null skips free-text extraction.
graph::PatientGraph build_patient_graph(const ehr::PatientRecord& record, llm::Gateway* llm,
                                        const GraphBuildOptions& options = {});

struct StageRecord {
  std::string stage;
  std::string patient_id;  // empty for run-level stages
  std::string key;         // content address of the inputs
  std::string status;      // ran | cached | failed | blocked
  std::vector<std::pair<std::string, std::string>> outputs;  // path (relative), digest
  std::string error;
};

struct RunResult {
  std::filesystem::path out_dir;
  json manifest;
  std::string manifest_digest;
  std::vector<StageRecord> stages;
  int exit_code = 0;

  std::size_t count(const std::string& status) const;
};

RunResult run_pipeline(const PipelineConfig& cfg);

}  // namespace faithcheck::pipeline
