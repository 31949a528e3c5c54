#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithcheck/graph.hpp"
#include "faithcheck/retrieval.hpp"
#include "faithcheck/segment.hpp"
#include "faithcheck/structured.hpp"
#include "faithcheck/types.hpp"

namespace faithcheck::llm {
class Gateway;
}

namespace faithcheck::detector {

using nlohmann::json;

inline constexpr const char* kDetectionSchemaVersion = "detections/1";

struct DetectionSignals {
  int conflict = 0;     // 0 or 1
  double support = 0;   // [0, 1]
  int explicit_ = 0;    // 0 or 1
};

struct GradingConfig {
  double tau_s = 0.5;  // open interval (0, 1)
};

// conflict -> E4; support < tau_s -> E3; not explicit -> E2; else E1.
EvidenceGrade grade_evidence(const DetectionSignals& signals, const GradingConfig& cfg = {});

enum class ResultStatus { Accepted, Flagged, Failed };
std::string_view to_string(ResultStatus s);

struct DetectionResult {
  std::string patient_id;
  int sentence_index = 0;
  std::string sentence_text;
  bool hallucination_status = false;
  std::set<HallucinationType> htypes;
  EvidenceGrade grade = EvidenceGrade::E1;       // g(signals)
  EvidenceGrade self_grade = EvidenceGrade::E1;  // as emitted by the judge
  std::string reasoning;
  DetectionSignals signals;
  std::optional<double> confidence;
  int retries_used = 0;
  int attempts = 0;
  std::string context_digest;
  std::string context_text;
  std::string request_digest;  // attempt the result was taken from
  ResultStatus status = ResultStatus::Accepted;
  std::vector<structured::Violation> violations;  // flagged results
  std::string error_kind;                          // failed results
  std::string error_message;
};

// Violation ids.
inline constexpr const char* kRulePositiveGrade = "rule1_positive_grade";
inline constexpr const char* kRuleE3Reasoning = "rule2_e3_reasoning";
inline constexpr const char* kRuleE4Citation = "rule3_e4_citation";
inline constexpr const char* kRuleNegativeGrade = "rule4_negative_grade";
inline constexpr const char* kRuleGradeMismatch = "grade_mismatch";
inline constexpr const char* kRuleTypeSet = "type_set";
inline constexpr const char* kRuleUnknownCitation = "unknown_citation";

bool has_citation_marker(const std::string& reasoning);
std::vector<std::string> cited_ids(const std::string& reasoning);

// Checks the emitted grade (self_grade, which must equal g(signals)) and the
// reasoning against the four rules. `known_ids`, when given, also requires
// every citation to name an entity from the evidence context.
structured::ValidationOutcome validate_consistency(const DetectionResult& r, const GradingConfig& cfg = {},
                                                   const std::set<std::string>* known_ids = nullptr);

// Strict omits the optional confidence field; lenient allows it.
const structured::Schema& detection_schema(structured::SchemaMode mode);

struct DetectorConfig {
  GradingConfig grading;
  int retries = 3;  // structured-output attempts per sentence
  int k = 20;
  std::size_t budget_chars = 4000;
  int workers = 8;
  structured::SchemaMode mode = structured::SchemaMode::Strict;
};

// Never throws for model misbehaviour: exhausted budgets give flagged
// results, gateway errors and unparseable output give failure records.
DetectionResult detect_sentence(const segment::SentenceUnit& sentence, const retrieval::EvidenceContext& context,
                                const std::string& patient_id, llm::Gateway& llm, const DetectorConfig& cfg = {});

std::vector<DetectionResult> detect_document(const std::string& patient_id, const std::string& rewritten_text,
                                             const graph::PatientGraph& g, llm::Gateway& llm,
                                             const DetectorConfig& cfg = {},
                                             std::shared_ptr<const retrieval::Embedder> embedder = nullptr);

json to_json(const DetectionResult& r);
DetectionResult result_from_json(const json& j);

json run_metadata(const llm::Gateway& llm, const DetectorConfig& cfg);
json detections_document(const std::string& patient_id, const std::vector<DetectionResult>& results,
                         const json& metadata);
std::vector<DetectionResult> load_detections(const std::string& path);

}  // namespace faithcheck::detector
