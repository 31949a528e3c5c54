#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithcheck/ehr.hpp"
#include "faithcheck/segment.hpp"
#include "faithcheck/structured.hpp"
#include "faithcheck/types.hpp"

namespace faithcheck::llm {
class Gateway;
}

namespace faithcheck::generator {

using nlohmann::json;
using segment::SentenceUnit;

inline constexpr const char* kSampleSchemaVersion = "samples/1";

struct ApplicabilityJudgment {
  int sentence_index = 0;
  bool applicable = false;
  bool has_verifiable_fact = false;
  bool plausibly_rewritable = false;
  bool moderate_complexity = false;
  std::string rationale;
};

struct HallucinationSample {
  std::string patient_id;
  int sentence_index = 0;     // sentence the rewrite is anchored to
  int rewritten_index = -1;   // position in the rewritten document
  bool appended = false;      // invented_fact claims are appended, not spliced
  std::string original_text;
  std::string hallucinated_text;
  HallucinationType htype = HallucinationType::InventedFact;
  EvidenceGrade generation_grade = EvidenceGrade::E3;
  std::string explanation;
  std::string evidence_excerpt;
};

struct Verdict {
  bool accepted = true;
  std::vector<std::string> reasons;
};

// Numeric guard applied to rewrites (systolic_bp, heart_rate, ...).
struct PlausibilityBounds {
  std::map<std::string, std::pair<double, double>> bounds;

  static PlausibilityBounds from_json(const json& j);
  static const PlausibilityBounds& defaults();  // assets/plausibility.json "rewrite"
  // Empty when plausible; otherwise one message per violated bound.
  std::vector<std::string> check(const std::string& text) const;
};

const structured::Schema& applicability_schema();
const structured::Schema& generation_schema();

ApplicabilityJudgment assess_applicability(const SentenceUnit& sentence, const std::string& patient_id,
                                           llm::Gateway& llm, int attempts = 3);
std::vector<ApplicabilityJudgment> assess_all(const std::vector<SentenceUnit>& units, const std::string& patient_id,
                                              llm::Gateway& llm, int workers = 8, int attempts = 3);

// ceil(ratio * |applicable|) applicable indices, ascending.
std::vector<int> sample_targets(const std::vector<ApplicabilityJudgment>& judgments, double ratio, std::uint64_t seed);

enum class FactClass { Diagnosis, Medication, Exam, Time, Value, Negation };
std::set<FactClass> fact_classes(const std::string& sentence);
bool compatible(HallucinationType t, const std::set<FactClass>& classes);

// Round-robin over the seven types (in declaration order) restricted to
// compatible ones; invented_fact is always compatible. `has_evidence[i]`
// false forces invented_fact for target i.
std::vector<HallucinationType> assign_types(const std::vector<int>& targets, const std::vector<SentenceUnit>& units,
                                            const std::vector<bool>& has_evidence);

// Record lines sharing content words or numbers with the sentence.
std::string evidence_excerpt(const std::string& sentence, const ehr::PatientRecord& record, std::size_t max_lines = 5);

struct GenerationOptions {
  double temperature = 0.7;
  int attempts = 3;  // structured-output budget per LLM generation
  const PlausibilityBounds* bounds = nullptr;
};

// Throws PlausibilityReject, Schema, Llm.
HallucinationSample generate_sample(const SentenceUnit& sentence, const ehr::PatientRecord& record,
                                    HallucinationType htype, llm::Gateway& llm, const GenerationOptions& options = {},
                                    int regeneration = 0);

Verdict verify_sample(const HallucinationSample& sample);

struct GoldEntry {
  int sentence_index = 0;  // in the rewritten document
  HallucinationType htype = HallucinationType::InventedFact;
  EvidenceGrade grade = EvidenceGrade::E3;
};

struct RewriteResult {
  std::string text;
  std::vector<HallucinationSample> samples;  // with rewritten_index filled in
  std::vector<GoldEntry> gold;               // ascending index
  int sentence_count = 0;
};

// Throws IndexOutOfRange for a sample that does not address a unit.
RewriteResult rewrite_document(const std::string& document, const std::vector<SentenceUnit>& units,
                               const std::vector<HallucinationSample>& samples);

struct DocumentOptions {
  double ratio = 0.4;
  std::uint64_t seed = 7;
  int workers = 8;
  int regeneration_attempts = 2;  // after the first generation
  GenerationOptions generation;
};

struct RejectedSample {
  int sentence_index = 0;
  HallucinationType htype = HallucinationType::InventedFact;
  std::vector<std::string> reasons;
};

struct DocumentRun {
  std::string patient_id;
  std::vector<SentenceUnit> units;
  std::vector<ApplicabilityJudgment> judgments;
  std::vector<int> targets;
  std::vector<HallucinationSample> samples;  // accepted, ascending anchor index
  std::vector<RejectedSample> rejected;      // targets with no accepted sample
  int generations = 0;                       // LLM generation calls made
  std::size_t record_chars = 0;              // discharge note + radiology text
  RewriteResult rewrite;
};

DocumentRun generate_for_document(const ehr::PatientRecord& record, llm::Gateway& llm,
                                  const DocumentOptions& options = {});

json to_json(const HallucinationSample& s);
HallucinationSample sample_from_json(const json& j);
json samples_document(const DocumentRun& run);
std::vector<HallucinationSample> load_samples(const std::string& path);

}  // namespace faithcheck::generator
