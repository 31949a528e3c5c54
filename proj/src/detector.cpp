#include "faithcheck/detector.hpp"

#include <algorithm>
#include <regex>

#include "faithcheck/concurrency.hpp"
#include "faithcheck/error.hpp"
#include "faithcheck/llm.hpp"
#include "faithcheck/prompts.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::detector {

namespace {

using structured::FieldKind;
using structured::Schema;
using structured::SchemaMode;

const std::regex& marker_pattern() {
  static const std::regex re(R"(\[ent:([^\]\s]+)\])");
  return re;
}

std::vector<std::string> type_names() {
  std::vector<std::string> out;
  for (auto t : kAllHallucinationTypes) out.emplace_back(to_string(t));
  return out;
}

Schema make_schema(SchemaMode mode) {
  Schema s{"detection", "detection/1",
           {
               {.name = "reasoning", .kind = FieldKind::String},
               {.name = "hallucination_status", .kind = FieldKind::Boolean},
               {.name = "hallucination_type", .kind = FieldKind::List, .allowed = type_names(),
                .item_kind = FieldKind::Enum},
               {.name = "conflict", .kind = FieldKind::Integer, .min = 0, .max = 1},
               {.name = "support", .kind = FieldKind::Decimal, .min = 0, .max = 1},
               {.name = "explicit", .kind = FieldKind::Integer, .min = 0, .max = 1},
               {.name = "evidence_grade", .kind = FieldKind::Enum, .allowed = {"E1", "E2", "E3", "E4"}},
           }};
  if (mode == SchemaMode::Lenient) {
    s.fields.push_back({.name = "confidence", .kind = FieldKind::Decimal, .required = false, .min = 0, .max = 1});
  }
  return s;
}

// Fills the model-emitted fields of r from a schema-valid document.
void apply_output(DetectionResult& r, const json& v, const GradingConfig& cfg) {
  r.reasoning = v.at("reasoning").get<std::string>();
  r.hallucination_status = v.at("hallucination_status").get<bool>();
  r.htypes.clear();
  for (const auto& t : v.at("hallucination_type")) r.htypes.insert(*parse_hallucination_type(t.get<std::string>()));
  r.signals.conflict = v.at("conflict").get<int>();
  r.signals.support = v.at("support").get<double>();
  r.signals.explicit_ = v.at("explicit").get<int>();
  r.self_grade = *parse_grade(v.at("evidence_grade").get<std::string>());
  r.grade = grade_evidence(r.signals, cfg);
  r.confidence.reset();
  if (v.contains("confidence") && v.at("confidence").is_number()) r.confidence = v.at("confidence").get<double>();
}

std::set<std::string> context_ids(const retrieval::EvidenceContext& c) {
  std::set<std::string> ids;
  for (const auto& e : c.entities) ids.insert(e.entity_id);
  return ids;
}

}  // namespace

EvidenceGrade grade_evidence(const DetectionSignals& s, const GradingConfig& cfg) {
  if (s.conflict == 1) return EvidenceGrade::E4;
  if (s.support < cfg.tau_s) return EvidenceGrade::E3;
  if (s.explicit_ == 0) return EvidenceGrade::E2;
  return EvidenceGrade::E1;
}

std::string_view to_string(ResultStatus s) {
  switch (s) {
    case ResultStatus::Accepted: return "accepted";
    case ResultStatus::Flagged: return "flagged";
    case ResultStatus::Failed: return "failed";
  }
  return "?";
}

bool has_citation_marker(const std::string& reasoning) { return std::regex_search(reasoning, marker_pattern()); }

std::vector<std::string> cited_ids(const std::string& reasoning) {
  std::vector<std::string> out;
  for (std::sregex_iterator m(reasoning.begin(), reasoning.end(), marker_pattern()), end; m != end; ++m) {
    out.push_back((*m)[1].str());
  }
  return out;
}

structured::ValidationOutcome validate_consistency(const DetectionResult& r, const GradingConfig& cfg,
                                                   const std::set<std::string>* known_ids) {
  structured::ValidationOutcome o;
  o.stage = structured::Stage::Consistency;
  const bool positive_grade = r.grade == EvidenceGrade::E3 || r.grade == EvidenceGrade::E4;
  const std::string g(to_string(r.grade));
  if (r.hallucination_status && !positive_grade) {
    o.add(kRulePositiveGrade, "hallucination_status=true with grade " + g);
  }
  if (r.grade == EvidenceGrade::E3) {
    if (text::trim(r.reasoning).empty()) {
      o.add(kRuleE3Reasoning, "E3 reasoning is empty");
    } else if (has_citation_marker(r.reasoning)) {
      o.add(kRuleE3Reasoning, "E3 reasoning cites evidence markers");
    }
  }
  if (r.grade == EvidenceGrade::E4 && !has_citation_marker(r.reasoning)) {
    o.add(kRuleE4Citation, "E4 reasoning cites no evidence marker");
  }
  if (!r.hallucination_status && positive_grade) {
    o.add(kRuleNegativeGrade, "hallucination_status=false with grade " + g);
  }
  const auto computed = grade_evidence(r.signals, cfg);
  if (r.self_grade != computed || r.grade != computed) {
    o.add(kRuleGradeMismatch, "self-assigned " + std::string(to_string(r.self_grade)) + ", signals give " +
                                  std::string(to_string(computed)));
  }
  if (r.hallucination_status == r.htypes.empty()) {
    o.add(kRuleTypeSet, r.hallucination_status ? "positive verdict without types" : "negative verdict with types");
  }
  if (known_ids) {
    for (const auto& id : cited_ids(r.reasoning)) {
      if (!known_ids->count(id)) o.add(kRuleUnknownCitation, "cited entity " + id + " is not in the evidence");
    }
  }
  return o;
}

const structured::Schema& detection_schema(SchemaMode mode) {
  static const Schema strict = make_schema(SchemaMode::Strict);
  static const Schema lenient = make_schema(SchemaMode::Lenient);
  return mode == SchemaMode::Strict ? strict : lenient;
}

DetectionResult detect_sentence(const segment::SentenceUnit& sentence, const retrieval::EvidenceContext& context,
                                const std::string& patient_id, llm::Gateway& llm, const DetectorConfig& cfg) {
  DetectionResult r;
  r.patient_id = patient_id;
  r.sentence_index = sentence.index;
  r.sentence_text = sentence.text;
  r.context_digest = context.digest();
  r.context_text = context.rendered_text;

  const auto prompt = prompts::render("detect", {{"patient_id", patient_id},
                                                 {"index", std::to_string(sentence.index)},
                                                 {"sentence", sentence.text},
                                                 {"context", context.rendered_text},
                                                 {"tau_s", text::format_double(cfg.grading.tau_s)}});
  std::vector<std::string> digests;
  auto next = [&](int attempt) {
    llm::ChatRequest req;
    req.prompt_asset_id = prompt.asset_id;
    req.rendered_prompt = prompt.text;
    req.temperature = 0.0;
    req.tags = {{"stage", "detect"},
                {"patient_id", patient_id},
                {"sentence_index", std::to_string(sentence.index)},
                {"attempt", std::to_string(attempt)}};
    digests.push_back(req.digest());
    return llm.complete(req);
  };
  const auto known = context_ids(context);
  auto checker = [&](const json& v) {
    DetectionResult probe;
    apply_output(probe, v, cfg.grading);
    return validate_consistency(probe, cfg.grading, &known);
  };

  structured::AcceptResult result;
  try {
    result = structured::accept_or_retry(next, detection_schema(cfg.mode), checker, cfg.retries, cfg.mode);
  } catch (const Error& e) {
    r.status = ResultStatus::Failed;
    r.error_kind = std::string(to_string(e.kind()));
    r.error_message = e.what();
    r.attempts = static_cast<int>(digests.size());
    r.retries_used = r.attempts;
    if (!digests.empty()) r.request_digest = digests.back();
    return r;
  }
  r.attempts = result.attempts;
  if (!result.value) {
    r.status = ResultStatus::Failed;
    r.error_kind = std::string(to_string(ErrorKind::Schema));
    r.error_message = result.violations.empty() ? "no schema-valid output" : result.violations.front().message;
    r.retries_used = result.attempts;
    if (!digests.empty()) r.request_digest = digests.back();
    return r;
  }
  apply_output(r, *result.value, cfg.grading);
  // attempt the retained candidate came from
  int source = result.attempts;
  for (int i = static_cast<int>(result.history.size()); i-- > 0;) {
    if (result.history[i].parse.value) {
      source = i + 1;
      break;
    }
  }
  r.request_digest = digests.at(source - 1);
  if (result.accepted) {
    r.status = ResultStatus::Accepted;
    r.retries_used = result.attempts - 1;
  } else {
    r.status = ResultStatus::Flagged;
    r.retries_used = result.attempts;
    r.violations = result.violations;
  }
  return r;
}

std::vector<DetectionResult> detect_document(const std::string& patient_id, const std::string& rewritten_text,
                                             const graph::PatientGraph& g, llm::Gateway& llm,
                                             const DetectorConfig& cfg,
                                             std::shared_ptr<const retrieval::Embedder> embedder) {
  const auto units = segment::segment(rewritten_text);
  if (units.empty()) return {};
  const retrieval::Retriever retriever(g, std::move(embedder));
  const retrieval::RetrievalOptions ropts{cfg.k, cfg.budget_chars};
  std::vector<DetectionResult> out(units.size());
  parallel_for(units.size(), llm.workers(cfg.workers), [&](std::size_t i) {
    const auto context = retriever.retrieve(units[i].text, units[i].index, ropts);
    out[i] = detect_sentence(units[i], context, patient_id, llm, cfg);
  });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sentence_index < b.sentence_index; });
  return out;
}

json to_json(const DetectionResult& r) {
  json types = json::array();
  for (auto t : r.htypes) types.push_back(std::string(to_string(t)));
  json violations = json::array();
  for (const auto& v : r.violations) violations.push_back({{"rule_id", v.rule_id}, {"message", v.message}});
  const bool failed = r.status == ResultStatus::Failed;
  json j = {{"patient_id", r.patient_id},
            {"sentence_index", r.sentence_index},
            {"sentence_text", r.sentence_text},
            {"status", std::string(to_string(r.status))},
            {"hallucination_status", r.hallucination_status},
            {"hallucination_type", types},
            {"evidence_grade", failed ? json(nullptr) : json(std::string(to_string(r.grade)))},
            {"self_grade", failed ? json(nullptr) : json(std::string(to_string(r.self_grade)))},
            {"reasoning", r.reasoning},
            {"signals",
             failed ? json(nullptr)
                    : json{{"conflict", r.signals.conflict},
                           {"support", r.signals.support},
                           {"explicit", r.signals.explicit_}}},
            {"confidence", r.confidence ? json(*r.confidence) : json(nullptr)},
            {"retries_used", r.retries_used},
            {"attempts", r.attempts},
            {"violations", violations},
            {"context_digest", r.context_digest},
            {"request_digest", r.request_digest},
            {"context", r.context_text}};
  if (failed) {
    j["error_kind"] = r.error_kind;
    j["error_message"] = r.error_message;
  }
  return j;
}

DetectionResult result_from_json(const json& j) {
  DetectionResult r;
  r.patient_id = j.at("patient_id").get<std::string>();
  r.sentence_index = j.at("sentence_index").get<int>();
  r.sentence_text = j.value("sentence_text", "");
  const auto status = j.value("status", "accepted");
  r.status = status == "failed" ? ResultStatus::Failed : status == "flagged" ? ResultStatus::Flagged : ResultStatus::Accepted;
  r.hallucination_status = j.value("hallucination_status", false);
  for (const auto& t : j.value("hallucination_type", json::array())) {
    const auto type = parse_hallucination_type(t.get<std::string>());
    if (!type) fail(ErrorKind::Schema, "unknown hallucination_type " + t.dump());
    r.htypes.insert(*type);
  }
  auto grade_of = [&](const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return EvidenceGrade::E1;
    const auto g = parse_grade(j.at(key).get<std::string>());
    if (!g) fail(ErrorKind::Schema, std::string("bad ") + key + " " + j.at(key).dump());
    return *g;
  };
  r.grade = grade_of("evidence_grade");
  r.self_grade = grade_of("self_grade");
  r.reasoning = j.value("reasoning", "");
  if (j.contains("signals") && j.at("signals").is_object()) {
    const auto& s = j.at("signals");
    r.signals = {s.at("conflict").get<int>(), s.at("support").get<double>(), s.at("explicit").get<int>()};
  }
  if (j.contains("confidence") && j.at("confidence").is_number()) r.confidence = j.at("confidence").get<double>();
  r.retries_used = j.value("retries_used", 0);
  r.attempts = j.value("attempts", 0);
  for (const auto& v : j.value("violations", json::array())) {
    r.violations.push_back({v.at("rule_id").get<std::string>(), v.at("message").get<std::string>()});
  }
  r.context_digest = j.value("context_digest", "");
  r.request_digest = j.value("request_digest", "");
  r.context_text = j.value("context", "");
  r.error_kind = j.value("error_kind", "");
  r.error_message = j.value("error_message", "");
  return r;
}

json run_metadata(const llm::Gateway& llm, const DetectorConfig& cfg) {
  return {{"model", llm.backend().id()},
          {"tau_s", cfg.grading.tau_s},
          {"k", cfg.k},
          {"retries", cfg.retries},
          {"schema_mode", cfg.mode == SchemaMode::Strict ? "strict" : "lenient"},
          {"schema_version", detection_schema(cfg.mode).version},
          {"repair_ruleset", structured::kRepairRulesetVersion},
          {"prompt_versions", {{"detect", prompts::version_of("detect")}}}};
}

json detections_document(const std::string& patient_id, const std::vector<DetectionResult>& results,
                         const json& metadata) {
  json items = json::array();
  for (const auto& r : results) items.push_back(to_json(r));
  return {{"schema_version", kDetectionSchemaVersion},
          {"patient_id", patient_id},
          {"run", metadata},
          {"sentence_count", results.size()},
          {"results", items}};
}

std::vector<DetectionResult> load_detections(const std::string& path) {
  const auto doc = json::parse(text::read_file(path));
  const json& items = doc.is_array() ? doc : doc.at("results");
  std::vector<DetectionResult> out;
  for (const auto& j : items) out.push_back(result_from_json(j));
  return out;
}

}  // namespace faithcheck::detector
