#include "faithcheck/generator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <regex>

#include "faithcheck/assets.hpp"
#include "faithcheck/concurrency.hpp"
#include "faithcheck/error.hpp"
#include "faithcheck/llm.hpp"
#include "faithcheck/prompts.hpp"
#include "faithcheck/random.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::generator {

namespace {

using structured::FieldKind;
using structured::FieldSpec;
using structured::Schema;

std::vector<std::string> type_names() {
  std::vector<std::string> out;
  for (auto t : kAllHallucinationTypes) out.emplace_back(to_string(t));
  return out;
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

std::string last_visible(const std::string& s) {
  std::size_t i = s.size();
  while (i > 0 && (std::isspace(static_cast<unsigned char>(s[i - 1])) || s[i - 1] == '"' || s[i - 1] == ')' ||
                   s[i - 1] == ']' || s[i - 1] == '\'')) {
    --i;
  }
  return i == 0 ? std::string() : std::string(1, s[i - 1]);
}

std::optional<double> number(const std::string& s) {
  try {
    return std::stod(s);
  } catch (...) {
    return std::nullopt;
  }
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the", "and", "was", "were", "with", "for", "from", "that", "this", "patient", "had", "has", "have",
      "are", "been", "his", "her", "their", "patients", "into", "then", "also", "but", "not", "on", "of",
      "in", "to", "at", "by", "as", "is", "an", "a", "or", "be", "which", "after", "during", "while"};
  return words;
}

std::set<std::string> content_tokens(const std::string& s) {
  std::set<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    const bool numeric = std::isdigit(static_cast<unsigned char>(cur[0])) != 0;
    if ((numeric || cur.size() >= 3) && !stopwords().count(cur)) out.insert(cur);
    cur.clear();
  };
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || (c == '.' && !cur.empty() && std::isdigit(static_cast<unsigned char>(cur.back())))) {
      cur += static_cast<char>(std::tolower(u));
    } else {
      flush();
    }
  }
  flush();
  // "98.6." at a sentence end leaves a trailing dot on the number
  std::set<std::string> cleaned;
  for (auto t : out) {
    while (!t.empty() && t.back() == '.') t.pop_back();
    if (!t.empty()) cleaned.insert(t);
  }
  return cleaned;
}

struct Lexicon {
  std::vector<std::string> diagnoses;
  std::vector<std::string> medications;
  std::vector<std::string> labs;
};

const Lexicon& lexicon() {
  static const Lexicon lex = [] {
    Lexicon l;
    const auto vocab = json::parse(assets::get("vocabulary.json"));
    for (const auto& d : vocab.at("primary_diagnoses")) l.diagnoses.push_back(text::fold(d.at("label").get<std::string>()));
    for (const auto& d : vocab.at("comorbidities")) l.diagnoses.push_back(text::fold(d.at("label").get<std::string>()));
    for (const auto& d : vocab.at("negatable_history")) l.diagnoses.push_back(text::fold(d.get<std::string>()));
    for (const auto& [name, _] : vocab.at("medications").items()) l.medications.push_back(text::fold(name));
    for (const auto& [name, _] : vocab.at("labs").items()) l.labs.push_back(text::fold(name));
    const auto norm = json::parse(assets::get("normalization.json"));
    const auto& syn = norm.at("synonyms");
    auto add_synonyms = [&](const char* etype, std::vector<std::string>& into) {
      if (!syn.contains(etype)) return;
      for (const auto& [alias, target] : syn.at(etype).items()) {
        into.push_back(text::fold(alias));
        into.push_back(text::fold(target.get<std::string>()));
      }
    };
    add_synonyms("DIAGNOSIS", l.diagnoses);
    add_synonyms("MEDICATION", l.medications);
    return l;
  }();
  return lex;
}

bool mentions_any(const std::string& sentence, const std::vector<std::string>& words) {
  return std::any_of(words.begin(), words.end(),
                     [&](const std::string& w) { return !w.empty() && text::contains_word(sentence, w); });
}

std::map<std::string, std::string> base_tags(const std::string& stage, const std::string& patient_id, int index) {
  return {{"stage", stage}, {"patient_id", patient_id}, {"sentence_index", std::to_string(index)}};
}

}  // namespace

PlausibilityBounds PlausibilityBounds::from_json(const json& j) {
  PlausibilityBounds b;
  for (const auto& [key, range] : j.items()) {
    if (!range.is_array() || range.size() != 2) fail(ErrorKind::Config, "plausibility bound '" + key + "' must be [lo, hi]");
    b.bounds[key] = {range[0].get<double>(), range[1].get<double>()};
  }
  return b;
}

const PlausibilityBounds& PlausibilityBounds::defaults() {
  static const PlausibilityBounds b = from_json(json::parse(assets::get("plausibility.json")).at("rewrite"));
  return b;
}

std::vector<std::string> PlausibilityBounds::check(const std::string& sentence) const {
  struct Probe {
    const char* key;
    std::regex pattern;
    int group;
  };
  static const auto icase = std::regex::ECMAScript | std::regex::icase;
  static const std::vector<Probe> probes = {
      {"systolic_bp", std::regex(R"((?:blood pressure|\bbp\b)[^0-9]{0,20}(\d{1,4})\s*/\s*(\d{1,4}))", icase), 1},
      {"diastolic_bp", std::regex(R"((?:blood pressure|\bbp\b)[^0-9]{0,20}(\d{1,4})\s*/\s*(\d{1,4}))", icase), 2},
      {"systolic_bp", std::regex(R"(\b(\d{1,4})\s*/\s*(\d{1,4})\s*mm\s*hg)", icase), 1},
      {"diastolic_bp", std::regex(R"(\b(\d{1,4})\s*/\s*(\d{1,4})\s*mm\s*hg)", icase), 2},
      {"heart_rate", std::regex(R"((?:heart rate|\bhr\b|pulse)[^0-9]{0,20}(\d+(?:\.\d+)?))", icase), 1},
      {"heart_rate", std::regex(R"((\d+(?:\.\d+)?)\s*bpm\b)", icase), 1},
      {"respiratory_rate", std::regex(R"((?:respiratory rate|\brr\b)[^0-9]{0,20}(\d+(?:\.\d+)?))", icase), 1},
      {"temperature_f", std::regex(R"((?:temperature|\btemp\b)[^0-9]{0,20}(\d+(?:\.\d+)?))", icase), 1},
      {"temperature_f", std::regex(R"((\d+(?:\.\d+)?)\s*(?:°\s*)?f\b)", icase), 1},
      {"spo2", std::regex(R"((?:spo2|o2 sat\w*|oxygen saturation|saturating)[^0-9]{0,20}(\d+(?:\.\d+)?))", icase), 1},
      {"glucose", std::regex(R"(glucose[^0-9]{0,20}(\d+(?:\.\d+)?))", icase), 1},
      {"hospital_day", std::regex(R"(hospital day\s*(\d+))", icase), 1},
  };
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : probes) {
    auto it = bounds.find(p.key);
    if (it == bounds.end()) continue;
    for (std::sregex_iterator m(sentence.begin(), sentence.end(), p.pattern), end; m != end; ++m) {
      auto v = number((*m)[p.group].str());
      if (!v) continue;
      const auto [lo, hi] = it->second;
      if (*v < lo || *v > hi) {
        std::string msg = std::string(p.key) + " " + (*m)[p.group].str() + " outside [" + text::format_double(lo) +
                          ", " + text::format_double(hi) + "]";
        if (seen.insert(msg).second) out.push_back(msg);
      }
    }
  }
  return out;
}

const Schema& applicability_schema() {
  static const Schema s{"applicability", "applicability/1",
                        {
                            {.name = "has_verifiable_fact", .kind = FieldKind::Boolean},
                            {.name = "plausibly_rewritable", .kind = FieldKind::Boolean},
                            {.name = "moderate_complexity", .kind = FieldKind::Boolean},
                            {.name = "rationale", .kind = FieldKind::String},
                        }};
  return s;
}

const Schema& generation_schema() {
  static const Schema s{"generation", "generation/1",
                        {
                            {.name = "hallucinated_text", .kind = FieldKind::String, .non_empty = true},
                            {.name = "hallucination_type", .kind = FieldKind::Enum, .allowed = type_names()},
                            {.name = "explanation", .kind = FieldKind::String},
                        }};
  return s;
}

ApplicabilityJudgment assess_applicability(const SentenceUnit& sentence, const std::string& patient_id,
                                           llm::Gateway& llm, int attempts) {
  const auto prompt = prompts::render(
      "applicability", {{"patient_id", patient_id}, {"index", std::to_string(sentence.index)}, {"sentence", sentence.text}});
  auto next = [&](int attempt) {
    llm::ChatRequest req;
    req.prompt_asset_id = prompt.asset_id;
    req.rendered_prompt = prompt.text;
    req.max_tokens = 256;
    req.tags = base_tags("applicability", patient_id, sentence.index);
    req.tags["attempt"] = std::to_string(attempt);
    return llm.complete(req);
  };
  auto result = structured::accept_or_retry(
      next, applicability_schema(), [](const json&) { return structured::ValidationOutcome{}; }, attempts);
  if (!result.accepted) {
    std::string detail = result.violations.empty() ? "no parseable output" : result.violations.front().message;
    fail(ErrorKind::Schema, "applicability for sentence " + std::to_string(sentence.index) + ": " + detail);
  }
  const auto& v = *result.value;
  ApplicabilityJudgment j;
  j.sentence_index = sentence.index;
  j.has_verifiable_fact = v.at("has_verifiable_fact").get<bool>();
  j.plausibly_rewritable = v.at("plausibly_rewritable").get<bool>();
  j.moderate_complexity = v.at("moderate_complexity").get<bool>();
  j.rationale = v.at("rationale").get<std::string>();
  j.applicable = j.has_verifiable_fact && j.plausibly_rewritable && j.moderate_complexity;
  return j;
}

std::vector<ApplicabilityJudgment> assess_all(const std::vector<SentenceUnit>& units, const std::string& patient_id,
                                              llm::Gateway& llm, int workers, int attempts) {
  std::vector<ApplicabilityJudgment> out(units.size());
  parallel_for(units.size(), llm.workers(workers),
               [&](std::size_t i) { out[i] = assess_applicability(units[i], patient_id, llm, attempts); });
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.sentence_index < b.sentence_index; });
  return out;
}

std::vector<int> sample_targets(const std::vector<ApplicabilityJudgment>& judgments, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) fail(ErrorKind::InvalidArgument, "ratio must be in (0, 1]");
  std::vector<int> applicable;
  for (const auto& j : judgments) {
    if (j.applicable) applicable.push_back(j.sentence_index);
  }
  std::sort(applicable.begin(), applicable.end());
  // 1e-9 absorbs products like 0.7 * 10 = 7.000000000000001
  const auto want = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(applicable.size()) - 1e-9));
  Rng rng(seed);
  rng.shuffle(applicable);
  applicable.resize(std::min(want, applicable.size()));
  std::sort(applicable.begin(), applicable.end());
  return applicable;
}

std::set<FactClass> fact_classes(const std::string& sentence) {
  static const auto icase = std::regex::ECMAScript | std::regex::icase;
  static const std::regex diagnosis_cue(R"(\b(diagnosed|diagnosis|history of|treated for|continued for|presented with)\b)", icase);
  static const std::regex medication_cue(R"(\b(\d+(\.\d+)?\s*(mg|mcg|g|ml|units?)|started|dose|tablet|daily|twice daily)\b)", icase);
  static const std::regex exam_cue(
      R"(\b(x-ray|radiograph|ct|mri|ultrasound|echo\w*|imaging|showed|revealed|labs?|notable|exam\w*|consolidation|effusion|culture|urinalysis|ecg|ekg)\b)",
      icase);
  static const std::regex time_cue(
      R"(\b(day|days|week|weeks|hour|hours|month|months|year|years|overnight|\d{4}-\d{2}-\d{2}|admission|discharge[d]?)\b)",
      icase);
  static const std::regex negation_cue(R"(\b(no|not|denies|denied|without|negative|none)\b)", icase);
  static const std::regex value_cue(R"(\d)");

  const auto& lex = lexicon();
  std::set<FactClass> out;
  if (mentions_any(sentence, lex.diagnoses) || std::regex_search(sentence, diagnosis_cue)) out.insert(FactClass::Diagnosis);
  if (mentions_any(sentence, lex.medications) || std::regex_search(sentence, medication_cue)) out.insert(FactClass::Medication);
  if (mentions_any(sentence, lex.labs) || std::regex_search(sentence, exam_cue)) out.insert(FactClass::Exam);
  if (std::regex_search(sentence, time_cue)) out.insert(FactClass::Time);
  if (std::regex_search(sentence, value_cue)) out.insert(FactClass::Value);
  if (std::regex_search(sentence, negation_cue)) out.insert(FactClass::Negation);
  return out;
}

bool compatible(HallucinationType t, const std::set<FactClass>& classes) {
  switch (t) {
    case HallucinationType::DiagnosisError: return classes.count(FactClass::Diagnosis) > 0;
    case HallucinationType::MedicationError: return classes.count(FactClass::Medication) > 0;
    case HallucinationType::ExamResultError: return classes.count(FactClass::Exam) > 0;
    case HallucinationType::TimeError: return classes.count(FactClass::Time) > 0;
    case HallucinationType::ValueError: return classes.count(FactClass::Value) > 0;
    case HallucinationType::NegationError:
      return classes.count(FactClass::Negation) > 0 || classes.count(FactClass::Diagnosis) > 0;
    case HallucinationType::InventedFact: return true;
  }
  return false;
}

std::vector<HallucinationType> assign_types(const std::vector<int>& targets, const std::vector<SentenceUnit>& units,
                                            const std::vector<bool>& has_evidence) {
  std::vector<HallucinationType> out;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int idx = targets[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= units.size()) {
      fail(ErrorKind::IndexOutOfRange, "target " + std::to_string(idx));
    }
    if (i < has_evidence.size() && !has_evidence[i]) {
      out.push_back(HallucinationType::InventedFact);
      continue;
    }
    const auto classes = fact_classes(units[idx].text);
    for (std::size_t step = 0; step < kAllHallucinationTypes.size(); ++step) {
      const auto t = kAllHallucinationTypes[(cursor + step) % kAllHallucinationTypes.size()];
      if (compatible(t, classes)) {
        out.push_back(t);
        cursor = (cursor + step + 1) % kAllHallucinationTypes.size();
        break;
      }
    }
  }
  return out;
}

std::string evidence_excerpt(const std::string& sentence, const ehr::PatientRecord& record, std::size_t max_lines) {
  std::vector<std::string> lines;
  for (const auto& d : record.diagnoses) lines.push_back("Diagnosis: " + d.code + " (" + d.label + ")");
  for (const auto& m : record.medications) {
    std::string line = "Medication: " + m.drug;
    for (const auto* part : {&m.dose, &m.route, &m.frequency}) {
      if (!part->empty()) line += " " + *part;
    }
    lines.push_back(line);
  }
  for (const auto& l : record.labs) {
    lines.push_back("Lab: " + l.test + " " + l.value + (l.unit.empty() ? "" : " " + l.unit) + " at " + l.charttime);
  }
  for (const auto& t : record.triage) {
    std::vector<std::string> parts;
    if (t.temperature) parts.push_back("temperature " + text::format_double(*t.temperature) + " F");
    if (t.heart_rate) parts.push_back("heart rate " + text::format_double(*t.heart_rate));
    if (t.respiratory_rate) parts.push_back("respiratory rate " + text::format_double(*t.respiratory_rate));
    if (t.spo2) parts.push_back("SpO2 " + text::format_double(*t.spo2) + "%");
    if (t.sbp && t.dbp) parts.push_back("blood pressure " + text::format_double(*t.sbp) + "/" + text::format_double(*t.dbp));
    if (t.pain) parts.push_back("pain " + std::to_string(*t.pain));
    if (!parts.empty()) lines.push_back("Vitals: " + text::join(parts, ", "));
    if (!t.chief_complaint.empty()) lines.push_back("Chief complaint: " + t.chief_complaint);
  }
  for (const auto& s : record.ed_stays) {
    lines.push_back("ED stay: " + s.in_time + " to " + s.out_time + (s.disposition.empty() ? "" : ", " + s.disposition));
  }
  for (const auto& u : segment::segment(record.discharge_text)) lines.push_back("Discharge note: " + u.text);
  for (const auto& report : record.radiology_reports) {
    for (const auto& u : segment::segment(report)) lines.push_back("Radiology: " + u.text);
  }

  const auto wanted = content_tokens(sentence);
  std::vector<std::pair<int, std::size_t>> scored;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto colon = lines[i].find(": ");
    const auto tokens = content_tokens(lines[i].substr(colon + 2));
    int score = 0;
    for (const auto& t : tokens) score += static_cast<int>(wanted.count(t));
    if (score > 0) scored.emplace_back(-score, i);
  }
  std::stable_sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && out.size() < max_lines; ++i) {
    const auto& line = lines[scored[i].second];
    if (std::find(out.begin(), out.end(), line) == out.end()) out.push_back(line);
  }
  return text::join(out, "\n");
}

HallucinationSample generate_sample(const SentenceUnit& sentence, const ehr::PatientRecord& record,
                                    HallucinationType htype, llm::Gateway& llm, const GenerationOptions& options,
                                    int regeneration) {
  const std::string evidence = evidence_excerpt(sentence.text, record);
  const std::string type_name(to_string(htype));
  const auto prompt = prompts::render("generate", {{"patient_id", record.patient_id},
                                                   {"htype", type_name},
                                                   {"sentence", sentence.text},
                                                   {"evidence", evidence.empty() ? "(none)" : evidence}});
  auto next = [&](int attempt) {
    llm::ChatRequest req;
    req.prompt_asset_id = prompt.asset_id;
    req.rendered_prompt = prompt.text;
    req.temperature = options.temperature;
    req.max_tokens = 512;
    req.tags = base_tags("generate", record.patient_id, sentence.index);
    req.tags["htype"] = type_name;
    req.tags["attempt"] = std::to_string(attempt);
    req.tags["regeneration"] = std::to_string(regeneration);
    return llm.complete(req);
  };
  auto checker = [&](const json& v) {
    structured::ValidationOutcome o;
    o.stage = structured::Stage::Consistency;
    if (v.at("hallucination_type").get<std::string>() != type_name) {
      o.add("type_match", "requested " + type_name + ", got " + v.at("hallucination_type").get<std::string>());
    }
    return o;
  };
  auto result = structured::accept_or_retry(next, generation_schema(), checker, options.attempts);
  if (!result.accepted) {
    std::string detail = result.violations.empty() ? "no parseable output" : result.violations.front().message;
    fail(ErrorKind::Schema, "generation for sentence " + std::to_string(sentence.index) + ": " + detail);
  }
  HallucinationSample s;
  s.patient_id = record.patient_id;
  s.sentence_index = sentence.index;
  s.appended = htype == HallucinationType::InventedFact;
  s.original_text = sentence.text;
  s.hallucinated_text = text::trim(result.value->at("hallucinated_text").get<std::string>());
  s.htype = htype;
  s.generation_grade = generation_grade_for(htype);
  s.explanation = result.value->at("explanation").get<std::string>();
  s.evidence_excerpt = evidence;

  const auto& bounds = options.bounds ? *options.bounds : PlausibilityBounds::defaults();
  const auto problems = bounds.check(s.hallucinated_text);
  if (!problems.empty()) fail(ErrorKind::PlausibilityReject, text::join(problems, "; "));
  return s;
}

Verdict verify_sample(const HallucinationSample& s) {
  Verdict v;
  auto reject = [&](std::string reason) {
    v.accepted = false;
    v.reasons.push_back(std::move(reason));
  };
  if (s.patient_id.empty()) reject("format: patient_id missing");
  if (s.original_text.empty()) reject("format: original_text missing");
  if (s.hallucinated_text.empty()) reject("format: hallucinated_text missing");
  if (s.sentence_index < 0) reject("format: sentence_index negative");
  if (s.generation_grade != generation_grade_for(s.htype)) {
    reject("format: " + std::string(to_string(s.htype)) + " must be graded " +
           std::string(to_string(generation_grade_for(s.htype))));
  }
  if (s.appended != (s.htype == HallucinationType::InventedFact)) reject("format: appended flag disagrees with type");

  if (s.hallucinated_text == s.original_text) reject("logic: rewrite identical to original");
  if (s.htype != HallucinationType::InventedFact && text::trim(s.evidence_excerpt).empty()) {
    reject("logic: conflict type without record evidence");
  }
  if (!s.hallucinated_text.empty()) {
    const unsigned char first = static_cast<unsigned char>(s.hallucinated_text.front());
    if (!(std::isupper(first) || std::isdigit(first))) reject("logic: rewrite must start a sentence");
    const auto last = last_visible(s.hallucinated_text);
    if (last.empty() || !is_terminal(last[0])) reject("logic: rewrite must end with terminal punctuation");
    // a following sentence must still split off, so indices stay aligned
    if (segment::segment(s.hallucinated_text + " Next.").size() != 2) reject("logic: rewrite is not exactly one sentence");
  }
  return v;
}

RewriteResult rewrite_document(const std::string& document, const std::vector<SentenceUnit>& units,
                               const std::vector<HallucinationSample>& samples) {
  const int n = static_cast<int>(units.size());
  std::map<int, const HallucinationSample*> substitutions;
  std::vector<const HallucinationSample*> appended;
  for (const auto& s : samples) {
    if (s.sentence_index < 0 || s.sentence_index >= n) {
      fail(ErrorKind::IndexOutOfRange, "sample addresses sentence " + std::to_string(s.sentence_index) + " of " +
                                           std::to_string(n));
    }
    if (s.appended) {
      appended.push_back(&s);
    } else if (!substitutions.emplace(s.sentence_index, &s).second) {
      fail(ErrorKind::InvalidArgument, "two substitutions for sentence " + std::to_string(s.sentence_index));
    }
  }
  std::stable_sort(appended.begin(), appended.end(),
                   [](const auto* a, const auto* b) { return a->sentence_index < b->sentence_index; });

  RewriteResult out;
  std::size_t pos = 0;
  for (const auto& [idx, s] : substitutions) {
    const auto& u = units[idx];
    out.text.append(document, pos, u.start - pos);
    out.text += s->hallucinated_text;
    pos = u.end;
    auto copy = *s;
    copy.rewritten_index = idx;
    out.samples.push_back(copy);
    out.gold.push_back({idx, s->htype, s->generation_grade});
  }
  out.text.append(document, pos, std::string::npos);

  if (!appended.empty()) {
    std::size_t body_end = out.text.size();
    while (body_end > 0 && std::isspace(static_cast<unsigned char>(out.text[body_end - 1]))) --body_end;
    const std::string tail = out.text.substr(body_end);
    out.text.resize(body_end);
    int next_index = n;
    for (const auto* s : appended) {
      if (!out.text.empty()) {
        const auto last = last_visible(out.text);
        out.text += (!last.empty() && is_terminal(last[0])) ? " " : "\n\n";
      }
      out.text += s->hallucinated_text;
      auto copy = *s;
      copy.rewritten_index = next_index;
      out.samples.push_back(copy);
      out.gold.push_back({next_index, s->htype, s->generation_grade});
      ++next_index;
    }
    out.text += tail;
  }
  std::sort(out.samples.begin(), out.samples.end(),
            [](const auto& a, const auto& b) { return a.rewritten_index < b.rewritten_index; });
  out.sentence_count = n + static_cast<int>(appended.size());
  return out;
}

DocumentRun generate_for_document(const ehr::PatientRecord& record, llm::Gateway& llm, const DocumentOptions& options) {
  DocumentRun run;
  run.patient_id = record.patient_id;
  run.record_chars = record.discharge_text.size();
  for (const auto& r : record.radiology_reports) run.record_chars += r.size();
  run.units = segment::segment(record.target_text);
  run.judgments = assess_all(run.units, record.patient_id, llm, options.workers, options.generation.attempts);
  run.targets = sample_targets(run.judgments, options.ratio, options.seed);

  std::vector<bool> has_evidence;
  for (int idx : run.targets) has_evidence.push_back(!evidence_excerpt(run.units[idx].text, record).empty());
  const auto types = assign_types(run.targets, run.units, has_evidence);

  struct Slot {
    std::optional<HallucinationSample> sample;
    std::vector<std::string> reasons;
    int generations = 0;
  };
  std::vector<Slot> slots(run.targets.size());
  parallel_for(run.targets.size(), llm.workers(options.workers), [&](std::size_t i) {
    const auto& unit = run.units[run.targets[i]];
    auto& slot = slots[i];
    for (int regen = 0; regen <= options.regeneration_attempts; ++regen) {
      ++slot.generations;
      try {
        auto s = generate_sample(unit, record, types[i], llm, options.generation, regen);
        auto verdict = verify_sample(s);
        if (verdict.accepted) {
          slot.sample = std::move(s);
          return;
        }
        for (auto& r : verdict.reasons) slot.reasons.push_back(std::move(r));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::PlausibilityReject && e.kind() != ErrorKind::Schema) throw;
        slot.reasons.push_back(e.what());
      }
    }
  });
  for (std::size_t i = 0; i < slots.size(); ++i) {
    run.generations += slots[i].generations;
    if (slots[i].sample) {
      run.samples.push_back(*slots[i].sample);
    } else {
      run.rejected.push_back({run.targets[i], types[i], slots[i].reasons});
    }
  }
  run.rewrite = rewrite_document(record.target_text, run.units, run.samples);
  run.samples = run.rewrite.samples;
  return run;
}

json to_json(const HallucinationSample& s) {
  return {{"schema_version", kSampleSchemaVersion},
          {"patient_id", s.patient_id},
          {"sentence_index", s.sentence_index},
          {"rewritten_index", s.rewritten_index},
          {"appended", s.appended},
          {"original_text", s.original_text},
          {"hallucinated_text", s.hallucinated_text},
          {"hallucination_type", std::string(to_string(s.htype))},
          {"generation_grade", std::string(to_string(s.generation_grade))},
          {"explanation", s.explanation},
          {"evidence_excerpt", s.evidence_excerpt}};
}

HallucinationSample sample_from_json(const json& j) {
  HallucinationSample s;
  s.patient_id = j.at("patient_id").get<std::string>();
  s.sentence_index = j.at("sentence_index").get<int>();
  s.rewritten_index = j.value("rewritten_index", -1);
  s.original_text = j.at("original_text").get<std::string>();
  s.hallucinated_text = j.at("hallucinated_text").get<std::string>();
  const auto type = parse_hallucination_type(j.at("hallucination_type").get<std::string>());
  if (!type) fail(ErrorKind::Schema, "unknown hallucination_type " + j.at("hallucination_type").dump());
  s.htype = *type;
  const auto grade = parse_grade(j.at("generation_grade").get<std::string>());
  if (!grade) fail(ErrorKind::Schema, "unknown generation_grade " + j.at("generation_grade").dump());
  s.generation_grade = *grade;
  s.appended = j.value("appended", s.htype == HallucinationType::InventedFact);
  s.explanation = j.value("explanation", "");
  s.evidence_excerpt = j.value("evidence_excerpt", "");
  return s;
}

json samples_document(const DocumentRun& run) {
  json samples = json::array();
  for (const auto& s : run.samples) samples.push_back(to_json(s));
  json rejected = json::array();
  for (const auto& r : run.rejected) {
    rejected.push_back({{"sentence_index", r.sentence_index},
                        {"hallucination_type", std::string(to_string(r.htype))},
                        {"reasons", r.reasons}});
  }
  json judgments = json::array();
  for (const auto& j : run.judgments) {
    judgments.push_back({{"sentence_index", j.sentence_index},
                         {"applicable", j.applicable},
                         {"has_verifiable_fact", j.has_verifiable_fact},
                         {"plausibly_rewritable", j.plausibly_rewritable},
                         {"moderate_complexity", j.moderate_complexity},
                         {"rationale", j.rationale}});
  }
  json gold = json::array();
  for (const auto& g : run.rewrite.gold) {
    gold.push_back({{"sentence_index", g.sentence_index},
                    {"hallucination_type", std::string(to_string(g.htype))},
                    {"grade", std::string(to_string(g.grade))}});
  }
  return {{"schema_version", kSampleSchemaVersion},
          {"patient_id", run.patient_id},
          {"sentence_count", run.units.size()},
          {"record_chars", run.record_chars},
          {"rewritten_sentence_count", run.rewrite.sentence_count},
          {"targets", run.targets},
          {"generations", run.generations},
          {"judgments", judgments},
          {"samples", samples},
          {"rejected", rejected},
          {"gold", gold}};
}

std::vector<HallucinationSample> load_samples(const std::string& path) {
  const auto doc = json::parse(text::read_file(path));
  const json& items = doc.is_array() ? doc : doc.at("samples");
  std::vector<HallucinationSample> out;
  for (const auto& j : items) out.push_back(sample_from_json(j));
  return out;
}

}  // namespace faithcheck::generator
