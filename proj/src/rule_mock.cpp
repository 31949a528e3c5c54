#include "faithcheck/rule_mock.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "faithcheck/assets.hpp"
#include "faithcheck/generator.hpp"
#include "faithcheck/hash.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::mock {

namespace {

using nlohmann::json;

const std::map<std::string, std::string>& diagnosis_swaps() {
  static const std::map<std::string, std::string> m = {
      {"pneumonia", "tuberculosis"},
      {"acute kidney injury", "chronic kidney disease"},
      {"urinary tract infection", "pyelonephritis"},
      {"heart failure", "pulmonary embolism"},
      {"acute pancreatitis", "acute cholecystitis"},
      {"cellulitis", "osteomyelitis"},
      {"type 2 diabetes mellitus", "type 1 diabetes mellitus"},
      {"hypertension", "pulmonary hypertension"},
      {"hyperlipidemia", "hypertriglyceridemia"},
      {"atrial fibrillation", "atrial flutter"},
      {"asthma", "chronic obstructive pulmonary disease"},
      {"hypothyroidism", "hyperthyroidism"},
      {"diabetes", "hypertension"},
      {"stroke", "seizure disorder"},
      {"chronic kidney disease", "cirrhosis"},
      {"liver disease", "kidney disease"},
  };
  return m;
}

const std::map<std::string, std::string>& medication_swaps() {
  static const std::map<std::string, std::string> m = {
      {"azithromycin", "clarithromycin"}, {"ceftriaxone", "cefepime"},
      {"sodium chloride 0.9%", "lactated ringer's"}, {"nitrofurantoin", "ciprofloxacin"},
      {"furosemide", "torsemide"},        {"metoprolol", "carvedilol"},
      {"morphine", "hydromorphone"},      {"ondansetron", "metoclopramide"},
      {"cefazolin", "vancomycin"},        {"acetaminophen", "ibuprofen"},
      {"metformin", "glipizide"},         {"lisinopril", "losartan"},
      {"atorvastatin", "simvastatin"},    {"warfarin", "apixaban"},
      {"albuterol", "ipratropium"},       {"levothyroxine", "methimazole"},
      {"aspirin", "clopidogrel"},
  };
  return m;
}

const std::vector<std::string>& invented_claims() {
  static const std::vector<std::string> v = {
      "Underwent appendectomy during the admission.",
      "A lumbar puncture was performed on hospital day 2.",
      "Patient received a transfusion of two units of packed red blood cells.",
      "An echocardiogram showed severe aortic stenosis.",
      "Patient reported a penicillin allergy with anaphylaxis.",
      "Physical therapy recommended discharge to a rehabilitation facility.",
      "A colonoscopy revealed a sessile polyp that was removed.",
  };
  return v;
}

struct Vocab {
  std::vector<std::pair<std::string, std::string>> diagnoses;   // folded, display
  std::vector<std::pair<std::string, std::string>> medications;
  std::vector<std::pair<std::string, std::string>> labs;
};

const Vocab& vocab() {
  static const Vocab v = [] {
    Vocab out;
    const auto j = json::parse(assets::get("vocabulary.json"));
    for (const auto& d : j.at("primary_diagnoses")) {
      const auto label = d.at("label").get<std::string>();
      out.diagnoses.emplace_back(text::fold(label), label);
    }
    for (const auto& d : j.at("comorbidities")) {
      const auto label = d.at("label").get<std::string>();
      out.diagnoses.emplace_back(text::fold(label), label);
    }
    for (const auto& d : j.at("negatable_history")) {
      const auto label = d.get<std::string>();
      out.diagnoses.emplace_back(text::fold(label), label);
    }
    for (const auto& [name, _] : j.at("medications").items()) out.medications.emplace_back(text::fold(name), name);
    for (const auto& [name, _] : j.at("labs").items()) out.labs.emplace_back(text::fold(name), name);
    // longest first so "chronic kidney disease" wins over "kidney disease"
    auto by_length = [](const auto& a, const auto& b) {
      return a.first.size() != b.first.size() ? a.first.size() > b.first.size() : a.first < b.first;
    };
    std::sort(out.diagnoses.begin(), out.diagnoses.end(), by_length);
    std::sort(out.medications.begin(), out.medications.end(), by_length);
    std::sort(out.labs.begin(), out.labs.end(), by_length);
    return out;
  }();
  return v;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Case-insensitive whole-word search.
std::size_t find_word(const std::string& hay, const std::string& needle_folded, std::size_t from = 0) {
  const std::string low = text::lower(hay);
  for (std::size_t pos = low.find(needle_folded, from); pos != std::string::npos;
       pos = low.find(needle_folded, pos + 1)) {
    const bool left = pos == 0 || !word_char(low[pos - 1]);
    const std::size_t end = pos + needle_folded.size();
    const bool right = end >= low.size() || !word_char(low[end]) || !word_char(needle_folded.back());
    if (left && right) return pos;
  }
  return std::string::npos;
}

std::string match_case(const std::string& original, std::string replacement) {
  if (!original.empty() && std::isupper(static_cast<unsigned char>(original[0])) && !replacement.empty()) {
    replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
  }
  return replacement;
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string swap_term(const std::string& sentence, const std::vector<std::pair<std::string, std::string>>& terms,
                      const std::map<std::string, std::string>& swaps, const std::string& fallback) {
  for (const auto& [folded, _] : terms) {
    const auto pos = find_word(sentence, folded);
    if (pos == std::string::npos) continue;
    auto it = swaps.find(folded);
    const std::string target = it == swaps.end() ? fallback : it->second;
    const std::string original = sentence.substr(pos, folded.size());
    return sentence.substr(0, pos) + match_case(original, target) + sentence.substr(pos + folded.size());
  }
  return {};
}

// Shifts a decimal string, keeping its number of decimals.
std::string shift_number(const std::string& num, int variant) {
  const auto dot = num.find('.');
  const int decimals = dot == std::string::npos ? 0 : static_cast<int>(num.size() - dot - 1);
  const double v = std::stod(num);
  const double unit = std::pow(10.0, -decimals);
  static const double factors[] = {0.8, 1.2, 0.9};
  double shifted = v * factors[variant % 3];
  if (std::abs(shifted - v) < unit) shifted = v + ((variant % 3) == 0 ? -unit : unit);
  if (shifted < 0) shifted = v + unit;
  return text::format_fixed(shifted, decimals);
}

std::string replace_number_at(const std::string& s, const std::smatch& m, int group, int variant) {
  const auto pos = static_cast<std::size_t>(m.position(group));
  const auto len = static_cast<std::size_t>(m.length(group));
  return s.substr(0, pos) + shift_number(m[group].str(), variant) + s.substr(pos + len);
}

std::string value_rewrite(const std::string& s, int variant) {
  static const std::regex number(R"((^|[^\d.\-/])(\d+(?:\.\d+)?))");
  std::smatch m;
  if (!std::regex_search(s, m, number)) return {};
  return replace_number_at(s, m, 2, variant);
}

std::string time_rewrite(const std::string& s, int variant) {
  static const std::regex day(R"(hospital day (\d+))", std::regex::icase);
  static const std::regex span(R"((\d+)\s+(days?|hours?|weeks?|months?))", std::regex::icase);
  std::smatch m;
  const int delta = 2 + variant;
  for (const auto* re : {&day, &span}) {
    if (std::regex_search(s, m, *re)) {
      const auto pos = static_cast<std::size_t>(m.position(1));
      const auto len = static_cast<std::size_t>(m.length(1));
      return s.substr(0, pos) + std::to_string(std::stoi(m[1].str()) + delta) + s.substr(pos + len);
    }
  }
  static const std::vector<std::pair<std::string, std::string>> words = {
      {"on admission", "on hospital day 3"}, {"on arrival", "on hospital day 2"}, {"overnight", "after three days"}};
  for (const auto& [from, to] : words) {
    const auto pos = find_word(s, from);
    if (pos != std::string::npos) return s.substr(0, pos) + to + s.substr(pos + from.size());
  }
  return {};
}

std::string exam_rewrite(const std::string& s, int variant) {
  for (const auto& [folded, _] : vocab().labs) {
    const auto pos = find_word(s, folded);
    if (pos == std::string::npos) continue;
    static const std::regex number(R"((\d+(?:\.\d+)?))");
    std::smatch m;
    const std::string rest = s.substr(pos + folded.size());
    if (std::regex_search(rest, m, number)) {
      const auto at = pos + folded.size() + static_cast<std::size_t>(m.position(1));
      return s.substr(0, at) + shift_number(m[1].str(), variant) + s.substr(at + static_cast<std::size_t>(m.length(1)));
    }
  }
  static const std::vector<std::pair<std::string, std::string>> swaps = {
      {"showed no", "showed moderate"}, {"right", "left"}, {"left", "right"}, {"bilateral", "left-sided"},
      {"showed", "showed no"}, {"revealed", "revealed no"}, {"notable for", "unremarkable except for"}};
  for (const auto& [from, to] : swaps) {
    const auto pos = find_word(s, from);
    if (pos != std::string::npos) return s.substr(0, pos) + match_case(s.substr(pos), to) + s.substr(pos + from.size());
  }
  return {};
}

std::string negation_rewrite(const std::string& s) {
  static const std::regex leading_no(R"(^No\s+)", std::regex::icase);
  if (std::regex_search(s, leading_no)) return capitalize(std::regex_replace(s, leading_no, ""));
  static const std::vector<std::pair<std::string, std::string>> rules = {
      {"was not", "was"},     {"were not", "were"}, {"no", ""},           {"was", "was not"},
      {"were", "were not"},   {"started", "did not start"}, {"presented", "did not present"},
      {"diagnosed", "not diagnosed"}, {"discharged", "not discharged"}, {"showed", "showed no"}};
  for (const auto& [from, to] : rules) {
    const auto pos = find_word(s, from);
    if (pos == std::string::npos) continue;
    std::string head = s.substr(0, pos);
    std::string tail = s.substr(pos + from.size());
    if (to.empty()) {
      while (!tail.empty() && tail.front() == ' ') tail.erase(tail.begin());
      return capitalize(head + tail);
    }
    return capitalize(head + match_case(s.substr(pos), to) + tail);
  }
  return {};
}

std::string medication_rewrite(const std::string& s, int variant) {
  if (variant % 2 == 1) {
    static const std::regex dose(R"((\d+(?:\.\d+)?)\s*(mg|mcg|g|mL|units)\b)");
    std::smatch m;
    if (std::regex_search(s, m, dose)) {
      const auto pos = static_cast<std::size_t>(m.position(1));
      const double v = std::stod(m[1].str());
      return s.substr(0, pos) + text::format_double(v * 2) + s.substr(pos + static_cast<std::size_t>(m.length(1)));
    }
  }
  return swap_term(s, vocab().medications, medication_swaps(), "clopidogrel");
}

std::set<std::string> tokens(const std::string& s) {
  std::set<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 3 || (!cur.empty() && std::isdigit(static_cast<unsigned char>(cur[0])))) out.insert(cur);
    cur.clear();
  };
  for (char c : s) {
    if (word_char(c) || (c == '.' && !cur.empty() && std::isdigit(static_cast<unsigned char>(cur.back())))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  std::set<std::string> cleaned;
  for (auto t : out) {
    while (!t.empty() && t.back() == '.') t.pop_back();
    if (!t.empty()) cleaned.insert(t);
  }
  return cleaned;
}

const std::set<std::string>& judge_stopwords() {
  static const std::set<std::string> s = {"the", "and", "was", "were", "with", "for", "patient", "from", "that",
                                          "this", "had", "has", "have", "on", "of", "in", "to", "at", "home",
                                          "started", "continued", "during", "admission", "notable", "labs"};
  return s;
}

struct ContextEntity {
  std::string id;
  std::string etype;
  std::string line;
};

std::vector<ContextEntity> context_entities(const std::string& context) {
  static const std::regex line_re(R"(^\[ent:([^\]]+)\] ([A-Z_]+) (.*)$)");
  std::vector<ContextEntity> out;
  for (const auto& line : text::split(context, '\n')) {
    std::smatch m;
    if (std::regex_match(line, m, line_re)) out.push_back({m[1].str(), m[2].str(), m[3].str()});
  }
  return out;
}

json judge(const std::string& sentence, const std::string& context) {
  const auto entities = context_entities(context);
  const std::string low_context = text::lower(context);

  auto conflict_for = [&](const std::vector<std::pair<std::string, std::string>>& terms, const char* etype)
      -> std::optional<ContextEntity> {
    bool mentioned = false;
    for (const auto& [folded, _] : terms) {
      if (find_word(sentence, folded) == std::string::npos) continue;
      mentioned = true;
      if (find_word(low_context, folded) != std::string::npos) return std::nullopt;
    }
    if (!mentioned) return std::nullopt;
    for (const auto& e : entities) {
      if (e.etype == etype) return e;
    }
    return std::nullopt;
  };

  json out;
  std::string reasoning;
  const bool negated = text::starts_with_ci(sentence, "no ");
  std::optional<ContextEntity> e;
  if (!negated) e = conflict_for(vocab().diagnoses, "DIAGNOSIS");
  if (e) {
    reasoning = "The sentence names a diagnosis the record does not contain; the record lists " + e->line.substr(0, e->line.find(" (")) +
                " [ent:" + e->id + "].";
    out = {{"hallucination_status", true}, {"hallucination_type", {"diagnosis_error"}}, {"conflict", 1},
           {"support", 0.1}, {"explicit", 0}, {"evidence_grade", "E4"}};
  } else if (auto m = conflict_for(vocab().medications, "MEDICATION")) {
    reasoning = "The sentence names a medication the record does not contain; the record lists " +
                m->line.substr(0, m->line.find(" (")) + " [ent:" + m->id + "].";
    out = {{"hallucination_status", true}, {"hallucination_type", {"medication_error"}}, {"conflict", 1},
           {"support", 0.1}, {"explicit", 0}, {"evidence_grade", "E4"}};
  } else {
    const auto want = tokens(sentence);
    const auto have = tokens(context);
    int total = 0, found = 0;
    for (const auto& t : want) {
      if (judge_stopwords().count(t)) continue;
      ++total;
      found += have.count(t) ? 1 : 0;
    }
    const double support = total == 0 ? 1.0 : static_cast<double>(found) / total;
    const double rounded = std::round(support * 100.0) / 100.0;
    if (rounded < 0.5) {
      reasoning = "Most facts in the sentence are absent from the retrieved record, so the claim is unsupported.";
      out = {{"hallucination_status", true}, {"hallucination_type", {"invented_fact"}}, {"conflict", 0},
             {"support", rounded}, {"explicit", 0}, {"evidence_grade", "E3"}};
    } else {
      const bool explicit_support = rounded >= 0.8;
      reasoning = explicit_support ? "The record states the facts in the sentence directly."
                                   : "The record is compatible with the sentence but does not state it directly.";
      out = {{"hallucination_status", false}, {"hallucination_type", json::array()}, {"conflict", 0},
             {"support", rounded}, {"explicit", explicit_support ? 1 : 0},
             {"evidence_grade", explicit_support ? "E1" : "E2"}};
    }
  }
  out["reasoning"] = reasoning;
  return out;
}

json extract(const std::string& document) {
  json entities = json::array({{{"type", "PATIENT"}, {"name", "Patient"}, {"attributes", json::object()}}});
  json relations = json::array();
  std::set<std::string> seen;
  auto scan = [&](const std::vector<std::pair<std::string, std::string>>& terms, const char* etype, const char* rtype) {
    for (const auto& [folded, display] : terms) {
      if (find_word(document, folded) == std::string::npos || !seen.insert(folded).second) continue;
      entities.push_back({{"type", etype}, {"name", display}, {"attributes", json::object()}});
      relations.push_back({{"src", "Patient"}, {"src_type", "PATIENT"}, {"dst", display}, {"dst_type", etype},
                           {"type", rtype}});
    }
  };
  scan(vocab().diagnoses, "DIAGNOSIS", "has_diagnosis");
  scan(vocab().medications, "MEDICATION", "prescribed");
  scan(vocab().labs, "LAB_TEST", "tested_by");
  return {{"entities", entities}, {"relations", relations}};
}

}  // namespace

std::string prompt_field(const std::string& prompt, const std::string& key) {
  const std::string marker = "\n" + key + ": ";
  auto pos = prompt.find(marker);
  if (pos == std::string::npos) return {};
  pos += marker.size();
  const auto end = prompt.find('\n', pos);
  return prompt.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

std::string prompt_block(const std::string& prompt, const std::string& key) {
  const std::string marker = "\n" + key + ":\n";
  const auto pos = prompt.find(marker);
  return pos == std::string::npos ? std::string() : prompt.substr(pos + marker.size());
}

std::string rewrite_sentence(const std::string& sentence, HallucinationType type, const std::string& patient_id,
                             int variant) {
  switch (type) {
    case HallucinationType::DiagnosisError:
      return swap_term(sentence, vocab().diagnoses, diagnosis_swaps(), "tuberculosis");
    case HallucinationType::MedicationError: return medication_rewrite(sentence, variant);
    case HallucinationType::ExamResultError: return exam_rewrite(sentence, variant);
    case HallucinationType::TimeError: return time_rewrite(sentence, variant);
    case HallucinationType::ValueError: return value_rewrite(sentence, variant);
    case HallucinationType::NegationError: return negation_rewrite(sentence);
    case HallucinationType::InventedFact: {
      const auto& pool = invented_claims();
      const auto h = Digest().add(patient_id).add(sentence).add(std::to_string(variant)).value();
      return pool[h % pool.size()];
    }
  }
  return {};
}

llm::ChatResponse RuleBasedBackend::complete(const llm::ChatRequest& request) {
  const std::string stage = request.tag("stage");
  const std::string& prompt = request.rendered_prompt;
  json out;
  if (stage == "applicability") {
    const auto sentence = prompt_field(prompt, "SENTENCE");
    const auto classes = generator::fact_classes(sentence);
    const auto words = text::split(text::fold(sentence), ' ').size();
    const bool fact = !classes.empty();
    const bool moderate = words >= 4 && words <= 40;
    out = {{"has_verifiable_fact", fact},
           {"plausibly_rewritable", fact},
           {"moderate_complexity", moderate},
           {"rationale", fact ? (moderate ? "states a checkable fact" : "too short or too long") : "no checkable fact"}};
  } else if (stage == "generate") {
    const auto sentence = prompt_field(prompt, "SENTENCE");
    const auto type_name = prompt_field(prompt, "ERROR_TYPE");
    const auto type = parse_hallucination_type(type_name);
    const std::string regen = request.tag("regeneration");
    const int variant = regen.empty() ? 0 : std::stoi(regen);
    const auto rewrite = type ? rewrite_sentence(sentence, *type, request.tag("patient_id"), variant) : std::string();
    out = {{"hallucinated_text", rewrite.empty() ? sentence : rewrite},
           {"hallucination_type", type_name},
           {"explanation", rewrite.empty() ? "no applicable rewrite rule" : "rule-based " + type_name + " rewrite"}};
  } else if (stage == "detect") {
    out = judge(prompt_field(prompt, "SENTENCE"), prompt_block(prompt, "EVIDENCE"));
  } else if (stage == "extract") {
    out = extract(prompt_block(prompt, "DOCUMENT"));
  } else if (stage == "summarize") {
    const auto items = prompt_block(prompt, "ITEMS");
    return {"Community " + prompt_field(prompt, "COMMUNITY") + " groups: " +
                text::join(text::split(text::trim(items), '\n'), "; ") + ".",
            1};
  } else {
    out = json::object();
  }
  return {out.dump(), 1};
}

}  // namespace faithcheck::mock
