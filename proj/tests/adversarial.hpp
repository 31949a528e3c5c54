#pragma once

// Synthetic detection results covering every (verdict, grade) pair crossed
// with citation-marker permutations, type sets and signal agreement, each
// paired with the violation ids the consistency rules must report.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "faithcheck/detector.hpp"
#include "faithcheck/ids.hpp"

namespace testsupport {

struct AdversarialCase {
  faithcheck::detector::DetectionResult result;
  std::vector<std::string> expected;  // sorted rule ids, with repeats
};

inline const std::set<std::string>& adversarial_known_ids() {
  static const std::set<std::string> ids = {"aaaaaaaaaaaa", "bbbbbbbbbbbb"};
  return ids;
}

inline std::vector<AdversarialCase> adversarial_set() {
  using faithcheck::EvidenceGrade;
  using faithcheck::citation_marker;
  using faithcheck::detector::DetectionSignals;
  const std::string known = citation_marker("aaaaaaaaaaaa");
  const std::string unknown = citation_marker("ffffffffffff");
  struct Reasoning {
    std::string text;
    bool blank, marker;
    int unknown_count;
  };
  const std::vector<Reasoning> reasonings = {
      {"The record has no mention of this.", false, false, 0},
      {"Contradicted by " + known + ".", false, true, 0},
      {"Contradicted by " + unknown + ".", false, true, 1},
      {"See " + known + " and " + unknown + ".", false, true, 1},
      {"See " + unknown + " and " + known + ".", false, true, 1},
      {"", true, false, 0},
  };
  auto signals_for = [](EvidenceGrade g) {
    switch (g) {
      case EvidenceGrade::E4: return DetectionSignals{1, 0.2, 0};
      case EvidenceGrade::E3: return DetectionSignals{0, 0.2, 1};
      case EvidenceGrade::E2: return DetectionSignals{0, 0.8, 0};
      case EvidenceGrade::E1: return DetectionSignals{0, 0.8, 1};
    }
    return DetectionSignals{};
  };
  auto other = [](EvidenceGrade g) {
    return g == EvidenceGrade::E1 ? EvidenceGrade::E4 : static_cast<EvidenceGrade>(static_cast<int>(g) - 1);
  };

  std::vector<AdversarialCase> out;
  auto add = [&](bool y, EvidenceGrade grade, const Reasoning& rs, bool with_types, bool signals_agree) {
    AdversarialCase c;
    auto& r = c.result;
    r.patient_id = "P0900";
    r.sentence_index = static_cast<int>(out.size());
    r.hallucination_status = y;
    r.grade = grade;
    r.self_grade = grade;
    r.reasoning = rs.text;
    if (with_types) r.htypes = {faithcheck::HallucinationType::ValueError};
    r.signals = signals_for(signals_agree ? grade : other(grade));
    const bool positive_grade = grade >= EvidenceGrade::E3;
    if (y && !positive_grade) c.expected.push_back("rule1_positive_grade");
    if (grade == EvidenceGrade::E3 && (rs.blank || rs.marker)) c.expected.push_back("rule2_e3_reasoning");
    if (grade == EvidenceGrade::E4 && !rs.marker) c.expected.push_back("rule3_e4_citation");
    if (!y && positive_grade) c.expected.push_back("rule4_negative_grade");
    if (!signals_agree) c.expected.push_back("grade_mismatch");
    if (y != with_types) c.expected.push_back("type_set");
    for (int i = 0; i < rs.unknown_count; ++i) c.expected.push_back("unknown_citation");
    std::sort(c.expected.begin(), c.expected.end());
    out.push_back(std::move(c));
  };
  for (bool y : {true, false})
    for (auto grade : faithcheck::kAllGrades)
      for (const auto& rs : reasonings)
        for (bool types : {true, false})
          for (bool agree : {true, false}) add(y, grade, rs, types, agree);
  // whitespace-only reasoning with consistent verdict, types and signals
  const Reasoning spaces{"   \n", true, false, 0};
  for (bool y : {true, false})
    for (auto grade : faithcheck::kAllGrades) add(y, grade, spaces, y, true);
  return out;
}

inline std::vector<std::string> violation_ids(const faithcheck::structured::ValidationOutcome& o) {
  std::vector<std::string> ids;
  for (const auto& v : o.violations) ids.push_back(v.rule_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace testsupport
