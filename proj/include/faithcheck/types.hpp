#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace faithcheck {

// Ordered by severity: E1 < E2 < E3 < E4.
enum class EvidenceGrade { E1 = 1, E2 = 2, E3 = 3, E4 = 4 };

inline constexpr std::array<EvidenceGrade, 4> kAllGrades = {
    EvidenceGrade::E1, EvidenceGrade::E2, EvidenceGrade::E3, EvidenceGrade::E4};

std::string_view to_string(EvidenceGrade grade);
std::optional<EvidenceGrade> parse_grade(std::string_view text);

enum class HallucinationType {
  DiagnosisError,
  MedicationError,
  ExamResultError,
  TimeError,
  ValueError,
  NegationError,
  InventedFact,
};

inline constexpr std::array<HallucinationType, 7> kAllHallucinationTypes = {
    HallucinationType::DiagnosisError, HallucinationType::MedicationError,
    HallucinationType::ExamResultError, HallucinationType::TimeError,
    HallucinationType::ValueError,     HallucinationType::NegationError,
    HallucinationType::InventedFact};

std::string_view to_string(HallucinationType type);
std::optional<HallucinationType> parse_hallucination_type(std::string_view text);

// Generation-side annotation: the six direct-conflict types are E4,
// invented_fact (absent from the record) is E3.
constexpr EvidenceGrade generation_grade_for(HallucinationType type) {
  return type == HallucinationType::InventedFact ? EvidenceGrade::E3 : EvidenceGrade::E4;
}

}  // namespace faithcheck
