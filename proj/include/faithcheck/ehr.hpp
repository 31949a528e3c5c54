#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace faithcheck::ehr {

struct DiagnosisRow {
  std::string stay_id;
  std::string code;  // ICD-9/ICD-10 style
  std::string icd_version;
  std::string label;
  int seq = 1;
};

struct TriageVitals {
  std::string stay_id;
  std::optional<double> temperature;       // degrees F
  std::optional<double> heart_rate;        // bpm
  std::optional<double> respiratory_rate;  // per minute
  std::optional<double> spo2;              // percent
  std::optional<double> sbp;               // mmHg
  std::optional<double> dbp;               // mmHg
  std::optional<int> pain;                 // 0-10
  std::optional<int> acuity;               // 1-5
  std::string chief_complaint;
};

struct EdStayRow {
  std::string stay_id;
  std::string hadm_id;
  std::string in_time;   // "YYYY-MM-DD HH:MM:SS"
  std::string out_time;
  std::string disposition;
};

struct MedicationRow {
  std::string drug;
  std::string dose;
  std::string route;
  std::string frequency;
};

struct LabRow {
  std::string charttime;
  std::string test;
  std::string value;
  std::string unit;
};

// One patient's EHR bundle. Immutable after load_bundle returns.
struct PatientRecord {
  std::string patient_id;
  std::vector<DiagnosisRow> diagnoses;
  std::string discharge_text;          // primary factual reference
  std::string target_text;             // brief hospital course
  std::string discharge_instructions;  // parsed, excluded from evaluation
  bool instructions_excluded = true;
  std::vector<EdStayRow> ed_stays;
  std::vector<std::string> radiology_reports;
  std::vector<TriageVitals> triage;
  std::vector<MedicationRow> medications;  // optional auxiliary table
  std::vector<LabRow> labs;                // optional auxiliary table
};

// Table file names, one per source category. The last two are optional
// auxiliary tables.
inline constexpr const char* kDiagnosisFile = "diagnosis.csv";
inline constexpr const char* kDischargeFile = "discharge.csv";
inline constexpr const char* kTargetFile = "discharge_target.csv";
inline constexpr const char* kEdStaysFile = "edstays.csv";
inline constexpr const char* kRadiologyFile = "radiology.csv";
inline constexpr const char* kTriageFile = "triage.csv";
inline constexpr const char* kMedicationsFile = "medications.csv";
inline constexpr const char* kLabsFile = "labs.csv";

PatientRecord load_bundle(const std::filesystem::path& root, const std::string& patient_id);

// Patient ids present in discharge_target.csv, in file order.
std::vector<std::string> list_patients(const std::filesystem::path& root);

enum class WarningKind { Range, DuplicateSeq, TimeOrder };

struct ValidationWarning {
  WarningKind kind;
  std::string field;
  std::string message;
};

std::string_view to_string(WarningKind kind);

struct VitalBounds {
  double temperature_lo = 90, temperature_hi = 110;
  double heart_rate_lo = 20, heart_rate_hi = 250;
  double respiratory_rate_lo = 4, respiratory_rate_hi = 60;
  double spo2_lo = 0, spo2_hi = 100;
  double sbp_lo = 50, sbp_hi = 260;
  double dbp_lo = 20, dbp_hi = 160;
  int pain_lo = 0, pain_hi = 10;
  int acuity_lo = 1, acuity_hi = 5;

  static VitalBounds from_json(const nlohmann::json& j);
  static const VitalBounds& defaults();  // from assets/plausibility.json
};

std::vector<ValidationWarning> validate_bundle(const PatientRecord& record,
                                               const VitalBounds& bounds = VitalBounds::defaults());

struct FixtureOptions {
  std::uint64_t seed = 42;
  int n_patients = 5;
  int first_index = 1;  // ids are P%04d starting here
  std::optional<nlohmann::json> vocabulary;  // defaults to assets/vocabulary.json
};

// Writes a synthetic, internally consistent bundle (all eight tables) into
// out_dir. Deterministic for a given seed.
void generate_fixture(const FixtureOptions& options, const std::filesystem::path& out_dir);

std::string patient_id_for(int index);
// Numeric part of "P0201" -> 201; nullopt if the id does not follow the scheme.
std::optional<int> patient_number(const std::string& patient_id);

nlohmann::json to_json(const PatientRecord& record);

}  // namespace faithcheck::ehr
