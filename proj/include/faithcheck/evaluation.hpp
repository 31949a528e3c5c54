#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithcheck/detector.hpp"
#include "faithcheck/types.hpp"

namespace faithcheck::evaluation {

using nlohmann::json;

struct GoldLabel {
  std::string patient_id;
  int sentence_index = 0;
  bool is_hallucination = false;
  std::optional<HallucinationType> htype;
  std::optional<EvidenceGrade> grade;  // E3 or E4 when positive
  std::string origin;                  // "file#gold[3]", for error messages
};

struct Prediction {
  std::string patient_id;
  int sentence_index = 0;
  bool positive = false;  // hallucination_status as emitted
  std::optional<EvidenceGrade> grade;  // unset for failure records
  std::set<HallucinationType> htypes;
  bool flagged = false;
  bool failed = false;
  std::string origin;

  static Prediction from(const detector::DetectionResult& r, std::string origin = {});
};

struct Pair {
  std::string patient_id;
  int sentence_index = 0;
  GoldLabel gold;  // implicit negative when no gold row exists
  bool implicit_gold = false;
  std::optional<Prediction> pred;  // unset: gold row without a detection
};

// Keyed by (patient_id, sentence_index); ordered by that key. Throws
// DuplicateKey naming both origins.
std::vector<Pair> align(const std::vector<GoldLabel>& gold, const std::vector<Prediction>& predictions);

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Stratum {
  enum class Kind { E4, E3E4, Type } kind = Kind::E3E4;
  HallucinationType type = HallucinationType::InventedFact;

  static Stratum e4() { return {Kind::E4}; }
  static Stratum e3e4() { return {Kind::E3E4}; }
  static Stratum of(HallucinationType t) { return {Kind::Type, t}; }
  std::string name() const;  // "E4", "E3+E4", "type:value_error"
};

// E4: gold positive iff graded E4, predicted positive iff detected grade E4.
// E3+E4: any gold positive; any detected hallucination.
// Type t: gold type t; predicted type set contains t.
// Missing and failed predictions count as negative.
ConfusionCounts confusion(const std::vector<Pair>& pairs, const Stratum& stratum);

struct Metrics {
  double precision = 0, recall = 0, f1 = 0;
  bool degenerate = false;  // some denominator was zero
};

Metrics prf(const ConfusionCounts& c);
// F1 from already computed precision and recall.
Metrics prf(double precision, double recall);

// (tuned - base) / (1 - base) * 100. Throws DegenerateBase when base >= 1.
double ceiling_gain(double base_f1, double tuned_f1);

struct CorrelationReport {
  double pearson_r = 0, pearson_p = 1;
  double spearman_rho = 0, spearman_p = 1;
  std::size_t n = 0;
  bool degenerate = false;  // a zero-variance input
  bool exact = false;       // permutation p-values
};

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& v);
double pearson(const std::vector<double>& x, const std::vector<double>& y);
// Two-sided p for correlation r over n points, Student t with n-2 df.
double correlation_p_value(double r, std::size_t n);

inline constexpr std::size_t kMaxExactPermutationN = 9;

// Throws LengthMismatch, TooFewPoints (< 3). `exact` enumerates all
// permutations of y and needs n <= kMaxExactPermutationN.
CorrelationReport correlations(const std::vector<double>& x, const std::vector<double>& y, bool exact = false);

struct StratumRow {
  std::string stratum;
  ConfusionCounts counts;
  Metrics metrics;
};

struct GainRow {
  std::string name;
  double base_f1 = 0, tuned_f1 = 0;
  std::optional<double> gain;  // unset when the base is degenerate
};

struct CorrelationRow {
  std::string name;
  std::optional<CorrelationReport> report;  // unset when too few points
  std::string note;
};

struct Report {
  std::vector<StratumRow> metrics;
  std::vector<GainRow> gains;
  std::vector<CorrelationRow> correlations;
  json summary;  // counts and run metadata
};

struct EvaluationInput {
  std::vector<GoldLabel> gold;
  std::vector<Prediction> predictions;
  std::map<std::string, double> record_chars;  // per patient, for length robustness
  json metadata = json::object();
};

// All strata (E4, E3+E4, seven types) plus the record-length correlation
// against patient-level E3+E4 F1.
Report evaluate(const EvaluationInput& input);

// metrics.csv, gains.csv, correlations.csv, summary.json.
void emit_report(const Report& report, const std::filesystem::path& out_dir);

// A samples document, an array of them, or a directory of *.json documents.
// Record lengths found in the documents are added to record_chars.
std::vector<GoldLabel> load_gold(const std::filesystem::path& path, std::map<std::string, double>* record_chars = nullptr);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace faithcheck::evaluation
