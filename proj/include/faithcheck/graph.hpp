#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithcheck/ehr.hpp"
#include "faithcheck/structured.hpp"

namespace faithcheck::llm {
class Gateway;
}

namespace faithcheck::graph {

using nlohmann::json;

inline constexpr const char* kGraphSchemaVersion = "graph/1";

enum class EntityType { Patient, Diagnosis, Medication, LabTest, LabResult, VitalSign, Symptom, Procedure, Department };

inline constexpr EntityType kAllEntityTypes[] = {
    EntityType::Patient,   EntityType::Diagnosis, EntityType::Medication, EntityType::LabTest,   EntityType::LabResult,
    EntityType::VitalSign, EntityType::Symptom,   EntityType::Procedure,  EntityType::Department};

enum class RelationType {
  HasDiagnosis,
  Prescribed,
  Shows,
  Underwent,
  HasVitalSign,
  TestedBy,
  ResultOf,
  TreatedIn,
  Indicates,
  ContraindicatedWith,
};

inline constexpr RelationType kAllRelationTypes[] = {
    RelationType::HasDiagnosis, RelationType::Prescribed, RelationType::Shows,    RelationType::Underwent,
    RelationType::HasVitalSign, RelationType::TestedBy,   RelationType::ResultOf, RelationType::TreatedIn,
    RelationType::Indicates,    RelationType::ContraindicatedWith};

std::string_view to_string(EntityType t);   // "DIAGNOSIS"
std::string_view to_string(RelationType t); // "has_diagnosis"
std::optional<EntityType> parse_entity_type(std::string_view s);
std::optional<RelationType> parse_relation_type(std::string_view s);

struct Provenance {
  std::string source;  // "diagnosis.csv", "llm:discharge#0", "normalize:patient"
  std::string ref;     // row / line / surface form

  auto operator<=>(const Provenance&) const = default;
};

struct Entity {
  std::string id;
  EntityType etype = EntityType::Patient;
  std::string canonical_name;
  std::map<std::string, std::string> attributes;
  std::vector<std::string> attribute_conflicts;  // "key: a | b"
  std::vector<Provenance> provenance;           // sorted, unique
};

struct Relation {
  std::string src;
  std::string dst;
  RelationType rtype = RelationType::Indicates;
  std::vector<Provenance> provenance;
};

struct Community {
  std::string id;  // "L0C3"
  int level = 0;
  std::vector<std::string> members;  // sorted entity ids
  std::string summary;
};

struct QualityReport {
  std::size_t total_entities = 0;
  std::size_t lab_test_entities = 0;
  std::size_t patient_entities = 0;
  std::size_t duplicate_entities = 0;
  std::size_t connected_components = 0;
  double build_seconds = 0;

  auto operator<=>(const QualityReport&) const = default;
};

// Lab parameter -> panel map and per-type synonym maps. Keys are folded
// (lowercase, collapsed whitespace).
struct NormalizationConfig {
  std::string version;
  std::map<std::string, std::string> panel_of;
  std::map<EntityType, std::map<std::string, std::string>> synonyms;

  static NormalizationConfig from_json(const json& j);
  static const NormalizationConfig& defaults();  // assets/normalization.json
};

class PatientGraph {
 public:
  std::string patient_id;
  std::vector<Entity> entities;  // sorted by id
  std::vector<Relation> relations;  // sorted by (src, dst, rtype), unique
  std::vector<Community> communities;
  std::optional<QualityReport> quality_before;
  std::optional<QualityReport> quality;

  const Entity* find(std::string_view id) const;
  // Adds or merges (same id -> provenance/attribute union). Returns the id.
  std::string add_entity(EntityType etype, const std::string& name, std::map<std::string, std::string> attributes,
                         Provenance prov);
  void add_relation(const std::string& src, const std::string& dst, RelationType rtype, Provenance prov);
  // Restores the sorted/unique invariants after bulk edits.
  void canonicalize_order();

  // Undirected adjacency in entity order: neighbors[i] are entity indices.
  std::vector<std::vector<std::size_t>> adjacency() const;
  std::size_t index_of(std::string_view id) const;  // npos if absent
};

PatientGraph table_graph(const ehr::PatientRecord& record);

// Table-derived entities plus LLM extraction over discharge and radiology
// text. `llm` may be null, in which case free text is skipped.
PatientGraph extract_raw_graph(const ehr::PatientRecord& record, llm::Gateway* llm, int attempts = 3);

// Output contract of the free-text extraction stage.
const structured::Schema& extraction_schema();

void normalize_lab_panels(PatientGraph& g, const NormalizationConfig& cfg = NormalizationConfig::defaults());
void enforce_patient_uniqueness(PatientGraph& g);
void canonicalize_terminology(PatientGraph& g, const NormalizationConfig& cfg = NormalizationConfig::defaults());
// All three passes in order.
void normalize(PatientGraph& g, const NormalizationConfig& cfg = NormalizationConfig::defaults());

std::size_t count_components(const PatientGraph& g);
QualityReport quality_report(const PatientGraph& g, const NormalizationConfig& cfg = NormalizationConfig::defaults());

// Text used for embedding an entity: name plus sorted attributes.
std::string entity_text(const Entity& e);

json to_json(const PatientGraph& g);
PatientGraph from_json(const json& j);
PatientGraph load(const std::string& path);
void save(const PatientGraph& g, const std::string& path);

}  // namespace faithcheck::graph
