#include <doctest.h>

#include "faithcheck/error.hpp"
#include "faithcheck/graph.hpp"
#include "faithcheck/ids.hpp"
#include "faithcheck/llm.hpp"
#include "faithcheck/random.hpp"
#include "support.hpp"

using namespace faithcheck;
using namespace faithcheck::graph;
using testsupport::json;

namespace {

std::string dump(const PatientGraph& g) { return to_json(g).dump(); }

Provenance prov(const std::string& ref) { return {"test", ref}; }

PatientGraph degenerate_raw() {
  const auto root = testsupport::data_dir() / "degenerate";
  const auto rec = ehr::load_bundle(root, "P0001");
  llm::Gateway gw(llm::ScriptedMock::from_file(root / "scenario.json"));
  return extract_raw_graph(rec, &gw);
}

const Entity* by_name(const PatientGraph& g, EntityType t, const std::string& name) {
  return g.find(entity_id(g.patient_id, to_string(t), name));
}

// Noisy graph drawn from surface-form pools that the default maps partly
// cover, with random relations and up to three patient nodes.
PatientGraph random_graph(Rng& rng) {
  static const std::vector<std::pair<EntityType, std::vector<std::string>>> pools = {
      {EntityType::Patient, {"Patient", "Pt", "The patient"}},
      {EntityType::Diagnosis, {"Pneumonia", "PNA", "pneumonia", "T2DM", "Type 2 diabetes mellitus", "HTN",
                               "Hypertension", "Gout"}},
      {EntityType::Medication, {"Azithromycin", "Zithromax", "aspirin", "Aspirin", "Metformin"}},
      {EntityType::LabTest, {"WBC", "HGB", "Sodium", "ALT", "Creatinine", "eGFR", "Troponin", "Ferritin", "CBC"}},
      {EntityType::VitalSign, {"Heart rate", "HR", "BP", "Blood pressure", "temp"}},
      {EntityType::Symptom, {"Cough", "cough", "Fever"}},
      {EntityType::Department, {"ED", "Emergency Department", "ER"}},
  };
  PatientGraph g;
  g.patient_id = "P" + std::to_string(1000 + rng.below(9000));
  std::vector<std::string> ids;
  ids.push_back(g.add_entity(EntityType::Patient, "Patient", {}, prov("root")));
  const int n = 3 + static_cast<int>(rng.below(25));
  for (int i = 0; i < n; ++i) {
    const auto& [type, names] = pools[rng.below(pools.size())];
    std::map<std::string, std::string> attrs;
    if (rng.below(3) == 0) attrs["note"] = "v" + std::to_string(rng.below(3));
    ids.push_back(g.add_entity(type, rng.pick(names), attrs, prov("e" + std::to_string(i))));
    if (type == EntityType::LabTest && rng.below(2)) {
      const auto& test = g.find(ids.back())->canonical_name;
      const std::string when = "2180-01-0" + std::to_string(1 + rng.below(3)) + " 06:00:00";
      const auto rid = g.add_entity(EntityType::LabResult, test + " " + std::to_string(rng.below(50)) + " @ " + when,
                                    {{"test", test}, {"value", std::to_string(rng.below(50))}, {"charttime", when}},
                                    prov("r" + std::to_string(i)));
      g.add_relation(rid, ids.back(), RelationType::ResultOf, prov("r" + std::to_string(i)));
      ids.push_back(rid);
    }
  }
  const int m = static_cast<int>(rng.below(2 * ids.size()));
  for (int i = 0; i < m; ++i) {
    const auto& a = ids[rng.below(ids.size())];
    const auto& b = ids[rng.below(ids.size())];
    if (a != b) g.add_relation(a, b, kAllRelationTypes[rng.below(std::size(kAllRelationTypes))], prov("l"));
  }
  g.canonicalize_order();
  return g;
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("degenerate extraction quality before and after") {
    auto g = degenerate_raw();
    CHECK(quality_report(g) == QualityReport{240, 35, 3, 18, 7, 0});
    normalize(g);
    CHECK(quality_report(g) == QualityReport{58, 6, 1, 0, 1, 0});
  }

  TEST_CASE("table-only graph when there is no free text") {
    auto rec = ehr::load_bundle(testsupport::data_dir() / "fixture", "P0001");
    rec.discharge_text.clear();
    rec.radiology_reports.clear();
    // a strict scenario with no matchers fails on any call
    llm::Gateway gw(std::make_shared<llm::ScriptedMock>(json{{"strict", true}, {"matchers", json::array()}}));
    const auto raw = extract_raw_graph(rec, &gw);
    CHECK(dump(raw) == dump(table_graph(rec)));
    CHECK(gw.log().empty());
    for (const auto& e : raw.entities)
      for (const auto& p : e.provenance) CHECK(p.source.rfind("llm:", 0) != 0);
  }

  TEST_CASE("malformed extraction output exhausts the budget") {
    const auto rec = ehr::load_bundle(testsupport::data_dir() / "fixture", "P0001");
    llm::Gateway gw(std::make_shared<llm::ScriptedMock>(
        testsupport::one_stage("extract", json::array({"{oops", "not json", "{\"entities\": 3}"}))));
    try {
      extract_raw_graph(rec, &gw);
      FAIL("expected SchemaError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Schema);
    }
    CHECK(gw.log().size() == 3);
  }

  TEST_CASE("lab panels") {
    PatientGraph g;
    g.patient_id = "P0009";
    const auto pat = g.add_entity(EntityType::Patient, "Patient", {}, prov("p"));
    for (const char* name : {"WBC", "HGB"}) {
      const auto id = g.add_entity(EntityType::LabTest, name, {}, prov(name));
      g.add_relation(pat, id, RelationType::TestedBy, prov(name));
    }
    normalize_lab_panels(g);
    std::vector<const Entity*> tests;
    for (const auto& e : g.entities)
      if (e.etype == EntityType::LabTest) tests.push_back(&e);
    REQUIRE(tests.size() == 1);
    CHECK(tests[0]->canonical_name == "CBC");
    CHECK(tests[0]->provenance.size() == 2);

    SUBCASE("no lab tests is the identity") {
      PatientGraph h;
      h.patient_id = "P0009";
      const auto p = h.add_entity(EntityType::Patient, "Patient", {}, prov("p"));
      h.add_relation(p, h.add_entity(EntityType::Diagnosis, "Gout", {}, prov("d")), RelationType::HasDiagnosis,
                     prov("d"));
      const auto before = dump(h);
      normalize_lab_panels(h);
      CHECK(dump(h) == before);
    }
  }

  TEST_CASE("patient uniqueness") {
    auto g = degenerate_raw();
    normalize_lab_panels(g);
    enforce_patient_uniqueness(g);
    const auto q = quality_report(g);
    CHECK(q.patient_entities == 1);
    CHECK(q.connected_components == 1);

    const auto once = dump(g);
    enforce_patient_uniqueness(g);
    CHECK(dump(g) == once);

    PatientGraph none;
    none.patient_id = "P0009";
    none.add_entity(EntityType::Diagnosis, "Gout", {}, prov("d"));
    CHECK_THROWS_WITH_AS(enforce_patient_uniqueness(none), doctest::Contains("NoPatientEntity"), Error);
  }

  TEST_CASE("terminology canonicalization") {
    PatientGraph g;
    g.patient_id = "P0009";
    const auto pat = g.add_entity(EntityType::Patient, "Patient", {}, prov("p"));
    for (const char* name : {"T2DM", "type 2 diabetes mellitus"}) {
      g.add_relation(pat, g.add_entity(EntityType::Diagnosis, name, {}, prov(name)), RelationType::HasDiagnosis,
                     prov(name));
    }
    auto copy = g;
    canonicalize_terminology(g);
    std::size_t dx = 0;
    for (const auto& e : g.entities) dx += e.etype == EntityType::Diagnosis;
    CHECK(dx == 1);
    CHECK(quality_report(g).duplicate_entities == 0);

    NormalizationConfig empty;
    const auto before = dump(copy);
    canonicalize_terminology(copy, empty);
    CHECK(dump(copy) == before);
  }

  TEST_CASE("quality of an empty graph") {
    PatientGraph g;
    CHECK(quality_report(g) == QualityReport{});
  }

  TEST_CASE("normalization is idempotent on randomized graphs") {
    Rng rng(100);
    for (int trial = 0; trial < 100; ++trial) {
      auto g = random_graph(rng);
      CAPTURE(trial);
      normalize(g);
      const auto once = dump(g);
      normalize(g);
      CHECK(dump(g) == once);
      const auto q = quality_report(g);
      CHECK(q.patient_entities == 1);
      CHECK(q.duplicate_entities == 0);
      CHECK(q.connected_components == 1);
    }
  }

  TEST_CASE("json round trip") {
    auto g = degenerate_raw();
    normalize(g);
    CHECK(dump(from_json(to_json(g))) == dump(g));
    const auto* pna = by_name(g, EntityType::Diagnosis, "PNA");
    CHECK(pna == nullptr);
  }
}
