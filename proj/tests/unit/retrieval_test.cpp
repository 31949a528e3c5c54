#include <doctest.h>

#include "faithcheck/error.hpp"
#include "faithcheck/ids.hpp"
#include "faithcheck/retrieval.hpp"
#include "support.hpp"

using namespace faithcheck;
using namespace faithcheck::graph;
using namespace faithcheck::retrieval;

namespace {

Provenance prov() { return {"test", "five"}; }

struct Five {
  PatientGraph g;
  std::string patient, azithro;
  Five() {
    g.patient_id = "P0300";
    patient = g.add_entity(EntityType::Patient, "Patient", {}, prov());
    azithro = g.add_entity(EntityType::Medication, "Azithromycin", {{"dose", "500 mg"}}, prov());
    const auto pna = g.add_entity(EntityType::Diagnosis, "Pneumonia", {}, prov());
    const auto cxr = g.add_entity(EntityType::Procedure, "Chest radiograph", {}, prov());
    const auto wbc = g.add_entity(EntityType::LabTest, "CBC", {}, prov());
    g.add_relation(patient, azithro, RelationType::Prescribed, prov());
    g.add_relation(patient, pna, RelationType::HasDiagnosis, prov());
    g.add_relation(patient, cxr, RelationType::Underwent, prov());
    g.add_relation(patient, wbc, RelationType::TestedBy, prov());
    g.canonicalize_order();
  }
};

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("embedding determinism and similarity ordering") {
    const auto a = embed("aspirin 81 mg");
    CHECK(a == embed("aspirin 81 mg"));
    CHECK(a.size() == kDefaultDim);
    CHECK(a.norm() == doctest::Approx(1.0));
    CHECK(cosine(a, embed("aspirin 81mg")) > cosine(a, embed("chest radiograph")));
    CHECK(embed("").norm() == 0.0);
  }

  TEST_CASE("top match plus its one-hop neighbours") {
    Five f;
    const auto ctx = retrieve_context("prescribed azithromycin", 3, f.g, 1);
    CHECK(ctx.sentence_index == 3);
    REQUIRE(ctx.entities.size() == 2);
    CHECK(ctx.entities[0].entity_id == f.azithro);
    CHECK(ctx.entities[0].hop == 0);
    CHECK(ctx.entities[1].entity_id == f.patient);
    CHECK(ctx.entities[1].hop == 1);
    CHECK(ctx.rendered_text.find("Azithromycin") != std::string::npos);
    CHECK(ctx.rendered_text.find(citation_marker(f.azithro)) != std::string::npos);
    CHECK(retrieve_context("prescribed azithromycin", 3, f.g, 1).digest() == ctx.digest());
  }

  TEST_CASE("k beyond the entity count") {
    Five f;
    const auto ctx = retrieve_context("anything", 0, f.g, 50);
    CHECK(ctx.entities.size() == f.g.entities.size());
    for (const auto& c : ctx.entities) CHECK(c.hop == 0);
  }

  TEST_CASE("budget drops community reports, then hop-1, never hop-0") {
    Five f;
    f.g.communities = {{"L0C0", 0, {f.azithro, f.patient}, std::string(200, 'x')}};
    Retriever r(f.g);
    RetrievalOptions opt;
    opt.k = 1;
    const auto full = r.retrieve("azithromycin", 0, opt);
    CHECK_FALSE(full.truncated);
    REQUIRE(full.community_reports.size() == 1);

    opt.budget_chars = full.rendered_text.size() - 1;
    const auto fewer = r.retrieve("azithromycin", 0, opt);
    CHECK(fewer.truncated);
    CHECK(fewer.community_reports.empty());
    CHECK(fewer.entities.size() == 2);

    opt.budget_chars = 10;
    const auto tight = r.retrieve("azithromycin", 0, opt);
    CHECK(tight.truncated);
    REQUIRE(tight.entities.size() == 1);
    CHECK(tight.entities[0].entity_id == f.azithro);
  }

  TEST_CASE("empty graph") {
    PatientGraph g;
    g.patient_id = "P0300";
    CHECK_THROWS_WITH_AS(retrieve_context("x", 0, g), doctest::Contains("EmptyGraph"), Error);
  }
}
