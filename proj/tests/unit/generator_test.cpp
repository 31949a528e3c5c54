#include <doctest.h>

#include <cmath>

#include "faithcheck/error.hpp"
#include "faithcheck/generator.hpp"
#include "faithcheck/rule_mock.hpp"
#include "faithcheck/segment.hpp"
#include "support.hpp"

using namespace faithcheck;
using namespace faithcheck::generator;
using testsupport::json;
using testsupport::TempDir;

namespace {

segment::SentenceUnit unit(const std::string& text, int index = 0) { return {index, text, 0, text.size()}; }

json gen_response(const std::string& text, const std::string& type) {
  return json{{"hallucinated_text", text}, {"hallucination_type", type}, {"explanation", "changed"}};
}

ehr::PatientRecord aspirin_record() {
  ehr::PatientRecord rec;
  rec.patient_id = "P0401";
  rec.discharge_text = "Medications on admission: Aspirin 81mg daily.\nBlood pressure 124/70.";
  rec.target_text = "Aspirin 81mg.";
  return rec;
}

HallucinationSample valid_medication_sample() {
  HallucinationSample s;
  s.patient_id = "P0401";
  s.sentence_index = 0;
  s.original_text = "Aspirin 81mg.";
  s.hallucinated_text = "Aspirin 325mg.";
  s.htype = HallucinationType::MedicationError;
  s.generation_grade = EvidenceGrade::E4;
  s.explanation = "dose changed";
  s.evidence_excerpt = "Medications on admission: Aspirin 81mg daily.";
  return s;
}

std::vector<ApplicabilityJudgment> judgments(int n, int applicable_every = 1) {
  std::vector<ApplicabilityJudgment> out;
  for (int i = 0; i < n; ++i) {
    ApplicabilityJudgment j;
    j.sentence_index = i;
    j.applicable = i % applicable_every == 0;
    out.push_back(j);
  }
  return out;
}

}  // namespace

TEST_SUITE("segment") {
  TEST_CASE("sentence boundaries") {
    CHECK(segment::segment("Patient admitted. Started aspirin 81 mg daily.").size() == 2);
    CHECK(segment::segment("Temp 98.6 F on arrival.").size() == 1);
    CHECK(segment::segment("").empty());
    CHECK(segment::segment("Seen by Dr. Smith today. Stable.").size() == 2);
    CHECK(segment::segment("Plan:\n1. Continue aspirin.\n2. Follow up.").size() == 3);
  }

  TEST_CASE("units are exact spans of the document") {
    const std::string doc = "Chief Complaint: Cough\n\nHistory: Fever x3 days. Started azithromycin 500 mg.\n"
                            "- Lisinopril continued\nBP 128/76, HR 80. No chest pain.";
    const auto units = segment::segment(doc);
    REQUIRE(units.size() >= 4);
    for (std::size_t i = 0; i < units.size(); ++i) {
      CHECK(units[i].index == static_cast<int>(i));
      CHECK(units[i].text == doc.substr(units[i].start, units[i].end - units[i].start));
      if (i) CHECK(units[i].start >= units[i - 1].end);
    }
  }
}

TEST_SUITE("generator") {
  TEST_CASE("applicability playback") {
    auto gw = testsupport::scripted_gateway(testsupport::one_stage(
        "applicability",
        json::array({json{{"has_verifiable_fact", true}, {"plausibly_rewritable", true}, {"moderate_complexity", true},
                          {"rationale", "dose"}},
                     json{{"has_verifiable_fact", false}, {"plausibly_rewritable", true}, {"moderate_complexity", false},
                          {"rationale", "too simple"}}})));
    auto j = assess_applicability(unit("The patient was started on metformin 500 mg."), "P0401", *gw);
    CHECK(j.applicable);
    j = assess_applicability(unit("Patient admitted."), "P0401", *gw);
    CHECK_FALSE(j.applicable);
    CHECK(j.rationale == "too simple");
  }

  TEST_CASE("applicability with an invalid field exhausts the budget") {
    const json bad{{"has_verifiable_fact", true}, {"rewritable", true}, {"moderate_complexity", true},
                   {"rationale", "x"}};
    auto gw = testsupport::scripted_gateway(testsupport::one_stage("applicability", json::array({bad}), true));
    try {
      assess_applicability(unit("Started metformin."), "P0401", *gw);
      FAIL("expected SchemaError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Schema);
    }
    CHECK(gw->log().size() == 3);
  }

  TEST_CASE("target sampling") {
    const auto all = judgments(10);
    const auto t = sample_targets(all, 0.4, 5);
    CHECK(t.size() == 4);
    CHECK(std::is_sorted(t.begin(), t.end()));
    CHECK(sample_targets(all, 0.4, 5) == t);
    CHECK(sample_targets(all, 1.0, 5).size() == 10);

    const auto some = judgments(20, 3);  // 7 applicable
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto s = sample_targets(some, 0.4, seed);
      CHECK(s.size() == 3);
      for (int i : s) CHECK(some[i].applicable);
    }
    CHECK(sample_targets(judgments(5, 100), 0.4, 1).size() == 1);
    CHECK(sample_targets({}, 0.4, 1).empty());
  }

  TEST_CASE("scripted generations") {
    const auto rec = aspirin_record();
    SUBCASE("medication dose change is graded E4") {
      auto gw = testsupport::scripted_gateway(
          testsupport::one_stage("generate", json::array({gen_response("Aspirin 325mg.", "medication_error")})));
      const auto s = generate_sample(unit("Aspirin 81mg."), rec, HallucinationType::MedicationError, *gw);
      CHECK(s.hallucinated_text == "Aspirin 325mg.");
      CHECK(s.generation_grade == EvidenceGrade::E4);
      CHECK_FALSE(s.appended);
      CHECK(verify_sample(s).accepted);
    }
    SUBCASE("invented fact is appended and graded E3") {
      auto gw = testsupport::scripted_gateway(
          testsupport::one_stage("generate", json::array({gen_response("Underwent appendectomy.", "invented_fact")})));
      const auto s = generate_sample(unit("Aspirin 81mg."), rec, HallucinationType::InventedFact, *gw);
      CHECK(s.hallucinated_text == "Underwent appendectomy.");
      CHECK(s.generation_grade == EvidenceGrade::E3);
      CHECK(s.appended);
    }
    SUBCASE("implausible value") {
      auto gw = testsupport::scripted_gateway(testsupport::one_stage(
          "generate", json::array({gen_response("Blood pressure 500/300 on arrival.", "value_error")})));
      try {
        generate_sample(unit("Blood pressure 124/70."), rec, HallucinationType::ValueError, *gw);
        FAIL("expected PlausibilityReject");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::PlausibilityReject);
      }
    }
  }

  TEST_CASE("sample verification") {
    CHECK(verify_sample(valid_medication_sample()).accepted);
    auto s = valid_medication_sample();
    s.htype = HallucinationType::InventedFact;
    s.appended = true;
    s.generation_grade = EvidenceGrade::E4;
    CHECK_FALSE(verify_sample(s).accepted);
    s = valid_medication_sample();
    s.hallucinated_text = s.original_text;
    const auto v = verify_sample(s);
    CHECK_FALSE(v.accepted);
    CHECK_FALSE(v.reasons.empty());
  }

  TEST_CASE("document rewrite") {
    const std::string doc = "She was admitted with cough. Aspirin 81mg. She improved.\n";
    const auto units = segment::segment(doc);
    REQUIRE(units.size() == 3);

    CHECK(rewrite_document(doc, units, {}).text == doc);

    auto sub = valid_medication_sample();
    sub.sentence_index = 1;
    sub.original_text = units[1].text;
    auto out = rewrite_document(doc, units, {sub});
    CHECK(out.text == "She was admitted with cough. Aspirin 325mg. She improved.\n");
    CHECK(out.sentence_count == 3);
    REQUIRE(out.gold.size() == 1);
    CHECK(out.gold[0].sentence_index == 1);

    HallucinationSample inv;
    inv.patient_id = "P0401";
    inv.sentence_index = 2;
    inv.original_text = units[2].text;
    inv.hallucinated_text = "Underwent appendectomy.";
    inv.appended = true;
    out = rewrite_document(doc, units, {inv});
    CHECK(out.sentence_count == 4);
    const auto again = segment::segment(out.text);
    REQUIRE(again.size() == 4);
    CHECK(again[3].text == "Underwent appendectomy.");
    CHECK(out.samples[0].rewritten_index == 3);

    inv.sentence_index = 7;
    CHECK_THROWS_WITH_AS(rewrite_document(doc, units, {inv}), doctest::Contains("IndexOutOfRange"), Error);
  }

  TEST_CASE("generation invariants over a 500-sample mock batch") {
    TempDir tmp("gen-batch");
    ehr::generate_fixture({7, 250, 1, std::nullopt}, tmp.path());
    llm::Gateway gw(std::make_shared<mock::RuleBasedBackend>());
    DocumentOptions opt;
    opt.ratio = 0.4;
    std::size_t samples = 0;
    std::size_t docs = 0;
    for (const auto& pid : ehr::list_patients(tmp.path())) {
      if (samples >= 500) break;
      const auto rec = ehr::load_bundle(tmp.path(), pid);
      opt.seed = 7 + docs;
      const auto run = generate_for_document(rec, gw, opt);
      ++docs;
      CAPTURE(pid);

      const auto applicable = std::count_if(run.judgments.begin(), run.judgments.end(),
                                            [](const ApplicabilityJudgment& j) { return j.applicable; });
      CHECK(run.targets.size() == static_cast<std::size_t>(std::ceil(0.4 * static_cast<double>(applicable) - 1e-9)));
      CHECK(run.samples.size() + run.rejected.size() == run.targets.size());

      for (const auto& s : run.rewrite.samples) {
        CHECK((s.htype == HallucinationType::InventedFact) == (s.generation_grade == EvidenceGrade::E3));
        CHECK((s.htype != HallucinationType::InventedFact) == (s.generation_grade == EvidenceGrade::E4));
        CHECK(verify_sample(s).accepted);
      }
      for (const auto& g : run.rewrite.gold) {
        CHECK((g.htype == HallucinationType::InventedFact) == (g.grade == EvidenceGrade::E3));
      }

      // re-segmenting the rewritten document keeps every index in place
      const auto reseg = segment::segment(run.rewrite.text);
      REQUIRE(static_cast<int>(reseg.size()) == run.rewrite.sentence_count);
      std::set<int> changed;
      for (const auto& s : run.rewrite.samples) {
        REQUIRE(s.rewritten_index < static_cast<int>(reseg.size()));
        CHECK(reseg[s.rewritten_index].text == s.hallucinated_text);
        changed.insert(s.rewritten_index);
      }
      for (const auto& u : run.units) {
        if (!changed.count(u.index)) CHECK(reseg[u.index].text == u.text);
      }
      samples += run.rewrite.samples.size();
    }
    CHECK(samples >= 500);
    MESSAGE(samples << " samples from " << docs << " documents");
  }
}
