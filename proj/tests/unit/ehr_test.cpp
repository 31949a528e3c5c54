#include <doctest.h>

#include "faithcheck/csv.hpp"
#include "faithcheck/ehr.hpp"
#include "faithcheck/error.hpp"
#include "support.hpp"

using namespace faithcheck;
using namespace faithcheck::ehr;
namespace fs = std::filesystem;
using testsupport::TempDir;

namespace {

void copy_bundle(const fs::path& from, const fs::path& to) {
  for (const auto& e : fs::directory_iterator(from)) {
    if (e.path().extension() == ".csv") fs::copy_file(e.path(), to / e.path().filename());
  }
}

std::string dir_bytes(const fs::path& dir) {
  std::string all;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) all += f.filename().string() + "\n" + testsupport::slurp(f);
  return all;
}

}  // namespace

TEST_SUITE("ehr") {
  TEST_CASE("shipped fixture patient") {
    const auto rec = load_bundle(testsupport::data_dir() / "fixture", "P0001");
    CHECK(rec.patient_id == "P0001");
    CHECK(rec.diagnoses.size() == 3);
    CHECK(rec.triage.size() == 1);
    CHECK_FALSE(rec.discharge_text.empty());
    CHECK_FALSE(rec.target_text.empty());
    CHECK(rec.instructions_excluded);
    CHECK(validate_bundle(rec).empty());
    CHECK(list_patients(testsupport::data_dir() / "fixture").size() == 5);
  }

  TEST_CASE("empty radiology table") {
    const auto rec = load_bundle(testsupport::data_dir() / "e2e" / "bundle", "P0203");
    CHECK(rec.radiology_reports.empty());
  }

  TEST_CASE("missing discharge_target") {
    TempDir tmp("ehr-missing");
    copy_bundle(testsupport::data_dir() / "fixture", tmp.path());
    fs::remove(tmp / kTargetFile);
    try {
      load_bundle(tmp.path(), "P0001");
      FAIL("expected MissingTable");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingTable);
    }
  }

  TEST_CASE("validation warnings") {
    auto rec = load_bundle(testsupport::data_dir() / "fixture", "P0001");
    SUBCASE("spo2 out of range") {
      rec.triage.at(0).spo2 = 150;
      const auto w = validate_bundle(rec);
      REQUIRE(w.size() == 1);
      CHECK(w[0].kind == WarningKind::Range);
      CHECK(w[0].field == "spo2");
    }
    SUBCASE("duplicate seq") {
      rec.diagnoses.at(1).seq = rec.diagnoses.at(0).seq;
      const auto w = validate_bundle(rec);
      REQUIRE(w.size() == 1);
      CHECK(w[0].kind == WarningKind::DuplicateSeq);
    }
  }

  TEST_CASE("fixture generator determinism") {
    TempDir a("fx-a"), b("fx-b"), c("fx-c");
    generate_fixture({42, 5, 1, std::nullopt}, a.path());
    generate_fixture({42, 5, 1, std::nullopt}, b.path());
    generate_fixture({43, 5, 1, std::nullopt}, c.path());
    CHECK(dir_bytes(a.path()) == dir_bytes(b.path()));
    CHECK(dir_bytes(a.path()) != dir_bytes(c.path()));
    // the shipped fixture is exactly this generator's output
    CHECK(dir_bytes(a.path()) == dir_bytes(testsupport::data_dir() / "fixture"));
    CHECK_THROWS_AS(generate_fixture({42, 0, 1, std::nullopt}, a.path()), Error);
  }

  TEST_CASE("patient numbering") {
    CHECK(patient_id_for(201) == "P0201");
    CHECK(patient_number("P0201") == 201);
    CHECK_FALSE(patient_number("X12"));
  }

  TEST_CASE("csv quoting round trip") {
    const std::vector<std::string> fields = {"plain", "has,comma", "has \"quote\"", "multi\nline", ""};
    const auto t = csv::parse("a,b,c,d,e\n" + csv::format_row(fields) + "\n");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].cells == fields);
    CHECK(t.rows[0].line == 2);
    CHECK_THROWS_AS(csv::parse("a,b\n\"open,1\n"), Error);
    CHECK_THROWS_AS(csv::parse("a,b\n1,2,3\n"), Error);
  }
}
