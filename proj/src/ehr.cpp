#include "faithcheck/ehr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "faithcheck/assets.hpp"
#include "faithcheck/csv.hpp"
#include "faithcheck/error.hpp"
#include "faithcheck/hash.hpp"
#include "faithcheck/random.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::ehr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string where(const csv::Table& t, const csv::Row& r) {
  return t.source.filename().string() + ":" + std::to_string(r.line);
}

std::optional<double> parse_decimal(const csv::Table& t, const csv::Row& r, const std::string& col) {
  const std::string s = text::trim(t.cell(r, col));
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::MalformedRow, where(t, r) + ": column '" + col + "' is not a number: '" + s + "'");
  }
}

std::optional<int> parse_int(const csv::Table& t, const csv::Row& r, const std::string& col) {
  const std::string s = text::trim(t.cell(r, col));
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(ErrorKind::MalformedRow, where(t, r) + ": column '" + col + "' is not an integer: '" + s + "'");
  }
  return v;
}

bool is_timestamp(const std::string& s) {
  // YYYY-MM-DD HH:MM:SS (a 'T' separator is also accepted)
  if (s.size() != 19) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    switch (i) {
      case 4: case 7: if (c != '-') return false; break;
      case 10: if (c != ' ' && c != 'T') return false; break;
      case 13: case 16: if (c != ':') return false; break;
      default: if (c < '0' || c > '9') return false;
    }
  }
  return true;
}

std::string checked_timestamp(const csv::Table& t, const csv::Row& r, const std::string& col) {
  std::string s = text::trim(t.cell(r, col));
  if (!is_timestamp(s)) {
    fail(ErrorKind::MalformedRow, where(t, r) + ": column '" + col + "' is not a timestamp: '" + s + "'");
  }
  s[10] = ' ';
  return s;
}

std::optional<csv::Table> read_optional(const fs::path& root, const char* name) {
  const fs::path p = root / name;
  if (!fs::exists(p)) return std::nullopt;
  return csv::read_file(p);
}

void require_columns(const csv::Table& t, std::initializer_list<const char*> cols) {
  for (const char* c : cols) {
    if (!t.column(c)) {
      fail(ErrorKind::MalformedRow, t.source.filename().string() + ":1: missing column '" + c + "'");
    }
  }
}

template <typename Fn>
void for_patient_rows(const csv::Table& t, const std::string& patient_id, Fn&& fn) {
  const auto idx = *t.column("subject_id");
  for (const auto& row : t.rows) {
    if (text::trim(row.cells[idx]) == patient_id) fn(row);
  }
}

}  // namespace

std::string_view to_string(WarningKind kind) {
  switch (kind) {
    case WarningKind::Range: return "RangeWarning";
    case WarningKind::DuplicateSeq: return "DuplicateSeqWarning";
    case WarningKind::TimeOrder: return "TimeOrderWarning";
  }
  return "Warning";
}

std::vector<std::string> list_patients(const fs::path& root) {
  const fs::path p = root / kTargetFile;
  if (!fs::exists(p)) fail(ErrorKind::MissingTable, p.string());
  const auto t = csv::read_file(p);
  require_columns(t, {"subject_id"});
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    auto id = text::trim(t.cell(row, "subject_id"));
    if (seen.insert(id).second) ids.push_back(id);
  }
  return ids;
}

PatientRecord load_bundle(const fs::path& root, const std::string& patient_id) {
  if (patient_id.empty()) fail(ErrorKind::InvalidArgument, "patient id must be non-empty");
  PatientRecord rec;
  rec.patient_id = patient_id;

  const fs::path target_path = root / kTargetFile;
  if (!fs::exists(target_path)) fail(ErrorKind::MissingTable, "discharge_target (" + target_path.string() + ")");

  // stay -> subject, to catch rows that point at another patient's stay.
  std::map<std::string, std::string> stay_owner;
  if (auto t = read_optional(root, kEdStaysFile)) {
    require_columns(*t, {"subject_id", "hadm_id", "stay_id", "intime", "outtime", "disposition"});
    for (const auto& row : t->rows) {
      stay_owner[text::trim(t->cell(row, "stay_id"))] = text::trim(t->cell(row, "subject_id"));
    }
    for_patient_rows(*t, patient_id, [&](const csv::Row& row) {
      EdStayRow s;
      s.stay_id = text::trim(t->cell(row, "stay_id"));
      s.hadm_id = text::trim(t->cell(row, "hadm_id"));
      s.in_time = checked_timestamp(*t, row, "intime");
      s.out_time = checked_timestamp(*t, row, "outtime");
      s.disposition = text::trim(t->cell(row, "disposition"));
      rec.ed_stays.push_back(std::move(s));
    });
  }
  auto check_stay = [&](const csv::Table& t, const csv::Row& row, const std::string& stay) {
    auto it = stay_owner.find(stay);
    if (it != stay_owner.end() && it->second != patient_id) {
      fail(ErrorKind::IdMismatch, where(t, row) + ": stay " + stay + " belongs to " + it->second +
                                      ", not " + patient_id);
    }
  };

  {
    const auto t = csv::read_file(target_path);
    require_columns(t, {"subject_id", "brief_hospital_course", "discharge_instructions"});
    bool found = false;
    for_patient_rows(t, patient_id, [&](const csv::Row& row) {
      if (found) return;
      found = true;
      rec.target_text = t.cell(row, "brief_hospital_course");
      rec.discharge_instructions = t.cell(row, "discharge_instructions");
    });
    if (!found || text::trim(rec.target_text).empty()) {
      fail(ErrorKind::MissingTable, "discharge_target has no brief_hospital_course for " + patient_id);
    }
  }

  if (auto t = read_optional(root, kDiagnosisFile)) {
    require_columns(*t, {"subject_id", "stay_id", "seq_num", "icd_code", "icd_version", "icd_title"});
    for_patient_rows(*t, patient_id, [&](const csv::Row& row) {
      DiagnosisRow d;
      d.stay_id = text::trim(t->cell(row, "stay_id"));
      check_stay(*t, row, d.stay_id);
      d.code = text::trim(t->cell(row, "icd_code"));
      if (d.code.empty()) fail(ErrorKind::MalformedRow, where(*t, row) + ": empty icd_code");
      d.icd_version = text::trim(t->cell(row, "icd_version"));
      d.label = text::trim(t->cell(row, "icd_title"));
      auto seq = parse_int(*t, row, "seq_num");
      if (!seq || *seq < 1) fail(ErrorKind::MalformedRow, where(*t, row) + ": seq_num must be >= 1");
      d.seq = *seq;
      rec.diagnoses.push_back(std::move(d));
    });
  }

  if (auto t = read_optional(root, kDischargeFile)) {
    require_columns(*t, {"subject_id", "text"});
    std::vector<std::string> notes;
    for_patient_rows(*t, patient_id, [&](const csv::Row& row) { notes.push_back(t->cell(row, "text")); });
    rec.discharge_text = text::join(notes, "\n\n");
  }

  if (auto t = read_optional(root, kRadiologyFile)) {
    require_columns(*t, {"subject_id", "text"});
    for_patient_rows(*t, patient_id, [&](const csv::Row& row) {
      auto body = t->cell(row, "text");
      if (!text::trim(body).empty()) rec.radiology_reports.push_back(std::move(body));
    });
  }

  if (auto t = read_optional(root, kTriageFile)) {
    require_columns(*t, {"subject_id", "stay_id", "temperature", "heartrate", "resprate", "o2sat", "sbp",
                         "dbp", "pain", "acuity", "chiefcomplaint"});
    for_patient_rows(*t, patient_id, [&](const csv::Row& row) {
      TriageVitals v;
      v.stay_id = text::trim(t->cell(row, "stay_id"));
      check_stay(*t, row, v.stay_id);
      v.temperature = parse_decimal(*t, row, "temperature");
      v.heart_rate = parse_decimal(*t, row, "heartrate");
      v.respiratory_rate = parse_decimal(*t, row, "resprate");
      v.spo2 = parse_decimal(*t, row, "o2sat");
      v.sbp = parse_decimal(*t, row, "sbp");
      v.dbp = parse_decimal(*t, row, "dbp");
      v.pain = parse_int(*t, row, "pain");
      v.acuity = parse_int(*t, row, "acuity");
      v.chief_complaint = text::trim(t->cell(row, "chiefcomplaint"));
      rec.triage.push_back(std::move(v));
    });
  }

  if (auto t = read_optional(root, kMedicationsFile)) {
    require_columns(*t, {"subject_id", "drug", "dose", "route", "frequency"});
    for_patient_rows(*t, patient_id, [&](const csv::Row& row) {
      MedicationRow m{text::trim(t->cell(row, "drug")), text::trim(t->cell(row, "dose")),
                      text::trim(t->cell(row, "route")), text::trim(t->cell(row, "frequency"))};
      if (m.drug.empty()) fail(ErrorKind::MalformedRow, where(*t, row) + ": empty drug");
      rec.medications.push_back(std::move(m));
    });
  }

  if (auto t = read_optional(root, kLabsFile)) {
    require_columns(*t, {"subject_id", "charttime", "test", "value", "unit"});
    for_patient_rows(*t, patient_id, [&](const csv::Row& row) {
      LabRow l{checked_timestamp(*t, row, "charttime"), text::trim(t->cell(row, "test")),
               text::trim(t->cell(row, "value")), text::trim(t->cell(row, "unit"))};
      if (l.test.empty()) fail(ErrorKind::MalformedRow, where(*t, row) + ": empty test");
      rec.labs.push_back(std::move(l));
    });
  }
  return rec;
}

VitalBounds VitalBounds::from_json(const json& j) {
  VitalBounds b;
  const auto& t = j.at("triage");
  auto pair = [&](const char* key, double& lo, double& hi) {
    if (t.contains(key)) {
      lo = t[key].at(0).get<double>();
      hi = t[key].at(1).get<double>();
    }
  };
  auto ipair = [&](const char* key, int& lo, int& hi) {
    if (t.contains(key)) {
      lo = t[key].at(0).get<int>();
      hi = t[key].at(1).get<int>();
    }
  };
  pair("temperature", b.temperature_lo, b.temperature_hi);
  pair("heart_rate", b.heart_rate_lo, b.heart_rate_hi);
  pair("respiratory_rate", b.respiratory_rate_lo, b.respiratory_rate_hi);
  pair("spo2", b.spo2_lo, b.spo2_hi);
  pair("sbp", b.sbp_lo, b.sbp_hi);
  pair("dbp", b.dbp_lo, b.dbp_hi);
  ipair("pain", b.pain_lo, b.pain_hi);
  ipair("acuity", b.acuity_lo, b.acuity_hi);
  return b;
}

const VitalBounds& VitalBounds::defaults() {
  static const VitalBounds b = from_json(json::parse(assets::get("plausibility.json")));
  return b;
}

std::vector<ValidationWarning> validate_bundle(const PatientRecord& record, const VitalBounds& b) {
  std::vector<ValidationWarning> out;
  auto check = [&](const char* field, const auto& value, double lo, double hi) {
    if (value && (*value < lo || *value > hi)) {
      std::ostringstream msg;
      msg << field << " = " << *value << " outside [" << lo << ", " << hi << "]";
      out.push_back({WarningKind::Range, field, msg.str()});
    }
  };
  for (const auto& v : record.triage) {
    check("temperature", v.temperature, b.temperature_lo, b.temperature_hi);
    check("heart_rate", v.heart_rate, b.heart_rate_lo, b.heart_rate_hi);
    check("respiratory_rate", v.respiratory_rate, b.respiratory_rate_lo, b.respiratory_rate_hi);
    check("spo2", v.spo2, b.spo2_lo, b.spo2_hi);
    check("sbp", v.sbp, b.sbp_lo, b.sbp_hi);
    check("dbp", v.dbp, b.dbp_lo, b.dbp_hi);
    check("pain", v.pain, b.pain_lo, b.pain_hi);
    check("acuity", v.acuity, b.acuity_lo, b.acuity_hi);
  }
  std::map<int, int> seq_count;
  for (const auto& d : record.diagnoses) ++seq_count[d.seq];
  for (const auto& [seq, n] : seq_count) {
    if (n > 1) {
      out.push_back({WarningKind::DuplicateSeq, "seq",
                     "diagnosis seq " + std::to_string(seq) + " appears " + std::to_string(n) + " times"});
    }
  }
  for (const auto& s : record.ed_stays) {
    if (s.out_time < s.in_time) {
      out.push_back({WarningKind::TimeOrder, "out_time", "stay " + s.stay_id + " ends before it starts"});
    }
  }
  return out;
}

std::string patient_id_for(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04d", index);
  return buf;
}

std::optional<int> patient_number(const std::string& patient_id) {
  if (patient_id.size() < 2 || patient_id[0] != 'P') return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(patient_id.data() + 1, patient_id.data() + patient_id.size(), v);
  if (ec != std::errc{} || ptr != patient_id.data() + patient_id.size()) return std::nullopt;
  return v;
}

namespace {

std::string fill(std::string tmpl, const std::map<std::string, std::string>& vars) {
  for (const auto& [k, v] : vars) tmpl = text::replace_all(std::move(tmpl), "{" + k + "}", v);
  return tmpl;
}

std::string lower_first(const std::string& s) {
  // "Type 2 diabetes mellitus" -> "type 2 diabetes mellitus"; keeps acronyms like "BNP".
  if (s.size() >= 2 && std::isupper(static_cast<unsigned char>(s[0])) &&
      std::isupper(static_cast<unsigned char>(s[1]))) {
    return s;
  }
  return text::lower(s);
}

std::string two(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

// Minutes since 2150-01-01 00:00 rendered on a fixed 30-day-month calendar
// (synthetic dates only need to be ordered and well formed).
std::string stamp(long minutes) {
  const long day = minutes / (24 * 60);
  const int hh = static_cast<int>((minutes / 60) % 24);
  const int mm = static_cast<int>(minutes % 60);
  const int year = 2150 + static_cast<int>(day / 360);
  const int month = static_cast<int>((day % 360) / 30) + 1;
  const int dom = static_cast<int>(day % 30) + 1;
  return std::to_string(year) + "-" + two(month) + "-" + two(dom) + " " + two(hh) + ":" + two(mm) + ":00";
}

std::string value_text(double v, int decimals) { return text::format_fixed(v, decimals); }

struct Tables {
  std::string diagnosis = csv::format_row({"subject_id", "stay_id", "seq_num", "icd_code", "icd_version", "icd_title"});
  std::string discharge = csv::format_row({"note_id", "subject_id", "hadm_id", "text"});
  std::string target = csv::format_row({"note_id", "subject_id", "hadm_id", "brief_hospital_course", "discharge_instructions"});
  std::string edstays = csv::format_row({"subject_id", "hadm_id", "stay_id", "intime", "outtime", "disposition"});
  std::string radiology = csv::format_row({"note_id", "subject_id", "hadm_id", "text"});
  std::string triage = csv::format_row({"subject_id", "stay_id", "temperature", "heartrate", "resprate", "o2sat",
                                        "sbp", "dbp", "pain", "acuity", "chiefcomplaint"});
  std::string medications = csv::format_row({"subject_id", "drug", "dose", "route", "frequency"});
  std::string labs = csv::format_row({"subject_id", "charttime", "test", "value", "unit"});
};

void synthesize_patient(const json& vocab, std::uint64_t seed, int index, Tables& out) {
  const std::string pid = patient_id_for(index);
  Rng rng(Digest().add(std::to_string(seed)).add(pid).value());

  const auto& primaries = vocab.at("primary_diagnoses");
  const json& primary = primaries.at(rng.below(primaries.size()));
  std::vector<json> comorbid(vocab.at("comorbidities").begin(), vocab.at("comorbidities").end());
  rng.shuffle(comorbid);
  comorbid.resize(2);

  const std::string stay_id = "3" + std::to_string(1000000 + index);
  const std::string hadm_id = "2" + std::to_string(1000000 + index);
  const long in_min = static_cast<long>(rng.below(300)) * 24 * 60 + 8 * 60 + static_cast<long>(rng.below(600));
  const long out_min = in_min + 240 + static_cast<long>(rng.below(360));
  const int hospital_day = 2 + static_cast<int>(rng.below(5));

  // diagnoses
  int seq = 1;
  auto add_dx = [&](const json& d) {
    out.diagnosis += csv::format_row({pid, stay_id, std::to_string(seq++), d.at("code").get<std::string>(),
                                      d.at("version").get<std::string>(), d.at("label").get<std::string>()});
  };
  add_dx(primary);
  for (const auto& c : comorbid) add_dx(c);

  // ED stay + triage
  const auto& dispositions = vocab.at("dispositions");
  out.edstays += csv::format_row({pid, hadm_id, stay_id, stamp(in_min), stamp(out_min),
                                  dispositions.at(rng.below(dispositions.size())).get<std::string>()});
  const double temp = std::round(rng.uniform(97.0, 99.5) * 10) / 10;
  const int hr = 60 + static_cast<int>(rng.below(41));
  const int rr = 12 + static_cast<int>(rng.below(9));
  const int spo2 = 94 + static_cast<int>(rng.below(7));
  const int sbp = 105 + static_cast<int>(rng.below(36));
  const int dbp = 60 + static_cast<int>(rng.below(31));
  const int pain = static_cast<int>(rng.below(9));
  const int acuity = 2 + static_cast<int>(rng.below(3));
  const std::string complaint = primary.at("complaint").get<std::string>();
  out.triage += csv::format_row({pid, stay_id, text::format_fixed(temp, 1), std::to_string(hr), std::to_string(rr),
                                 std::to_string(spo2), std::to_string(sbp), std::to_string(dbp), std::to_string(pain),
                                 std::to_string(acuity), complaint});

  // medications
  const auto& med_vocab = vocab.at("medications");
  struct Med { std::string drug, dose, route, freq; };
  std::vector<Med> meds;
  auto add_med = [&](const std::string& drug) {
    const auto& m = med_vocab.at(drug);
    const auto& doses = m.at("doses");
    meds.push_back({drug, doses.at(rng.below(doses.size())).get<std::string>(), m.at("route").get<std::string>(),
                    m.at("frequency").get<std::string>()});
  };
  for (const auto& d : primary.at("medications")) add_med(d.get<std::string>());
  for (const auto& c : comorbid) add_med(c.at("medication").get<std::string>());
  for (const auto& m : meds) out.medications += csv::format_row({pid, m.drug, m.dose, m.route, m.freq});

  // labs: every parameter of the primary's panels on admission, abnormal ones again on day 2
  const auto& lab_vocab = vocab.at("labs");
  const auto& abnormal = primary.at("abnormal");
  struct Lab { std::string time, test, value, unit; bool abnormal; };
  std::vector<Lab> labs;
  for (const auto& panel : primary.at("panels")) {
    for (auto it = lab_vocab.begin(); it != lab_vocab.end(); ++it) {
      if (it.value().at("panel") != panel) continue;
      const int dec = it.value().at("decimals").get<int>();
      const std::string unit = it.value().at("unit").get<std::string>();
      const bool is_abn = abnormal.contains(it.key());
      const double lo = is_abn ? abnormal[it.key()].at(0).get<double>() : it.value().at("low").get<double>();
      const double hi = is_abn ? abnormal[it.key()].at(1).get<double>() : it.value().at("high").get<double>();
      labs.push_back({stamp(in_min + 60), it.key(), value_text(rng.uniform(lo, hi), dec), unit, is_abn});
      if (is_abn) {
        const double norm_lo = it.value().at("low").get<double>();
        const double norm_hi = it.value().at("high").get<double>();
        labs.push_back({stamp(in_min + 24 * 60 + 6 * 60), it.key(),
                        value_text(rng.uniform(norm_lo, norm_hi + (hi - norm_hi) * 0.3), dec), unit, false});
      }
    }
  }
  for (const auto& l : labs) out.labs += csv::format_row({pid, l.time, l.test, l.value, l.unit});

  // negated history must not contradict a recorded diagnosis
  std::vector<std::string> negatable;
  for (const auto& n : vocab.at("negatable_history")) {
    const std::string term = n.get<std::string>();
    bool clash = text::fold(primary.at("label").get<std::string>()).find(term) != std::string::npos;
    for (const auto& c : comorbid) {
      clash = clash || text::fold(c.at("label").get<std::string>()).find(term) != std::string::npos;
    }
    if (!clash) negatable.push_back(term);
  }
  const std::string negated = negatable.at(rng.below(negatable.size()));

  const Lab* shown_lab = &labs.front();
  for (const auto& l : labs) {
    if (l.abnormal) {
      shown_lab = &l;
      break;
    }
  }

  const auto& tm = vocab.at("target_templates");
  const std::string primary_label = primary.at("label").get<std::string>();
  std::map<std::string, std::string> vars = {
      {"complaint_lower", lower_first(complaint)},
      {"diagnosis_lower", lower_first(primary_label)},
      {"imaging", primary.at("imaging").get<std::string>()},
      {"drug_lower", lower_first(meds.front().drug)},
      {"dose", meds.front().dose},
      {"frequency", meds.front().freq},
      {"lab", shown_lab->test},
      {"value", shown_lab->value},
      {"unit", shown_lab->unit},
      {"sbp", std::to_string(sbp)},
      {"dbp", std::to_string(dbp)},
      {"hr", std::to_string(hr)},
      {"negatable", negated},
      {"comorbid_drug_lower", lower_first(meds.back().drug)},
      {"comorbid_lower", lower_first(comorbid.back().at("label").get<std::string>())},
      {"day", std::to_string(hospital_day)},
  };
  std::vector<std::string> sentences;
  sentences.push_back(fill(tm.at("opening"), vars));
  if (rng.below(2) == 0) sentences.push_back(fill(tm.at("admitted"), vars));
  for (const char* key : {"diagnosis", "imaging", "medication", "lab", "vitals", "negation", "comorbidity", "discharge"}) {
    sentences.push_back(fill(tm.at(key), vars));
  }

  std::ostringstream note;
  note << "Chief Complaint: " << complaint << "\n\n"
       << "History of Present Illness: Patient presented with " << lower_first(complaint) << ". "
       << "Evaluation in the emergency department was consistent with " << lower_first(primary_label) << ".\n\n"
       << "Past Medical History: " << comorbid[0].at("label").get<std::string>() << ". "
       << comorbid[1].at("label").get<std::string>() << ". No history of " << negated << ".\n\n"
       << "Pertinent Results:\n";
  for (const auto& l : labs) note << l.time << " " << l.test << " " << l.value << " " << l.unit << "\n";
  note << "\nImaging: " << primary.at("imaging").get<std::string>() << "\n\n"
       << "Discharge Diagnosis: " << primary_label << "\n\n"
       << "Discharge Medications:\n";
  for (std::size_t i = 0; i < meds.size(); ++i) {
    note << i + 1 << ". " << meds[i].drug << " " << meds[i].dose << " " << meds[i].route << " " << meds[i].freq << "\n";
  }
  note << "\nLength of stay: " << hospital_day << " days.";

  out.discharge += csv::format_row({pid + "-DS-1", pid, hadm_id, note.str()});
  out.target += csv::format_row({pid + "-DS-1", pid, hadm_id, text::join(sentences, " "),
                                 "Please take your medications as prescribed. Follow up with your primary care "
                                 "physician within one week."});
  out.radiology += csv::format_row({pid + "-RR-1", pid, hadm_id, primary.at("radiology").get<std::string>()});
}

}  // namespace

void generate_fixture(const FixtureOptions& options, const fs::path& out_dir) {
  if (options.n_patients < 1) fail(ErrorKind::InvalidArgument, "n_patients must be >= 1");
  if (options.first_index < 0) fail(ErrorKind::InvalidArgument, "first_index must be >= 0");
  const json vocab = options.vocabulary ? *options.vocabulary : json::parse(assets::get("vocabulary.json"));

  Tables t;
  for (int i = 0; i < options.n_patients; ++i) synthesize_patient(vocab, options.seed, options.first_index + i, t);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  text::write_file((out_dir / kDiagnosisFile).string(), t.diagnosis);
  text::write_file((out_dir / kDischargeFile).string(), t.discharge);
  text::write_file((out_dir / kTargetFile).string(), t.target);
  text::write_file((out_dir / kEdStaysFile).string(), t.edstays);
  text::write_file((out_dir / kRadiologyFile).string(), t.radiology);
  text::write_file((out_dir / kTriageFile).string(), t.triage);
  text::write_file((out_dir / kMedicationsFile).string(), t.medications);
  text::write_file((out_dir / kLabsFile).string(), t.labs);
}

json to_json(const PatientRecord& r) {
  json j;
  j["patient_id"] = r.patient_id;
  j["diagnoses"] = json::array();
  for (const auto& d : r.diagnoses) {
    j["diagnoses"].push_back({{"seq", d.seq}, {"code", d.code}, {"version", d.icd_version}, {"label", d.label},
                              {"stay_id", d.stay_id}});
  }
  j["discharge_text"] = r.discharge_text;
  j["target_text"] = r.target_text;
  j["discharge_instructions"] = r.discharge_instructions;
  j["instructions_excluded_from_evaluation"] = r.instructions_excluded;
  j["ed_stays"] = json::array();
  for (const auto& s : r.ed_stays) {
    j["ed_stays"].push_back({{"stay_id", s.stay_id}, {"hadm_id", s.hadm_id}, {"in_time", s.in_time},
                             {"out_time", s.out_time}, {"disposition", s.disposition}});
  }
  j["radiology_reports"] = r.radiology_reports;
  j["triage"] = json::array();
  for (const auto& v : r.triage) {
    json t{{"stay_id", v.stay_id}, {"chief_complaint", v.chief_complaint}};
    auto put = [&](const char* k, const auto& o) { t[k] = o ? json(*o) : json(nullptr); };
    put("temperature", v.temperature);
    put("heart_rate", v.heart_rate);
    put("respiratory_rate", v.respiratory_rate);
    put("spo2", v.spo2);
    put("sbp", v.sbp);
    put("dbp", v.dbp);
    put("pain", v.pain);
    put("acuity", v.acuity);
    j["triage"].push_back(std::move(t));
  }
  j["medications"] = json::array();
  for (const auto& m : r.medications) {
    j["medications"].push_back({{"drug", m.drug}, {"dose", m.dose}, {"route", m.route}, {"frequency", m.frequency}});
  }
  j["labs"] = json::array();
  for (const auto& l : r.labs) {
    j["labs"].push_back({{"charttime", l.charttime}, {"test", l.test}, {"value", l.value}, {"unit", l.unit}});
  }
  return j;
}

}  // namespace faithcheck::ehr
