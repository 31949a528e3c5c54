#include "faithcheck/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "faithcheck/error.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::evaluation {

namespace {

using Key = std::pair<std::string, int>;

std::string key_text(const Key& k) { return "(" + k.first + ", " + std::to_string(k.second) + ")"; }

bool variance_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double exact_p(const std::vector<double>& x, const std::vector<double>& y, double observed) {
  std::vector<std::size_t> perm(y.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> shuffled(y.size());
  long hits = 0, total = 0;
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = y[perm[i]];
    if (std::abs(pearson(x, shuffled)) >= std::abs(observed) - 1e-12) ++hits;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::string fixed(double v) { return text::format_fixed(v, 6); }

json counts_json(const ConfusionCounts& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

std::vector<std::filesystem::path> documents_at(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "no such file or directory: " + path.string());
  std::vector<std::filesystem::path> out;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
  } else {
    out.push_back(path);
  }
  return out;
}

std::vector<json> parse_documents(const std::filesystem::path& file) {
  json doc;
  try {
    doc = json::parse(text::read_file(file.string()));
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, file.string() + ": " + e.what());
  }
  if (doc.is_array() && (doc.empty() || doc.front().contains("schema_version"))) return doc.get<std::vector<json>>();
  return {doc};
}

}  // namespace

Prediction Prediction::from(const detector::DetectionResult& r, std::string origin) {
  Prediction p;
  p.patient_id = r.patient_id;
  p.sentence_index = r.sentence_index;
  p.failed = r.status == detector::ResultStatus::Failed;
  p.flagged = r.status == detector::ResultStatus::Flagged;
  if (!p.failed) {
    p.positive = r.hallucination_status;
    p.grade = r.grade;
    p.htypes = r.htypes;
  }
  p.origin = std::move(origin);
  return p;
}

std::vector<Pair> align(const std::vector<GoldLabel>& gold, const std::vector<Prediction>& predictions) {
  std::map<Key, const GoldLabel*> g;
  for (const auto& row : gold) {
    auto [it, inserted] = g.emplace(Key{row.patient_id, row.sentence_index}, &row);
    if (!inserted) {
      fail(ErrorKind::DuplicateKey, "gold " + key_text(it->first) + " at " + row.origin + ", first seen at " +
                                        it->second->origin);
    }
  }
  std::map<Key, const Prediction*> p;
  for (const auto& row : predictions) {
    auto [it, inserted] = p.emplace(Key{row.patient_id, row.sentence_index}, &row);
    if (!inserted) {
      fail(ErrorKind::DuplicateKey, "detection " + key_text(it->first) + " at " + row.origin +
                                        ", first seen at " + it->second->origin);
    }
  }
  std::set<Key> keys;
  for (const auto& [k, _] : g) keys.insert(k);
  for (const auto& [k, _] : p) keys.insert(k);
  std::vector<Pair> out;
  for (const auto& k : keys) {
    Pair pair;
    pair.patient_id = k.first;
    pair.sentence_index = k.second;
    if (auto it = g.find(k); it != g.end()) {
      pair.gold = *it->second;
    } else {
      pair.gold.patient_id = k.first;
      pair.gold.sentence_index = k.second;
      pair.implicit_gold = true;
    }
    if (auto it = p.find(k); it != p.end()) pair.pred = *it->second;
    out.push_back(std::move(pair));
  }
  return out;
}

std::string Stratum::name() const {
  switch (kind) {
    case Kind::E4: return "E4";
    case Kind::E3E4: return "E3+E4";
    case Kind::Type: return "type:" + std::string(to_string(type));
  }
  return "?";
}

ConfusionCounts confusion(const std::vector<Pair>& pairs, const Stratum& stratum) {
  ConfusionCounts c;
  for (const auto& pair : pairs) {
    const auto& gold = pair.gold;
    const Prediction* pred = pair.pred && !pair.pred->failed ? &*pair.pred : nullptr;
    bool g = false, y = false;
    switch (stratum.kind) {
      case Stratum::Kind::E4:
        g = gold.is_hallucination && gold.grade == EvidenceGrade::E4;
        y = pred && pred->grade == EvidenceGrade::E4;
        break;
      case Stratum::Kind::E3E4:
        g = gold.is_hallucination;
        y = pred && pred->positive;
        break;
      case Stratum::Kind::Type:
        g = gold.is_hallucination && gold.htype == stratum.type;
        y = pred && pred->positive && pred->htypes.count(stratum.type) > 0;
        break;
    }
    if (g && y) ++c.tp;
    else if (!g && y) ++c.fp;
    else if (g && !y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Metrics prf(const ConfusionCounts& c) {
  Metrics m;
  if (c.tp + c.fp > 0) {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  } else {
    m.degenerate = true;
  }
  if (c.tp + c.fn > 0) {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  } else {
    m.degenerate = true;
  }
  const auto f = prf(m.precision, m.recall);
  m.f1 = f.f1;
  m.degenerate = m.degenerate || f.degenerate;
  return m;
}

Metrics prf(double precision, double recall) {
  Metrics m;
  m.precision = precision;
  m.recall = recall;
  if (precision + recall > 0) {
    m.f1 = 2 * precision * recall / (precision + recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

double ceiling_gain(double base_f1, double tuned_f1) {
  if (!(base_f1 < 1.0)) fail(ErrorKind::DegenerateBase, "base F1 " + text::format_double(base_f1) + " leaves no headroom");
  return (tuned_f1 - base_f1) / (1.0 - base_f1) * 100.0;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "pearson on lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  if (x.empty()) return 0;
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd xc = xv.array() - xv.mean();
  const Eigen::VectorXd yc = yv.array() - yv.mean();
  const double denom = xc.norm() * yc.norm();
  if (denom == 0) return 0;
  return std::clamp(xc.dot(yc) / denom, -1.0, 1.0);
}

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) return 1.0;
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = std::abs(r) * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

CorrelationReport correlations(const std::vector<double>& x, const std::vector<double>& y, bool exact) {
  if (x.size() != y.size()) {
    fail(ErrorKind::LengthMismatch, "x has " + std::to_string(x.size()) + " points, y has " + std::to_string(y.size()));
  }
  if (x.size() < 3) fail(ErrorKind::TooFewPoints, "correlation needs at least 3 points, got " + std::to_string(x.size()));
  if (exact && x.size() > kMaxExactPermutationN) {
    fail(ErrorKind::InvalidArgument, "exact permutation p needs n <= " + std::to_string(kMaxExactPermutationN));
  }
  CorrelationReport r;
  r.n = x.size();
  r.exact = exact;
  if (variance_zero(x) || variance_zero(y)) {
    r.degenerate = true;
    return r;
  }
  r.pearson_r = pearson(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  r.spearman_rho = pearson(rx, ry);
  if (exact) {
    r.pearson_p = exact_p(x, y, r.pearson_r);
    r.spearman_p = exact_p(rx, ry, r.spearman_rho);
  } else {
    r.pearson_p = correlation_p_value(r.pearson_r, r.n);
    r.spearman_p = correlation_p_value(r.spearman_rho, r.n);
  }
  return r;
}

Report evaluate(const EvaluationInput& input) {
  Report report;
  const auto pairs = align(input.gold, input.predictions);

  std::vector<Stratum> strata = {Stratum::e4(), Stratum::e3e4()};
  for (auto t : kAllHallucinationTypes) strata.push_back(Stratum::of(t));
  json strata_json = json::object();
  for (const auto& s : strata) {
    const auto c = confusion(pairs, s);
    const auto m = prf(c);
    report.metrics.push_back({s.name(), c, m});
    strata_json[s.name()] = {{"counts", counts_json(c)},
                             {"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"degenerate", m.degenerate}};
  }

  if (input.metadata.contains("baseline_f1")) {
    for (const auto& [name, base] : input.metadata.at("baseline_f1").items()) {
      const auto row = std::find_if(report.metrics.begin(), report.metrics.end(),
                                    [&](const StratumRow& r) { return r.stratum == name; });
      if (row == report.metrics.end()) continue;
      GainRow g{name, base.get<double>(), row->metrics.f1, std::nullopt};
      if (g.base_f1 < 1.0) g.gain = ceiling_gain(g.base_f1, g.tuned_f1);
      report.gains.push_back(g);
    }
  }

  // record length against patient-level E3+E4 F1
  std::map<std::string, std::vector<Pair>> by_patient;
  for (const auto& p : pairs) by_patient[p.patient_id].push_back(p);
  std::vector<double> lengths, f1s;
  for (const auto& [pid, rows] : by_patient) {
    auto it = input.record_chars.find(pid);
    if (it == input.record_chars.end()) continue;
    lengths.push_back(it->second);
    f1s.push_back(prf(confusion(rows, Stratum::e3e4())).f1);
  }
  CorrelationRow corr{"record_chars_vs_patient_f1", std::nullopt, ""};
  if (lengths.size() >= 3) {
    corr.report = correlations(lengths, f1s);
    if (corr.report->degenerate) corr.note = "zero variance";
  } else {
    corr.note = "fewer than 3 patients with record lengths";
  }
  report.correlations.push_back(corr);

  long flagged = 0, failed = 0, implicit = 0, missing = 0, gold_pos = 0, pred_pos = 0;
  for (const auto& p : pairs) {
    implicit += p.implicit_gold ? 1 : 0;
    gold_pos += p.gold.is_hallucination ? 1 : 0;
    if (!p.pred) {
      ++missing;
      continue;
    }
    flagged += p.pred->flagged ? 1 : 0;
    failed += p.pred->failed ? 1 : 0;
    pred_pos += p.pred->positive ? 1 : 0;
  }
  report.summary = {{"schema_version", "report/1"},
                    {"metadata", input.metadata},
                    {"patients", by_patient.size()},
                    {"sentences", pairs.size()},
                    {"gold_positives", gold_pos},
                    {"predicted_positives", pred_pos},
                    {"implicit_negatives", implicit},
                    {"missing_detections", missing},
                    {"flagged", flagged},
                    {"failed", failed},
                    {"strata", strata_json}};
  return report;
}

void emit_report(const Report& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  std::string metrics = "stratum,tp,fp,fn,tn,precision,recall,f1,degenerate\n";
  for (const auto& r : report.metrics) {
    metrics += r.stratum + "," + std::to_string(r.counts.tp) + "," + std::to_string(r.counts.fp) + "," +
               std::to_string(r.counts.fn) + "," + std::to_string(r.counts.tn) + "," + fixed(r.metrics.precision) +
               "," + fixed(r.metrics.recall) + "," + fixed(r.metrics.f1) + "," + (r.metrics.degenerate ? "1" : "0") +
               "\n";
  }
  std::string gains = "name,base_f1,tuned_f1,gain_pct\n";
  for (const auto& g : report.gains) {
    gains += g.name + "," + fixed(g.base_f1) + "," + fixed(g.tuned_f1) + "," + (g.gain ? text::format_fixed(*g.gain, 2) : "") + "\n";
  }
  std::string corr = "name,n,pearson_r,pearson_p,spearman_rho,spearman_p,degenerate,note\n";
  for (const auto& c : report.correlations) {
    if (c.report) {
      const auto& r = *c.report;
      corr += c.name + "," + std::to_string(r.n) + "," + fixed(r.pearson_r) + "," + fixed(r.pearson_p) + "," +
              fixed(r.spearman_rho) + "," + fixed(r.spearman_p) + "," + (r.degenerate ? "1" : "0") + "," + c.note + "\n";
    } else {
      corr += c.name + ",0,,,,,1," + c.note + "\n";
    }
  }
  json summary = report.summary;
  json corr_json = json::array();
  for (const auto& c : report.correlations) {
    json j = {{"name", c.name}, {"note", c.note}};
    if (c.report) {
      j["n"] = c.report->n;
      j["pearson_r"] = c.report->pearson_r;
      j["pearson_p"] = c.report->pearson_p;
      j["spearman_rho"] = c.report->spearman_rho;
      j["spearman_p"] = c.report->spearman_p;
      j["degenerate"] = c.report->degenerate;
    }
    corr_json.push_back(j);
  }
  summary["correlations"] = corr_json;
  json gains_json = json::array();
  for (const auto& g : report.gains) {
    gains_json.push_back({{"name", g.name}, {"base_f1", g.base_f1}, {"tuned_f1", g.tuned_f1},
                          {"gain_pct", g.gain ? json(*g.gain) : json(nullptr)}});
  }
  summary["gains"] = gains_json;

  text::write_file((out_dir / "metrics.csv").string(), metrics);
  text::write_file((out_dir / "gains.csv").string(), gains);
  text::write_file((out_dir / "correlations.csv").string(), corr);
  text::write_file((out_dir / "summary.json").string(), summary.dump(2) + "\n");
}

std::vector<GoldLabel> load_gold(const std::filesystem::path& path, std::map<std::string, double>* record_chars) {
  std::vector<GoldLabel> out;
  for (const auto& file : documents_at(path)) {
    for (const auto& doc : parse_documents(file)) {
      const auto pid = doc.at("patient_id").get<std::string>();
      if (record_chars && doc.contains("record_chars")) (*record_chars)[pid] = doc.at("record_chars").get<double>();
      const auto& rows = doc.at("gold");
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        GoldLabel g;
        g.patient_id = row.value("patient_id", pid);
        g.sentence_index = row.at("sentence_index").get<int>();
        g.is_hallucination = row.value("is_hallucination", true);
        g.origin = file.string() + "#gold[" + std::to_string(i) + "]";
        if (g.is_hallucination) {
          g.htype = parse_hallucination_type(row.at("hallucination_type").get<std::string>());
          g.grade = parse_grade(row.at("grade").get<std::string>());
          if (!g.htype || !g.grade) fail(ErrorKind::Schema, g.origin + ": positive gold needs a type and a grade");
        }
        out.push_back(std::move(g));
      }
    }
  }
  return out;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for (const auto& file : documents_at(path)) {
    for (const auto& doc : parse_documents(file)) {
      const auto& rows = doc.is_array() ? doc : doc.at("results");
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back(Prediction::from(detector::result_from_json(rows[i]),
                                       file.string() + "#results[" + std::to_string(i) + "]"));
      }
    }
  }
  return out;
}

}  // namespace faithcheck::evaluation
