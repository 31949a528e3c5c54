#include "faithcheck/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include "faithcheck/assets.hpp"
#include "faithcheck/concurrency.hpp"
#include "faithcheck/error.hpp"
#include "faithcheck/evaluation.hpp"
#include "faithcheck/hash.hpp"
#include "faithcheck/prompts.hpp"
#include "faithcheck/rule_mock.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::pipeline {

namespace fs = std::filesystem;

namespace {

inline constexpr const char* kManifestVersion = "manifest/1";

Range range_from(const json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    fail(ErrorKind::Config, "partition '" + name + "' must be [first, last]");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string file_digest(const fs::path& p) { return Digest().add(text::read_file(p.string())).hex(); }

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  text::write_file(p.string(), j.dump(2) + "\n");
}

void write_entries(const fs::path& p, const std::vector<llm::CallLogEntry>& entries) {
  std::string body;
  for (const auto& e : entries) body += e.to_json().dump() + "\n";
  fs::create_directories(p.parent_path());
  text::write_file(p.string(), body);
}

// Call-log tag stages behind each pipeline stage.
std::vector<std::string> tag_stages(const std::string& stage) {
  if (stage == "graph") return {"extract", "summarize"};
  if (stage == "generate") return {"applicability", "generate"};
  if (stage == "detect") return {"detect"};
  return {};
}

void write_stage_log(const fs::path& out, const llm::Gateway& gw, const std::string& stage, const std::string& pid) {
  std::vector<llm::CallLogEntry> entries;
  for (const auto& t : tag_stages(stage)) {
    auto part = gw.log({{"patient_id", pid}, {"stage", t}});
    entries.insert(entries.end(), part.begin(), part.end());
  }
  write_entries(out / "logs" / stage / (pid + ".jsonl"), entries);
}

std::string backend_fingerprint(const PipelineConfig& cfg) {
  Digest d;
  d.add(cfg.backend.kind);
  if (cfg.backend.kind == "scripted") d.add(text::read_file(cfg.backend.scenario.string()));
  if (cfg.backend.kind == "openai") d.add(cfg.backend.remote.base_url).add(cfg.backend.remote.model);
  return d.hex();
}

// Input-addressed stage cache under out_dir/.cache/<stage>/<patient>.key.
class StageCache {
 public:
  explicit StageCache(fs::path out) : out_(std::move(out)) {}

  bool hit(const std::string& stage, const std::string& patient, const std::string& key,
           const std::vector<std::string>& outputs) const {
    const auto file = key_file(stage, patient);
    if (!fs::exists(file) || text::read_file(file.string()) != key) return false;
    return std::all_of(outputs.begin(), outputs.end(), [&](const std::string& o) { return fs::exists(out_ / o); });
  }

  void store(const std::string& stage, const std::string& patient, const std::string& key) const {
    const auto file = key_file(stage, patient);
    fs::create_directories(file.parent_path());
    text::write_file(file.string(), key);
  }

  void drop(const std::string& stage, const std::string& patient) const {
    std::error_code ec;
    fs::remove(key_file(stage, patient), ec);
  }

 private:
  fs::path key_file(const std::string& stage, const std::string& patient) const {
    return out_ / ".cache" / stage / ((patient.empty() ? std::string("run") : patient) + ".key");
  }
  fs::path out_;
};

StageRecord finish(const fs::path& out, StageRecord rec, const std::vector<std::string>& outputs) {
  for (const auto& o : outputs) rec.outputs.emplace_back(o, file_digest(out / o));
  return rec;
}

json schema_index() {
  return {{"applicability", generator::applicability_schema().to_json()},
          {"generation", generator::generation_schema().to_json()},
          {"detection_strict", detector::detection_schema(structured::SchemaMode::Strict).to_json()},
          {"detection_lenient", detector::detection_schema(structured::SchemaMode::Lenient).to_json()},
          {"extraction", graph::extraction_schema().to_json()}};
}

json asset_versions() {
  json prompts_json = json::object();
  for (const char* name : {"extract", "summarize", "applicability", "generate", "detect"}) {
    prompts_json[name] = prompts::version_of(name);
  }
  return {{"prompts", prompts_json},
          {"repair_ruleset", structured::kRepairRulesetVersion},
          {"normalization", graph::NormalizationConfig::defaults().version},
          {"plausibility", json::parse(assets::get("plausibility.json")).value("version", "")},
          {"vocabulary", json::parse(assets::get("vocabulary.json")).value("version", "")},
          {"graph_schema", graph::kGraphSchemaVersion},
          {"sample_schema", generator::kSampleSchemaVersion},
          {"detection_schema", detector::kDetectionSchemaVersion},
          {"schemas",
           {{"applicability", generator::applicability_schema().version},
            {"generation", generator::generation_schema().version},
            {"detection", detector::detection_schema(structured::SchemaMode::Strict).version}}}};
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json stage_json(const StageRecord& r) {
  json outputs = json::array();
  for (const auto& [path, digest] : r.outputs) outputs.push_back({{"path", path}, {"digest", digest}});
  json j = {{"stage", r.stage}, {"patient_id", r.patient_id}, {"key", r.key}, {"outputs", outputs}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

json detection_output(const detector::DetectionResult& r) {
  json types = json::array();
  for (auto t : r.htypes) types.push_back(std::string(to_string(t)));
  return {{"reasoning", r.reasoning},
          {"hallucination_status", r.hallucination_status},
          {"hallucination_type", types},
          {"conflict", r.signals.conflict},
          {"support", r.signals.support},
          {"explicit", r.signals.explicit_},
          {"evidence_grade", std::string(to_string(r.self_grade))}};
}

}  // namespace

std::string Partitions::of(const std::string& patient_id) const {
  const auto n = ehr::patient_number(patient_id);
  if (!n) return "";
  if (train.contains(*n)) return "train";
  if (validation.contains(*n)) return "validation";
  if (test.contains(*n)) return "test";
  return "";
}

void Partitions::check_disjoint() const {
  const std::pair<const char*, const Range*> all[] = {{"train", &train}, {"validation", &validation}, {"test", &test}};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      const auto& a = *all[i].second;
      const auto& b = *all[j].second;
      if (!a.empty() && !b.empty() && a.lo <= b.hi && b.lo <= a.hi) {
        fail(ErrorKind::Config, std::string("partitions '") + all[i].first + "' and '" + all[j].first +
                                    "' overlap: patient-level partitions must be disjoint");
      }
    }
  }
}

std::shared_ptr<llm::Backend> make_backend(const BackendConfig& cfg) {
  if (cfg.kind == "rules") return std::make_shared<mock::RuleBasedBackend>();
  if (cfg.kind == "scripted") return llm::ScriptedMock::from_file(cfg.scenario);
  if (cfg.kind == "openai") return std::make_shared<llm::OpenAiBackend>(cfg.remote);
  fail(ErrorKind::Config, "unknown backend kind '" + cfg.kind + "' (rules, scripted, openai)");
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  static const std::set<std::string> known = {
      "data_root", "out_dir", "patients", "partitions", "evaluate_partitions", "ratio", "generation_seed",
      "community_seed", "regeneration_attempts", "tau_s", "k", "retries", "workers", "extract_with_llm",
      "summarize_with_llm", "schema_mode", "backend", "baseline_f1"};
  if (!j.is_object()) fail(ErrorKind::Config, "pipeline config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) fail(ErrorKind::Config, "unknown config key '" + key + "'");
  }
  PipelineConfig c;
  try {
    c.data_root = resolve(j.at("data_root").get<std::string>(), base_dir);
    c.out_dir = resolve(j.at("out_dir").get<std::string>(), base_dir);
    c.patients = j.value("patients", std::vector<std::string>{});
    if (j.contains("partitions")) {
      const auto& p = j.at("partitions");
      for (const auto& [key, _] : p.items()) {
        if (key != "train" && key != "validation" && key != "test") fail(ErrorKind::Config, "unknown partition '" + key + "'");
      }
      if (p.contains("train")) c.partitions.train = range_from(p.at("train"), "train");
      if (p.contains("validation")) c.partitions.validation = range_from(p.at("validation"), "validation");
      if (p.contains("test")) c.partitions.test = range_from(p.at("test"), "test");
    }
    c.evaluate_partitions = j.value("evaluate_partitions", c.evaluate_partitions);
    c.ratio = j.value("ratio", c.ratio);
    c.generation_seed = j.value("generation_seed", c.generation_seed);
    c.community_seed = j.value("community_seed", c.community_seed);
    c.regeneration_attempts = j.value("regeneration_attempts", c.regeneration_attempts);
    c.tau_s = j.value("tau_s", c.tau_s);
    c.k = j.value("k", c.k);
    c.retries = j.value("retries", c.retries);
    c.workers = j.value("workers", c.workers);
    c.extract_with_llm = j.value("extract_with_llm", c.extract_with_llm);
    c.summarize_with_llm = j.value("summarize_with_llm", c.summarize_with_llm);
    const auto mode = j.value("schema_mode", std::string("strict"));
    if (mode != "strict" && mode != "lenient") fail(ErrorKind::Config, "schema_mode must be strict or lenient");
    c.mode = mode == "strict" ? structured::SchemaMode::Strict : structured::SchemaMode::Lenient;
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      c.backend.kind = b.value("kind", c.backend.kind);
      if (b.contains("scenario")) c.backend.scenario = resolve(b.at("scenario").get<std::string>(), base_dir);
      if (b.contains("remote")) c.backend.remote = llm::RemoteConfig::from_json(b.at("remote"));
      c.backend.max_concurrent = b.value("max_concurrent", c.backend.max_concurrent);
    }
    c.baseline_f1 = j.value("baseline_f1", json::object());
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(text::read_file(path.string()));
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

void PipelineConfig::validate() const {
  partitions.check_disjoint();
  if (!(ratio > 0 && ratio <= 1)) fail(ErrorKind::Config, "ratio must be in (0, 1]");
  if (!(tau_s > 0 && tau_s < 1)) fail(ErrorKind::Config, "tau_s must be in (0, 1)");
  if (k < 1) fail(ErrorKind::Config, "k must be at least 1");
  if (retries < 1) fail(ErrorKind::Config, "retries must be at least 1");
  if (regeneration_attempts < 0) fail(ErrorKind::Config, "regeneration_attempts must be non-negative");
  if (out_dir.empty()) fail(ErrorKind::Config, "out_dir is required");
  if (!fs::is_directory(data_root)) fail(ErrorKind::Config, "data_root does not exist: " + data_root.string());
  if (backend.kind == "scripted" && !fs::is_regular_file(backend.scenario)) {
    fail(ErrorKind::Config, "scenario file does not exist: " + backend.scenario.string());
  }
  for (const auto& p : evaluate_partitions) {
    if (p != "train" && p != "validation" && p != "test") fail(ErrorKind::Config, "unknown partition '" + p + "'");
  }
}

json PipelineConfig::to_json() const {
  return {{"data_root", data_root.string()},
          {"patients", patients},
          {"partitions",
           {{"train", {partitions.train.lo, partitions.train.hi}},
            {"validation", {partitions.validation.lo, partitions.validation.hi}},
            {"test", {partitions.test.lo, partitions.test.hi}}}},
          {"evaluate_partitions", evaluate_partitions},
          {"ratio", ratio},
          {"generation_seed", generation_seed},
          {"community_seed", community_seed},
          {"regeneration_attempts", regeneration_attempts},
          {"tau_s", tau_s},
          {"k", k},
          {"retries", retries},
          {"extract_with_llm", extract_with_llm},
          {"summarize_with_llm", summarize_with_llm},
          {"schema_mode", mode == structured::SchemaMode::Strict ? "strict" : "lenient"},
          {"backend", {{"kind", backend.kind}, {"scenario", backend.scenario.filename().string()}}},
          {"baseline_f1", baseline_f1}};
}

graph::PatientGraph build_patient_graph(const ehr::PatientRecord& record, llm::Gateway* llm,
                                        const GraphBuildOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  auto g = graph::extract_raw_graph(record, llm, options.attempts);
  g.quality_before = graph::quality_report(g);
  graph::normalize(g);
  g.communities = community::detect_communities(g, options.seed, options.hierarchy);
  community::summarize_communities(g, options.summarize_with_llm ? llm : nullptr);
  g.quality = graph::quality_report(g);
  // mock and table-only builds keep files reproducible
  if (llm && !llm->deterministic()) {
    g.quality->build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return g;
}

std::size_t RunResult::count(const std::string& status) const {
  return static_cast<std::size_t>(
      std::count_if(stages.begin(), stages.end(), [&](const StageRecord& r) { return r.status == status; }));
}

RunResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const auto run_start = std::chrono::steady_clock::now();
  const std::string created_at = utc_now();

  std::vector<std::string> patients = cfg.patients.empty() ? ehr::list_patients(cfg.data_root) : cfg.patients;
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const StageCache cache(out);
  llm::Gateway gw(make_backend(cfg.backend), cfg.backend.max_concurrent);
  const std::string backend_fp = backend_fingerprint(cfg);
  const json versions = asset_versions();

  const json schemas = schema_index();  // items() only borrows
  for (const auto& [name, schema] : schemas.items()) write_json(out / "schemas" / (name + ".json"), schema);

  std::vector<std::vector<StageRecord>> per_patient(patients.size());
  std::vector<json> timings(patients.size(), json::object());

  generator::DocumentOptions gen_opts;
  gen_opts.ratio = cfg.ratio;
  gen_opts.seed = cfg.generation_seed;
  gen_opts.workers = cfg.workers;
  gen_opts.regeneration_attempts = cfg.regeneration_attempts;
  detector::DetectorConfig det_cfg;
  det_cfg.grading.tau_s = cfg.tau_s;
  det_cfg.k = cfg.k;
  det_cfg.retries = cfg.retries;
  det_cfg.workers = cfg.workers;
  det_cfg.mode = cfg.mode;
  GraphBuildOptions graph_opts;
  graph_opts.attempts = cfg.retries;
  graph_opts.seed = cfg.community_seed;
  graph_opts.summarize_with_llm = cfg.summarize_with_llm;

  parallel_for(patients.size(), gw.workers(cfg.workers), [&](std::size_t pi) {
    const std::string& pid = patients[pi];
    auto& records = per_patient[pi];
    auto timed = [&](const std::string& stage, auto&& fn) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      timings[pi][stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto failed = [&](StageRecord rec, const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      cache.drop(rec.stage, pid);
      write_stage_log(out, gw, rec.stage, pid);
      records.push_back(rec);
    };
    auto block_rest = [&](std::initializer_list<const char*> stages) {
      for (const char* s : stages) records.push_back({s, pid, "", "blocked", {}, ""});
    };

    // ingest
    ehr::PatientRecord record;
    StageRecord ingest{"ingest", pid, "", "", {}, ""};
    try {
      Digest d;
      d.add("ingest/1").add(pid);
      for (const char* f : {ehr::kDiagnosisFile, ehr::kDischargeFile, ehr::kTargetFile, ehr::kEdStaysFile,
                            ehr::kRadiologyFile, ehr::kTriageFile, ehr::kMedicationsFile, ehr::kLabsFile}) {
        const auto p = cfg.data_root / f;
        d.add(f).add(fs::exists(p) ? text::read_file(p.string()) : std::string("<absent>"));
      }
      ingest.key = d.hex();
      record = ehr::load_bundle(cfg.data_root, pid);
      const std::vector<std::string> outputs = {"records/" + pid + ".json"};
      if (cache.hit("ingest", pid, ingest.key, outputs)) {
        ingest.status = "cached";
      } else {
        timed("ingest", [&] {
          json j = ehr::to_json(record);
          json warnings = json::array();
          for (const auto& w : ehr::validate_bundle(record)) {
            warnings.push_back({{"kind", std::string(ehr::to_string(w.kind))}, {"field", w.field}, {"message", w.message}});
          }
          write_json(out / outputs[0], {{"record", j}, {"warnings", warnings}, {"partition", cfg.partitions.of(pid)}});
        });
        cache.store("ingest", pid, ingest.key);
        ingest.status = "ran";
      }
      records.push_back(finish(out, ingest, outputs));
    } catch (const std::exception& e) {
      failed(ingest, e);
      block_rest({"graph", "generate", "detect"});
      return;
    }

    // graph
    graph::PatientGraph g;
    StageRecord graph_rec{"graph", pid, "", "", {}, ""};
    const std::string graph_file = "graphs/" + pid + ".json";
    try {
      graph_rec.key = Digest()
                          .add("graph/1")
                          .add(ingest.key)
                          .add(backend_fp)
                          .add(cfg.extract_with_llm ? "llm" : "tables")
                          .add(cfg.summarize_with_llm ? "llm-summary" : "extractive")
                          .add(std::to_string(cfg.community_seed))
                          .add(std::to_string(cfg.retries))
                          .add(versions.dump())
                          .hex();
      const std::vector<std::string> outputs = {graph_file, "logs/graph/" + pid + ".jsonl"};
      if (cache.hit("graph", pid, graph_rec.key, outputs)) {
        g = graph::load((out / graph_file).string());
        graph_rec.status = "cached";
      } else {
        timed("graph", [&] {
          g = build_patient_graph(record, cfg.extract_with_llm ? &gw : nullptr, graph_opts);
          fs::create_directories(out / "graphs");
          graph::save(g, (out / graph_file).string());
          write_stage_log(out, gw, "graph", pid);
        });
        cache.store("graph", pid, graph_rec.key);
        graph_rec.status = "ran";
      }
      records.push_back(finish(out, graph_rec, outputs));
    } catch (const std::exception& e) {
      failed(graph_rec, e);
      block_rest({"generate", "detect"});
      return;
    }

    // generate
    std::string rewritten;
    StageRecord gen_rec{"generate", pid, "", "", {}, ""};
    try {
      gen_rec.key = Digest()
                        .add("generate/1")
                        .add(ingest.key)
                        .add(backend_fp)
                        .add(text::format_double(cfg.ratio))
                        .add(std::to_string(cfg.generation_seed))
                        .add(std::to_string(cfg.regeneration_attempts))
                        .add(std::to_string(cfg.retries))
                        .add(versions.dump())
                        .hex();
      const std::vector<std::string> outputs = {"samples/" + pid + ".json", "rewritten/" + pid + ".txt",
                                                "logs/generate/" + pid + ".jsonl"};
      if (cache.hit("generate", pid, gen_rec.key, outputs)) {
        rewritten = text::read_file((out / outputs[1]).string());
        gen_rec.status = "cached";
      } else {
        timed("generate", [&] {
          auto opts = gen_opts;
          opts.generation.attempts = cfg.retries;
          const auto run = generator::generate_for_document(record, gw, opts);
          rewritten = run.rewrite.text;
          write_json(out / outputs[0], generator::samples_document(run));
          fs::create_directories(out / "rewritten");
          text::write_file((out / outputs[1]).string(), rewritten);
          write_stage_log(out, gw, "generate", pid);
        });
        cache.store("generate", pid, gen_rec.key);
        gen_rec.status = "ran";
      }
      records.push_back(finish(out, gen_rec, outputs));
    } catch (const std::exception& e) {
      failed(gen_rec, e);
      block_rest({"detect"});
      return;
    }

    // detect
    StageRecord det_rec{"detect", pid, "", "", {}, ""};
    try {
      det_rec.key = Digest()
                        .add("detect/1")
                        .add(file_digest(out / graph_file))
                        .add(Digest().add(rewritten).hex())
                        .add(backend_fp)
                        .add(text::format_double(cfg.tau_s))
                        .add(std::to_string(cfg.k))
                        .add(std::to_string(cfg.retries))
                        .add(cfg.mode == structured::SchemaMode::Strict ? "strict" : "lenient")
                        .add(versions.dump())
                        .hex();
      const std::vector<std::string> outputs = {"detections/" + pid + ".json", "logs/detect/" + pid + ".jsonl"};
      if (cache.hit("detect", pid, det_rec.key, outputs)) {
        det_rec.status = "cached";
      } else {
        timed("detect", [&] {
          const auto results = detector::detect_document(pid, rewritten, g, gw, det_cfg);
          write_json(out / outputs[0],
                     detector::detections_document(pid, results, detector::run_metadata(gw, det_cfg)));
          write_stage_log(out, gw, "detect", pid);
        });
        cache.store("detect", pid, det_rec.key);
        det_rec.status = "ran";
      }
      records.push_back(finish(out, det_rec, outputs));
    } catch (const std::exception& e) {
      failed(det_rec, e);
    }
  });

  RunResult result;
  result.out_dir = out;
  for (auto& recs : per_patient) {
    for (auto& r : recs) result.stages.push_back(std::move(r));
  }
  auto detected = [&](const std::string& pid) {
    return std::any_of(result.stages.begin(), result.stages.end(), [&](const StageRecord& r) {
      return r.patient_id == pid && r.stage == "detect" && (r.status == "ran" || r.status == "cached");
    });
  };

  // evaluate
  {
    StageRecord rec{"evaluate", "", "", "", {}, ""};
    try {
      evaluation::EvaluationInput input;
      Digest d;
      d.add("evaluate/1").add(cfg.baseline_f1.dump());
      std::vector<std::string> evaluated;
      for (const auto& pid : patients) {
        const auto part = cfg.partitions.of(pid);
        if (std::find(cfg.evaluate_partitions.begin(), cfg.evaluate_partitions.end(), part) ==
                cfg.evaluate_partitions.end() ||
            !detected(pid)) {
          continue;
        }
        evaluated.push_back(pid);
        const auto samples = out / "samples" / (pid + ".json");
        const auto detections = out / "detections" / (pid + ".json");
        d.add(pid).add(file_digest(samples)).add(file_digest(detections));
        auto gold = evaluation::load_gold(samples, &input.record_chars);
        auto preds = evaluation::load_predictions(detections);
        // origins relative to the run directory keep reports path-independent
        for (auto& x : gold) x.origin = "samples/" + pid + ".json" + x.origin.substr(x.origin.find('#'));
        for (auto& x : preds) x.origin = "detections/" + pid + ".json" + x.origin.substr(x.origin.find('#'));
        input.gold.insert(input.gold.end(), gold.begin(), gold.end());
        input.predictions.insert(input.predictions.end(), preds.begin(), preds.end());
      }
      rec.key = d.hex();
      const std::vector<std::string> outputs = {"report/metrics.csv", "report/gains.csv", "report/correlations.csv",
                                                "report/summary.json"};
      if (cache.hit("evaluate", "", rec.key, outputs)) {
        rec.status = "cached";
      } else {
        input.metadata = {{"patients", evaluated},
                          {"partitions", cfg.evaluate_partitions},
                          {"backend", gw.backend().id()},
                          {"tau_s", cfg.tau_s},
                          {"k", cfg.k},
                          {"retries", cfg.retries},
                          {"ratio", cfg.ratio},
                          {"generation_seed", cfg.generation_seed}};
        if (!cfg.baseline_f1.empty()) input.metadata["baseline_f1"] = cfg.baseline_f1;
        evaluation::emit_report(evaluation::evaluate(input), out / "report");
        cache.store("evaluate", "", rec.key);
        rec.status = "ran";
      }
      result.stages.push_back(finish(out, rec, outputs));
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      cache.drop("evaluate", "");
      result.stages.push_back(rec);
    }
  }

  // distillation export (training partition only)
  {
    StageRecord rec{"export", "", "", "", {}, ""};
    try {
      Digest d;
      d.add("export/1");
      std::vector<llm::CallLogEntry> logs;
      std::vector<llm::DistillationItem> items;
      for (const auto& pid : patients) {
        if (cfg.partitions.of(pid) != "train" || !detected(pid)) continue;
        const auto detections = out / "detections" / (pid + ".json");
        const auto log_file = out / "logs" / "detect" / (pid + ".jsonl");
        d.add(pid).add(file_digest(detections)).add(file_digest(log_file));
        auto entries = llm::read_log(log_file);
        logs.insert(logs.end(), entries.begin(), entries.end());
        for (const auto& r : detector::load_detections(detections.string())) {
          items.push_back({r.patient_id, r.sentence_index, r.request_digest, detection_output(r), r.reasoning,
                           r.status == detector::ResultStatus::Flagged, r.status == detector::ResultStatus::Failed});
        }
      }
      rec.key = d.hex();
      const std::vector<std::string> outputs = {"training/distillation.jsonl", "training/summary.json"};
      if (cache.hit("export", "", rec.key, outputs)) {
        rec.status = "cached";
      } else {
        const auto s = llm::export_distillation(logs, items, out / outputs[0]);
        write_json(out / outputs[1], {{"written", s.written},
                                      {"excluded_flagged", s.excluded_flagged},
                                      {"excluded_failed", s.excluded_failed},
                                      {"missing_log", s.missing_log}});
        cache.store("export", "", rec.key);
        rec.status = "ran";
      }
      result.stages.push_back(finish(out, rec, outputs));
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      cache.drop("export", "");
      result.stages.push_back(rec);
    }
  }

  // manifest
  json stages = json::array();
  json status = json::array();
  for (const auto& r : result.stages) {
    stages.push_back(stage_json(r));
    status.push_back({{"stage", r.stage}, {"patient_id", r.patient_id}, {"status", r.status}});
  }
  json patient_list = json::array();
  for (const auto& pid : patients) patient_list.push_back({{"patient_id", pid}, {"partition", cfg.partitions.of(pid)}});
  json manifest = {{"schema_version", kManifestVersion},
                   {"config", cfg.to_json()},
                   {"backend", gw.backend().id()},
                   {"assets", versions},
                   {"patients", patient_list},
                   {"stages", stages}};
  result.manifest_digest = Digest().add(manifest.dump()).hex();
  manifest["manifest_digest"] = result.manifest_digest;
  json timing = json::object();
  for (std::size_t i = 0; i < patients.size(); ++i) timing[patients[i]] = timings[i];
  manifest["run"] = {{"created_at", created_at},
                     {"elapsed_seconds",
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count()},
                     {"status", status},
                     {"timings", timing}};
  write_json(out / "manifest.json", manifest);
  result.manifest = manifest;

  // nonzero only when a stage produced nothing usable at all
  for (const char* stage : {"ingest", "graph", "generate", "detect", "evaluate"}) {
    bool any = false, present = false;
    for (const auto& r : result.stages) {
      if (r.stage != stage) continue;
      present = true;
      any = any || r.status == "ran" || r.status == "cached";
    }
    if (present && !any) result.exit_code = 1;
  }
  if (patients.empty()) result.exit_code = 1;
  return result;
}

}  // namespace faithcheck::pipeline
