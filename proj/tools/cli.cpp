#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "faithcheck/detector.hpp"
#include "faithcheck/ehr.hpp"
#include "faithcheck/error.hpp"
#include "faithcheck/evaluation.hpp"
#include "faithcheck/generator.hpp"
#include "faithcheck/graph.hpp"
#include "faithcheck/pipeline.hpp"
#include "faithcheck/retrieval.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct BackendFlags {
  std::string kind = "rules";
  std::string scenario;
  std::string remote;  // JSON file with RemoteConfig fields
  std::string log;     // optional JSONL call log

  void attach(CLI::App* cmd) {
    cmd->add_option("--backend", kind, "rules | scripted | openai")->check(CLI::IsMember({"rules", "scripted", "openai"}));
    cmd->add_option("--scenario", scenario, "scripted mock scenario (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--remote", remote, "remote endpoint config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--log", log, "write the call log here (JSONL)");
  }

  llm::Gateway gateway() const {
    pipeline::BackendConfig cfg;
    cfg.kind = kind;
    cfg.scenario = scenario;
    if (kind == "scripted" && scenario.empty()) fail(ErrorKind::Config, "--backend scripted needs --scenario");
    if (!remote.empty()) cfg.remote = llm::RemoteConfig::from_json(json::parse(text::read_file(remote)));
    return llm::Gateway(pipeline::make_backend(cfg), cfg.max_concurrent);
  }

  void finish(const llm::Gateway& gw) const {
    if (!log.empty()) gw.write_log(log);
  }
};

void write_json(const std::string& path, const json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  text::write_file(path, j.dump(2) + "\n");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Patient-grounded faithfulness checking for discharge summaries", "faithcheck"};
  app.require_subcommand(1);
  std::function<int()> action;

  // fixture
  ehr::FixtureOptions fixture_opts;
  std::string fixture_out;
  auto* fixture = app.add_subcommand("fixture", "write a synthetic record bundle");
  fixture->add_option("--seed", fixture_opts.seed);
  fixture->add_option("--patients", fixture_opts.n_patients)->check(CLI::PositiveNumber);
  fixture->add_option("--first", fixture_opts.first_index, "index of the first patient id")->check(CLI::PositiveNumber);
  fixture->add_option("--out", fixture_out)->required();
  fixture->callback([&] {
    action = [&] {
      ehr::generate_fixture(fixture_opts, fixture_out);
      out << "wrote " << fixture_opts.n_patients << " patients to " << fixture_out << "\n";
      return kExitOk;
    };
  });

  // ingest
  std::string ingest_root, ingest_patient, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "load and validate one patient");
  ingest->add_option("--root", ingest_root)->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--patient", ingest_patient)->required();
  ingest->add_option("--out", ingest_out, "write the record here instead of stdout");
  ingest->callback([&] {
    action = [&] {
      const auto record = ehr::load_bundle(ingest_root, ingest_patient);
      json warnings = json::array();
      for (const auto& w : ehr::validate_bundle(record)) {
        warnings.push_back({{"kind", std::string(ehr::to_string(w.kind))}, {"field", w.field}, {"message", w.message}});
        err << "warning: " << ehr::to_string(w.kind) << " " << w.field << ": " << w.message << "\n";
      }
      const json doc = {{"record", ehr::to_json(record)}, {"warnings", warnings}};
      if (ingest_out.empty()) {
        out << doc.dump(2) << "\n";
      } else {
        write_json(ingest_out, doc);
      }
      return kExitOk;
    };
  });

  // build-graph
  std::string bg_root, bg_patient, bg_out;
  bool bg_no_llm = false, bg_llm_summaries = false;
  std::uint64_t bg_seed = 11;
  BackendFlags bg_backend;
  auto* build = app.add_subcommand("build-graph", "build the normalized patient graph");
  build->add_option("--root", bg_root)->required()->check(CLI::ExistingDirectory);
  build->add_option("--patient", bg_patient)->required();
  build->add_option("--out", bg_out)->required();
  build->add_flag("--no-llm", bg_no_llm, "table entities only, no free-text extraction");
  build->add_flag("--llm-summaries", bg_llm_summaries, "summarize communities with the model");
  build->add_option("--seed", bg_seed, "community detection seed");
  bg_backend.attach(build);
  build->callback([&] {
    action = [&] {
      const auto record = ehr::load_bundle(bg_root, bg_patient);
      auto gw = bg_backend.gateway();
      pipeline::GraphBuildOptions opts;
      opts.seed = bg_seed;
      opts.summarize_with_llm = bg_llm_summaries && !bg_no_llm;
      const auto g = pipeline::build_patient_graph(record, bg_no_llm ? nullptr : &gw, opts);
      if (fs::path(bg_out).has_parent_path()) fs::create_directories(fs::path(bg_out).parent_path());
      graph::save(g, bg_out);
      bg_backend.finish(gw);
      const auto& q = *g.quality;
      out << g.patient_id << ": " << q.total_entities << " entities, " << q.connected_components << " component(s), "
          << g.communities.size() << " communities\n";
      return kExitOk;
    };
  });

  // generate
  std::string gen_root, gen_patient, gen_out, gen_rewritten;
  generator::DocumentOptions gen_opts;
  BackendFlags gen_backend;
  auto* gen = app.add_subcommand("generate", "inject labeled hallucinations into one discharge note");
  gen->add_option("--root", gen_root)->required()->check(CLI::ExistingDirectory);
  gen->add_option("--patient", gen_patient)->required();
  gen->add_option("--ratio", gen_opts.ratio)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", gen_opts.seed);
  gen->add_option("--regenerate", gen_opts.regeneration_attempts, "regeneration attempts per target");
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--rewritten", gen_rewritten, "rewritten document path (default: <out>.txt)");
  gen_backend.attach(gen);
  gen->callback([&] {
    action = [&] {
      const auto record = ehr::load_bundle(gen_root, gen_patient);
      auto gw = gen_backend.gateway();
      const auto run = generator::generate_for_document(record, gw, gen_opts);
      write_json(gen_out, generator::samples_document(run));
      const auto rewritten = gen_rewritten.empty() ? fs::path(gen_out).replace_extension(".txt").string() : gen_rewritten;
      text::write_file(rewritten, run.rewrite.text);
      gen_backend.finish(gw);
      out << run.patient_id << ": " << run.samples.size() << " samples, " << run.rejected.size() << " rejected, "
          << run.targets.size() << " targets\n";
      return kExitOk;
    };
  });

  // detect
  std::string det_graph, det_doc, det_out, det_mode = "strict";
  detector::DetectorConfig det_cfg;
  BackendFlags det_backend;
  auto* det = app.add_subcommand("detect", "grade every sentence of a document against a patient graph");
  det->add_option("--graph", det_graph)->required()->check(CLI::ExistingFile);
  det->add_option("--doc", det_doc)->required()->check(CLI::ExistingFile);
  det->add_option("--out", det_out)->required();
  det->add_option("--tau", det_cfg.grading.tau_s)->check(CLI::Range(0.0, 1.0));
  det->add_option("--k", det_cfg.k)->check(CLI::PositiveNumber);
  det->add_option("--retries", det_cfg.retries)->check(CLI::PositiveNumber);
  det->add_option("--schema-mode", det_mode)->check(CLI::IsMember({"strict", "lenient"}));
  det_backend.attach(det);
  det->callback([&] {
    action = [&] {
      det_cfg.mode = det_mode == "strict" ? structured::SchemaMode::Strict : structured::SchemaMode::Lenient;
      const auto g = graph::load(det_graph);
      auto gw = det_backend.gateway();
      const auto results = detector::detect_document(g.patient_id, text::read_file(det_doc), g, gw, det_cfg);
      write_json(det_out, detector::detections_document(g.patient_id, results, detector::run_metadata(gw, det_cfg)));
      det_backend.finish(gw);
      std::size_t positives = 0, flagged = 0, failed = 0;
      for (const auto& r : results) {
        positives += r.hallucination_status;
        flagged += r.status == detector::ResultStatus::Flagged;
        failed += r.status == detector::ResultStatus::Failed;
      }
      out << g.patient_id << ": " << results.size() << " sentences, " << positives << " flagged as hallucinated, "
          << flagged << " inconsistent, " << failed << " failed\n";
      return kExitOk;
    };
  });

  // evaluate
  std::string ev_gold, ev_pred, ev_out;
  std::string ev_baseline;
  auto* ev = app.add_subcommand("evaluate", "stratified metrics over samples and detections");
  ev->add_option("--gold", ev_gold, "samples file or directory")->required()->check(CLI::ExistingPath);
  ev->add_option("--pred", ev_pred, "detections file or directory")->required()->check(CLI::ExistingPath);
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--baseline", ev_baseline, "JSON object: stratum -> base F1")->check(CLI::ExistingFile);
  ev->callback([&] {
    action = [&] {
      evaluation::EvaluationInput input;
      input.gold = evaluation::load_gold(ev_gold, &input.record_chars);
      input.predictions = evaluation::load_predictions(ev_pred);
      if (!ev_baseline.empty()) input.metadata["baseline_f1"] = json::parse(text::read_file(ev_baseline));
      const auto report = evaluation::evaluate(input);
      evaluation::emit_report(report, ev_out);
      for (const auto& row : report.metrics) {
        out << row.stratum << " P=" << text::format_fixed(row.metrics.precision, 3) << " R=" << text::format_fixed(row.metrics.recall, 3)
            << " F1=" << text::format_fixed(row.metrics.f1, 3) << (row.metrics.degenerate ? " (degenerate)" : "") << "\n";
      }
      return kExitOk;
    };
  });

  // retrieve
  std::string rt_graph, rt_sentence;
  int rt_k = 20;
  auto* rt = app.add_subcommand("retrieve", "print the evidence context for one sentence");
  rt->add_option("--graph", rt_graph)->required()->check(CLI::ExistingFile);
  rt->add_option("--sentence", rt_sentence)->required();
  rt->add_option("--k", rt_k)->check(CLI::PositiveNumber);
  rt->callback([&] {
    action = [&] {
      const auto g = graph::load(rt_graph);
      const auto ctx = retrieval::retrieve_context(rt_sentence, 0, g, rt_k);
      out << ctx.rendered_text;
      if (!ctx.rendered_text.empty() && ctx.rendered_text.back() != '\n') out << "\n";
      if (ctx.truncated) err << "note: context truncated to the character budget\n";
      return kExitOk;
    };
  });

  // pipeline
  std::string pl_config;
  auto* pl = app.add_subcommand("pipeline", "run every stage from one config file");
  pl->add_option("--config", pl_config)->required()->check(CLI::ExistingFile);
  pl->callback([&] {
    action = [&] {
      const auto result = pipeline::run_pipeline(pipeline::PipelineConfig::load(pl_config));
      out << "run " << result.out_dir.string() << ": " << result.count("ran") << " ran, " << result.count("cached")
          << " cached, " << result.count("failed") << " failed, " << result.count("blocked") << " blocked\n";
      out << "manifest digest " << result.manifest_digest << "\n";
      for (const auto& s : result.stages) {
        if (s.status == "failed") err << "failed: " << s.stage << " " << s.patient_id << ": " << s.error << "\n";
      }
      return result.exit_code;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace faithcheck::cli
