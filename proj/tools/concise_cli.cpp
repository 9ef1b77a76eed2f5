// concise: command-line driver for chain construction, decoding, annotation,
// metrics and the two calibration experiments.
//
//   concise build-dataset   --config run.json [--out DIR]
//   concise decode          --config run.json
//   concise annotate        --config run.json [--method rule|judge]
//   concise metrics         --config run.json [--baseline FILE] [--annotations FILE]
//   concise phrase-eval     --config run.json
//   concise sweep-threshold --config run.json [--thresholds 0.4,0.5]
//
// Every artifact lands under --out in chains/, datasets/ or reports/. On
// failure a one-line JSON error summary goes to stderr and the exit status is
// nonzero (2 for configuration problems, 1 otherwise).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "concise/concise.hpp"

namespace fs = std::filesystem;
using namespace concise;

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> backend_url;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  std::optional<double> t_e;
  std::optional<std::size_t> max_steps;
  std::optional<std::string> out;
  std::optional<std::string> input;

  // command specific
  std::optional<std::string> method;
  std::optional<std::string> baseline;
  std::optional<std::string> annotations;
  std::vector<double> thresholds;
};

struct Layout {
  fs::path root;
  fs::path chains() const { return root / "chains"; }
  fs::path datasets() const { return root / "datasets"; }
  fs::path reports() const { return root / "reports"; }
};

// Rethrows with the task id in front so failures name their task.
[[noreturn]] void rethrow_for_task(const std::string& id, const Error& e) {
  throw Error(e.code(), "task " + id + ": " + e.what());
}

GlobalConfig resolve(const Flags& f) {
  GlobalConfig cfg = f.config.empty() ? GlobalConfig{} : load_config(f.config);
  if (f.backend_url) cfg.backend.http.base_url = *f.backend_url;
  if (f.seed) cfg.pipeline.seed = *f.seed;
  if (f.parallelism) cfg.parallelism = *f.parallelism;
  if (f.t_e) cfg.pipeline.detector.threshold = *f.t_e;
  if (f.max_steps) cfg.pipeline.max_steps = *f.max_steps;
  if (f.out) cfg.out = *f.out;
  if (f.method) cfg.annotate_method = *f.method;
  if (f.baseline) cfg.metrics_baseline = *f.baseline;
  if (f.annotations) cfg.metrics_annotations = *f.annotations;
  if (!f.thresholds.empty()) cfg.sweep_thresholds = f.thresholds;
  validate_config(cfg);
  return cfg;
}

fs::path require_file(const fs::path& configured, const std::optional<std::string>& flag,
                      const fs::path& fallback, const char* what) {
  fs::path p = flag ? fs::path(*flag) : (configured.empty() ? fallback : configured);
  if (p.empty()) throw ConfigInvalid(std::string("no ") + what + " path configured");
  if (!fs::is_regular_file(p)) throw ConfigInvalid(std::string(what) + " file not found: " + p.string());
  return p;
}

std::vector<Task> load_tasks(const GlobalConfig& cfg, const Flags& f) {
  const fs::path path = require_file(cfg.tasks, f.input, {}, "task corpus");
  auto tasks = read_jsonl<Task>(path);
  check_unique_ids(tasks);
  return tasks;
}

Json build_dataset(const GlobalConfig& cfg, const Flags& f) {
  const auto tasks = load_tasks(cfg, f);
  for (const auto& t : tasks) {
    if (!t.ground_truth) throw SchemaMismatch("task " + t.id + ": build-dataset needs 'ground_truth'");
  }
  const auto backend = make_backend(cfg.backend);
  const bool with_preference = cfg.sampling.n > 0;

  auto runs = parallel_map(tasks, cfg.parallelism, [&](const Task& task) {
    TaskRun run;
    try {
      run.outcome = build_concise_chain(task, cfg.pipeline, *backend);
      if (with_preference && run.outcome.status == BuildStatus::emitted) {
        run.samples = sample_plain_chains(task, cfg.sampling.n, cfg.sampling.temperature, cfg.pipeline, *backend);
      }
    } catch (const Error& e) {
      rethrow_for_task(task.id, e);
    }
    return run;
  });

  const DatasetBundle bundle = build_datasets(runs, cfg.pipeline.tmpl, with_preference);

  std::vector<ReasoningChain> chains;
  std::vector<ManifestRow> manifest;
  std::vector<ReasoningChain> baseline;
  std::vector<ProbeTrace> traces;
  for (const auto& run : runs) {
    chains.push_back(run.outcome.chain);
    manifest.push_back(manifest_row(run.outcome));
    if (!run.samples.empty() && !run.samples.front().error) baseline.push_back(run.samples.front().chain);
    if (run.outcome.status != BuildStatus::emitted || run.outcome.probes.empty()) continue;
    try {
      const auto ann = annotate_rule_based(run.outcome.chain, cfg.pipeline.keywords);
      ProbeTrace tr{run.outcome.chain.task.id, {}, ann.fas_index};
      for (const auto& p : run.outcome.probes) tr.probes.push_back(p.value);
      traces.push_back(std::move(tr));
    } catch (const FasUnknown&) {
    }
  }

  const Layout out{cfg.out};
  write_jsonl(out.chains() / "concise.jsonl", chains);
  write_jsonl(out.chains() / "manifest.jsonl", manifest);
  write_jsonl(out.datasets() / "sft.jsonl", bundle.sft);
  if (with_preference) {
    write_jsonl(out.datasets() / "preference.jsonl", bundle.preference);
    write_jsonl(out.chains() / "baseline.jsonl", baseline);
  }
  write_jsonl(out.reports() / "probe_traces.jsonl", traces);
  const Json report = to_json(bundle.report);
  write_text(out.reports() / "build_report.json", report.dump(2) + "\n");
  return report;
}

Json decode(const GlobalConfig& cfg, const Flags& f) {
  const auto tasks = load_tasks(cfg, f);
  const auto backend = make_backend(cfg.backend);
  auto outcomes = parallel_map(tasks, cfg.parallelism, [&](const Task& task) {
    try {
      return concise_decode(task, cfg.pipeline, *backend);
    } catch (const Error& e) {
      rethrow_for_task(task.id, e);
    }
  });
  std::vector<ReasoningChain> chains;
  std::vector<ManifestRow> manifest;
  std::size_t early = 0;
  for (const auto& o : outcomes) {
    chains.push_back(o.chain);
    manifest.push_back(manifest_row(o));
    early += o.chain.terminated == Termination::early_stopped ? 1 : 0;
  }
  const Layout out{cfg.out};
  write_jsonl(out.chains() / "decoded.jsonl", chains);
  write_jsonl(out.chains() / "decode_manifest.jsonl", manifest);
  return Json{{"tasks", tasks.size()}, {"early_stopped", early}};
}

Json annotate(const GlobalConfig& cfg, const Flags& f) {
  const Layout out{cfg.out};
  const fs::path path = require_file(cfg.annotate_chains, f.input, out.chains() / "concise.jsonl", "chain corpus");
  const auto chains = read_jsonl<ReasoningChain>(path);

  std::unique_ptr<Backend> judge;
  if (cfg.annotate_method == "judge") judge = make_backend(cfg.judge_backend.value_or(cfg.backend));

  struct Annotated {
    std::optional<AnnotationRecord> record;
    std::vector<std::string> warnings;
  };
  auto results = parallel_map(chains, cfg.parallelism, [&](const ReasoningChain& chain) {
    Annotated a;
    if (chain.terminated == Termination::discarded || chain.steps.empty()) return a;
    try {
      if (judge) {
        JudgeResult r = annotate_with_judge(chain, cfg.judge, *judge);
        a.record = AnnotationRecord{chain.task.id, r.annotation, "judge", r.unreliable};
        for (auto& w : r.warnings) a.warnings.push_back(chain.task.id + ": " + w);
      } else {
        a.record = AnnotationRecord{chain.task.id, annotate_rule_based(chain, cfg.pipeline.keywords), "rule", false};
      }
    } catch (const FasUnknown& e) {
      a.warnings.push_back(chain.task.id + ": " + e.what());
    } catch (const Error& e) {
      rethrow_for_task(chain.task.id, e);
    }
    return a;
  });

  std::vector<AnnotationRecord> records;
  Json warnings = Json::array();
  for (auto& r : results) {
    if (r.record) records.push_back(std::move(*r.record));
    for (auto& w : r.warnings) warnings.push_back(std::move(w));
  }
  write_jsonl(out.reports() / "annotations.jsonl", records);
  return Json{{"chains", chains.size()}, {"annotated", records.size()}, {"warnings", warnings}};
}

Json metrics(const GlobalConfig& cfg, const Flags& f) {
  const Layout out{cfg.out};
  const fs::path corpus_path = require_file(cfg.metrics_corpus, f.input, out.chains() / "concise.jsonl", "corpus");
  const fs::path base_path = require_file(cfg.metrics_baseline, std::nullopt, out.chains() / "baseline.jsonl", "baseline");

  std::vector<ReasoningChain> corpus;
  for (auto& c : read_jsonl<ReasoningChain>(corpus_path)) {
    if (c.terminated != Termination::discarded) corpus.push_back(std::move(c));
  }
  const auto baseline = read_jsonl<ReasoningChain>(base_path);
  std::map<std::string, JudgeAnnotation> annotations;
  if (!cfg.metrics_annotations.empty()) {
    const fs::path ann_path = require_file(cfg.metrics_annotations, std::nullopt, {}, "annotations");
    for (const auto& a : read_jsonl<AnnotationRecord>(ann_path)) annotations[a.id] = a.annotation;
  }

  const BenchmarkReport rep = build_report(corpus, annotations, baseline, cfg.pipeline.keywords);
  write_text(out.reports() / "metrics.csv", report_csv(rep));
  const Json j = report_json(rep);
  write_text(out.reports() / "metrics.json", j.dump(2) + "\n");
  return j;
}

Json phrase_eval(const GlobalConfig& cfg, const Flags& f) {
  const Layout out{cfg.out};
  std::vector<std::string> candidates = cfg.pipeline.pool.phrases;
  if (!cfg.phrase_candidates.empty()) {
    candidates = PhrasePool::from(detail::read_phrase_file(cfg.phrase_candidates)).phrases;
  }
  const fs::path points_path = require_file(cfg.phrase_points, f.input, {}, "injection points");
  const auto points = read_jsonl<ReasoningChain>(points_path);
  if (points.empty()) throw EmptyInput("no injection points in " + points_path.string());

  const auto backend = make_backend(cfg.backend);
  PhraseEvalSettings settings{cfg.pipeline.tmpl, cfg.pipeline.gen};
  auto rows = parallel_map(candidates, cfg.parallelism, [&](const std::string& phrase) {
    return evaluate_phrase_pool({phrase}, points, cfg.pipeline.keywords, settings, *backend).front();
  });

  std::string csv = "phrase,rate,points,skipped\n";
  for (const auto& r : rows) {
    csv += concise::detail::csv_escape(r.phrase) + "," + concise::detail::format_real(r.rate) + "," +
           std::to_string(r.points) + "," + std::to_string(r.skipped) + "\n";
  }
  write_text(out.reports() / "phrase_eval.csv", csv);
  return Json{{"phrases", rows.size()}, {"points", points.size()}};
}

Json sweep(const GlobalConfig& cfg, const Flags& f) {
  const Layout out{cfg.out};
  const fs::path path = require_file(cfg.sweep_traces, f.input, out.reports() / "probe_traces.jsonl", "probe traces");
  const auto traces = read_jsonl<ProbeTrace>(path);
  const Json j = to_json(threshold_sweep(traces, cfg.sweep_thresholds));
  write_text(out.reports() / "sweep.json", j.dump(2) + "\n");
  return Json{{"traces", traces.size()}, {"thresholds", cfg.sweep_thresholds.size()}};
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file");
  cmd->add_option("--backend-url", f.backend_url, "Override backend.base_url");
  cmd->add_option("--seed", f.seed, "Override pipeline.seed");
  cmd->add_option("--parallelism", f.parallelism, "Maximum concurrent tasks");
  cmd->add_option("--t-e", f.t_e, "Early-stopping threshold");
  cmd->add_option("--max-steps", f.max_steps, "Step budget per chain");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--input", f.input, "Primary input file (overrides the config path)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence-guided compression of reasoning chains"};
  app.require_subcommand(1);
  Flags flags;

  using Handler = Json (*)(const GlobalConfig&, const Flags&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"build-dataset", "Build concise chains and SFT/preference datasets", build_dataset},
      {"decode", "Training-free early-stopping decoding (no ground truth needed)", decode},
      {"annotate", "Annotate reflection steps and first answer steps", annotate},
      {"metrics", "Accuracy, token and compression report against a baseline", metrics},
      {"phrase-eval", "Reflection rate of each candidate confidence phrase", phrase_eval},
      {"sweep-threshold", "Histogram of first-exceed positions per threshold", sweep},
  };
  std::map<CLI::App*, Handler> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, flags);
    handlers[cmd] = fn;
    if (std::string_view(name) == "annotate") {
      cmd->add_option("--method", flags.method, "rule or judge")->check(CLI::IsMember({"rule", "judge"}));
    }
    if (std::string_view(name) == "metrics") {
      cmd->add_option("--baseline", flags.baseline, "Baseline chain corpus");
      cmd->add_option("--annotations", flags.annotations, "Annotation JSONL");
    }
    if (std::string_view(name) == "sweep-threshold") {
      cmd->add_option("--thresholds", flags.thresholds, "Thresholds to sweep")->delimiter(',');
    }
  }

  CLI11_PARSE(app, argc, argv);

  CLI::App* chosen = app.get_subcommands().front();
  try {
    const GlobalConfig cfg = resolve(flags);
    Json summary = handlers.at(chosen)(cfg, flags);
    std::cout << dump_line(Json{{"status", "ok"}, {"command", chosen->get_name()}, {"summary", summary}}) << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << dump_line(Json{{"status", "error"},
                                {"command", chosen->get_name()},
                                {"code", e.code()},
                                {"message", e.what()}})
              << "\n";
    return e.code() == "ConfigInvalid" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << dump_line(Json{{"status", "error"},
                                {"command", chosen->get_name()},
                                {"code", "Internal"},
                                {"message", e.what()}})
              << "\n";
    return 1;
  }
}
