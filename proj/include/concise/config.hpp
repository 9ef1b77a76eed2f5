#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "concise/confidence.hpp"
#include "concise/errors.hpp"
#include "concise/http_backend.hpp"
#include "concise/jsonl.hpp"
#include "concise/pipeline.hpp"
#include "concise/reflect.hpp"
#include "concise/scripted_backend.hpp"

namespace concise {

struct BackendSettings {
  std::string kind = "http";  // "http" | "scripted"
  std::string script;         // scripted: path to the script JSON
  HttpBackendConfig http;
  std::string api_key_env = "OPENAI_API_KEY";
};

struct SamplingSettings {
  std::size_t n = 8;
  double temperature = 1.0;
};

/// Everything the CLI reads from its JSON config file. Relative paths are
/// resolved against the config file's directory.
struct GlobalConfig {
  BackendSettings backend;
  std::optional<BackendSettings> judge_backend;
  PipelineConfig pipeline;
  SamplingSettings sampling;
  JudgeSettings judge;
  std::size_t parallelism = 1;

  std::filesystem::path tasks;
  std::filesystem::path out = "out";

  std::string annotate_method = "rule";
  std::filesystem::path annotate_chains;
  std::filesystem::path metrics_corpus;
  std::filesystem::path metrics_baseline;
  std::filesystem::path metrics_annotations;
  std::filesystem::path phrase_candidates;
  std::filesystem::path phrase_points;
  std::filesystem::path sweep_traces;
  std::vector<double> sweep_thresholds = {0.4, 0.5, 0.6, 0.7};
};

namespace detail {

template <class T>
void assign(const Json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigInvalid(std::string("config key '") + key + "' has the wrong type");
  }
}

inline void assign_path(const Json& obj, const char* key, const std::filesystem::path& base,
                        std::filesystem::path& dst) {
  std::string s;
  assign(obj, key, s);
  if (s.empty()) return;
  std::filesystem::path p(s);
  dst = p.is_absolute() ? p : base / p;
}

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const char* section) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigInvalid(std::string("unknown config key '") + section + "." + key + "'");
  }
}

inline std::vector<std::string> read_phrase_file(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  if (!j.is_array()) throw ConfigInvalid("phrase pool file must be a JSON array of strings");
  try {
    return j.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigInvalid("phrase pool file must be a JSON array of strings");
  }
}

inline BackendSettings parse_backend(const Json& b, const std::filesystem::path& base, const char* section) {
  reject_unknown(b,
                 {"kind", "script", "base_url", "model", "api_key_env", "top_k", "connect_timeout_s",
                  "read_timeout_s", "max_attempts"},
                 section);
  BackendSettings s;
  assign(b, "kind", s.kind);
  if (s.kind != "http" && s.kind != "scripted") throw ConfigInvalid("backend.kind must be \"http\" or \"scripted\"");
  std::filesystem::path script;
  assign_path(b, "script", base, script);
  s.script = script.string();
  assign(b, "base_url", s.http.base_url);
  assign(b, "model", s.http.model);
  assign(b, "api_key_env", s.api_key_env);
  assign(b, "top_k", s.http.probe_top_k);
  assign(b, "connect_timeout_s", s.http.connect_timeout_s);
  assign(b, "read_timeout_s", s.http.read_timeout_s);
  assign(b, "max_attempts", s.http.max_attempts);
  return s;
}

}  // namespace detail

inline GlobalConfig parse_config(const Json& j, const std::filesystem::path& base_dir) {
  using detail::assign;
  using detail::assign_path;
  if (!j.is_object()) throw ConfigInvalid("config must be a JSON object");
  detail::reject_unknown(j,
                         {"backend", "judge_backend", "pipeline", "detector", "template", "phrase_pool",
                          "keywords", "sampling", "judge", "parallelism", "paths", "annotate", "metrics",
                          "phrase_eval", "sweep"},
                         "");
  GlobalConfig cfg;
  if (j.contains("backend")) cfg.backend = detail::parse_backend(j["backend"], base_dir, "backend");
  if (j.contains("judge_backend")) {
    cfg.judge_backend = detail::parse_backend(j["judge_backend"], base_dir, "judge_backend");
  }

  PipelineConfig& p = cfg.pipeline;
  if (j.contains("pipeline")) {
    const Json& pj = j["pipeline"];
    detail::reject_unknown(pj,
                           {"temperature", "top_p", "step_max_tokens", "max_steps", "max_total_tokens",
                            "keep_injected_phrase", "seed", "answer_max_tokens", "summary_max_tokens",
                            "probe_only_after_answer_pattern"},
                           "pipeline");
    assign(pj, "temperature", p.gen.temperature);
    assign(pj, "top_p", p.gen.top_p);
    assign(pj, "step_max_tokens", p.gen.max_tokens);
    assign(pj, "max_steps", p.max_steps);
    assign(pj, "max_total_tokens", p.max_total_tokens);
    assign(pj, "keep_injected_phrase", p.keep_injected_phrase);
    assign(pj, "seed", p.seed);
    assign(pj, "answer_max_tokens", p.answer_max_tokens);
    assign(pj, "summary_max_tokens", p.summary_max_tokens);
    assign(pj, "probe_only_after_answer_pattern", p.probe_only_after_answer_pattern);
  }
  if (j.contains("detector")) {
    const Json& dj = j["detector"];
    detail::reject_unknown(dj, {"probing_prompt", "indicative_words", "composite_prefix", "t_e", "top_k"},
                           "detector");
    assign(dj, "probing_prompt", p.detector.probing_prompt);
    assign(dj, "indicative_words", p.detector.indicative_words);
    assign(dj, "composite_prefix", p.detector.composite_prefix);
    assign(dj, "t_e", p.detector.threshold);
    assign(dj, "top_k", p.detector.top_k);
  }
  if (j.contains("template")) {
    const Json& tj = j["template"];
    detail::reject_unknown(tj,
                           {"preamble", "think_open", "step_delimiter", "think_close", "summary_separator",
                            "answer_cue"},
                           "template");
    assign(tj, "preamble", p.tmpl.preamble);
    assign(tj, "think_open", p.tmpl.think_open);
    assign(tj, "step_delimiter", p.tmpl.step_delimiter);
    assign(tj, "think_close", p.tmpl.think_close);
    assign(tj, "summary_separator", p.tmpl.summary_separator);
    assign(tj, "answer_cue", p.tmpl.answer_cue);
  }
  if (j.contains("phrase_pool")) {
    const Json& pp = j["phrase_pool"];
    if (pp.is_string()) {
      std::filesystem::path path(pp.get<std::string>());
      if (!path.is_absolute()) path = base_dir / path;
      p.pool = PhrasePool::from(detail::read_phrase_file(path));
    } else {
      std::vector<std::string> phrases;
      assign(j, "phrase_pool", phrases);
      p.pool = PhrasePool::from(std::move(phrases));
    }
  }
  if (j.contains("keywords")) {
    std::vector<std::string> kw;
    assign(j, "keywords", kw);
    p.keywords = KeywordSet::from(std::move(kw));
  }
  if (j.contains("sampling")) {
    detail::reject_unknown(j["sampling"], {"n", "temperature"}, "sampling");
    assign(j["sampling"], "n", cfg.sampling.n);
    assign(j["sampling"], "temperature", cfg.sampling.temperature);
  }
  if (j.contains("judge")) {
    detail::reject_unknown(j["judge"], {"token_cap", "max_tokens"}, "judge");
    assign(j["judge"], "token_cap", cfg.judge.token_cap);
    assign(j["judge"], "max_tokens", cfg.judge.gen.max_tokens);
  }
  assign(j, "parallelism", cfg.parallelism);
  if (j.contains("paths")) {
    detail::reject_unknown(j["paths"], {"tasks", "out"}, "paths");
    assign_path(j["paths"], "tasks", base_dir, cfg.tasks);
    assign_path(j["paths"], "out", base_dir, cfg.out);
  }
  if (j.contains("annotate")) {
    detail::reject_unknown(j["annotate"], {"method", "chains"}, "annotate");
    assign(j["annotate"], "method", cfg.annotate_method);
    assign_path(j["annotate"], "chains", base_dir, cfg.annotate_chains);
  }
  if (j.contains("metrics")) {
    detail::reject_unknown(j["metrics"], {"corpus", "baseline", "annotations"}, "metrics");
    assign_path(j["metrics"], "corpus", base_dir, cfg.metrics_corpus);
    assign_path(j["metrics"], "baseline", base_dir, cfg.metrics_baseline);
    assign_path(j["metrics"], "annotations", base_dir, cfg.metrics_annotations);
  }
  if (j.contains("phrase_eval")) {
    detail::reject_unknown(j["phrase_eval"], {"candidates", "points"}, "phrase_eval");
    assign_path(j["phrase_eval"], "candidates", base_dir, cfg.phrase_candidates);
    assign_path(j["phrase_eval"], "points", base_dir, cfg.phrase_points);
  }
  if (j.contains("sweep")) {
    detail::reject_unknown(j["sweep"], {"traces", "thresholds"}, "sweep");
    assign_path(j["sweep"], "traces", base_dir, cfg.sweep_traces);
    assign(j["sweep"], "thresholds", cfg.sweep_thresholds);
  }
  return cfg;
}

inline void validate_config(const GlobalConfig& cfg) {
  if (cfg.parallelism < 1) throw ConfigInvalid("parallelism must be >= 1");
  if (cfg.annotate_method != "rule" && cfg.annotate_method != "judge") {
    throw ConfigInvalid("annotate.method must be \"rule\" or \"judge\"");
  }
  try {
    cfg.pipeline.validate();
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const Error& e) {
    throw ConfigInvalid(e.what());
  }
}

inline GlobalConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    throw ConfigInvalid(e.what());
  }
  return parse_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

/// Instantiates the configured backend. The API key comes only from the
/// environment variable the settings name.
inline std::unique_ptr<Backend> make_backend(const BackendSettings& s) {
  if (s.kind == "scripted") {
    if (s.script.empty()) throw ConfigInvalid("scripted backend needs backend.script");
    return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(s.script));
  }
  HttpBackendConfig http = s.http;
  if (!s.api_key_env.empty()) {
    if (const char* key = std::getenv(s.api_key_env.c_str())) http.api_key = key;
  }
  return std::make_unique<HttpBackend>(std::move(http));
}

}  // namespace concise
