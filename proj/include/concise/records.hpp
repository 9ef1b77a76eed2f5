#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "concise/chain.hpp"
#include "concise/errors.hpp"
#include "concise/jsonl.hpp"
#include "concise/pipeline.hpp"
#include "concise/reflect.hpp"

namespace concise {

// Task corpus: {"id","question","ground_truth"?,"meta"?}
template <>
struct JsonRecord<Task> {
  static Json to(const Task& t) {
    Json j;
    j["id"] = t.id;
    j["question"] = t.question;
    if (t.ground_truth) j["ground_truth"] = *t.ground_truth;
    if (!t.meta.empty()) j["meta"] = t.meta;
    return j;
  }

  static Task from(const Json& j) {
    FieldReader r(j, "task");
    Task t;
    t.id = r.required<std::string>("id");
    t.question = r.required<std::string>("question");
    t.ground_truth = r.optional<std::string>("ground_truth");
    if (auto m = r.optional<std::map<std::string, std::string>>("meta")) t.meta = *m;
    r.finish();
    if (t.id.empty()) throw SchemaMismatch("task: field 'id' must be non-empty");
    if (t.question.empty()) throw SchemaMismatch("task " + t.id + ": field 'question' must be non-empty");
    return t;
  }
};

/// Throws SchemaMismatch on duplicate ids.
inline void check_unique_ids(const std::vector<Task>& tasks) {
  std::set<std::string> seen;
  for (const auto& t : tasks) {
    if (!seen.insert(t.id).second) throw SchemaMismatch("duplicate task id '" + t.id + "'");
  }
}

// Chain persistence. Steps carry their recorded token counts ("tokens") and
// the summary its own ("summary_tokens") so metrics never re-tokenize.
template <>
struct JsonRecord<ReasoningChain> {
  static Json to(const ReasoningChain& c) {
    Json j;
    j["id"] = c.task.id;
    j["question"] = c.task.question;
    if (c.task.ground_truth) j["ground_truth"] = *c.task.ground_truth;
    if (!c.task.meta.empty()) j["meta"] = c.task.meta;
    Json steps = Json::array();
    for (const auto& s : c.steps) {
      Json sj;
      sj["i"] = s.index;
      sj["text"] = s.text;
      sj["kind"] = std::string(to_string(s.kind));
      if (s.injected_phrase) sj["phrase"] = *s.injected_phrase;
      sj["tokens"] = s.token_count;
      steps.push_back(std::move(sj));
    }
    j["steps"] = std::move(steps);
    if (c.fas_index) j["fas_index"] = *c.fas_index;
    if (c.summary) {
      j["summary"] = *c.summary;
      j["summary_tokens"] = c.summary_token_count;
    }
    if (c.final_answer) j["final_answer"] = *c.final_answer;
    j["terminated"] = std::string(to_string(c.terminated));
    return j;
  }

  static ReasoningChain from(const Json& j) {
    FieldReader r(j, "chain");
    ReasoningChain c;
    c.task.id = r.required<std::string>("id");
    c.task.question = r.required<std::string>("question");
    c.task.ground_truth = r.optional<std::string>("ground_truth");
    if (auto m = r.optional<std::map<std::string, std::string>>("meta")) c.task.meta = *m;
    const Json& steps = r.raw("steps");
    if (!steps.is_array()) throw SchemaMismatch("chain: field 'steps' must be an array");
    for (const auto& sj : steps) {
      FieldReader sr(sj, "step");
      Step s;
      s.index = sr.required<std::size_t>("i");
      s.text = sr.required<std::string>("text");
      const auto kind = step_kind_from_string(sr.required<std::string>("kind"));
      if (!kind) throw SchemaMismatch("step: unknown kind");
      s.kind = *kind;
      s.injected_phrase = sr.optional<std::string>("phrase");
      s.token_count = sr.optional<std::size_t>("tokens").value_or(0);
      sr.finish();
      if (s.index != c.steps.size() + 1) {
        throw SchemaMismatch("chain " + c.task.id + ": step indices must run 1..N without gaps");
      }
      if ((s.kind == StepKind::injected) != s.injected_phrase.has_value()) {
        throw SchemaMismatch("chain " + c.task.id + ": 'phrase' must be present exactly on injected steps");
      }
      c.steps.push_back(std::move(s));
    }
    c.fas_index = r.optional<std::size_t>("fas_index");
    c.summary = r.optional<std::string>("summary");
    c.summary_token_count = r.optional<std::size_t>("summary_tokens").value_or(0);
    c.final_answer = r.optional<std::string>("final_answer");
    const auto term = termination_from_string(r.required<std::string>("terminated"));
    if (!term) throw SchemaMismatch("chain: unknown 'terminated' value");
    c.terminated = *term;
    r.finish();
    if (c.fas_index && (*c.fas_index < 1 || *c.fas_index > c.steps.size())) {
      throw SchemaMismatch("chain " + c.task.id + ": fas_index out of range");
    }
    return c;
  }
};

struct AnnotationRecord {
  std::string id;
  JudgeAnnotation annotation;
  std::string source = "rule";  // "rule" | "judge"
  bool unreliable = false;      // chain longer than the judge token cap

  bool operator==(const AnnotationRecord&) const = default;
};

template <>
struct JsonRecord<AnnotationRecord> {
  static Json to(const AnnotationRecord& a) {
    Json j;
    j["id"] = a.id;
    j["groups"] = a.annotation.groups;
    j["fas"] = a.annotation.fas_index;
    j["source"] = a.source;
    if (a.unreliable) j["unreliable"] = true;
    return j;
  }

  static AnnotationRecord from(const Json& j) {
    FieldReader r(j, "annotation");
    AnnotationRecord a;
    a.id = r.required<std::string>("id");
    a.annotation.groups = r.required<std::vector<std::vector<std::size_t>>>("groups");
    a.annotation.fas_index = r.required<std::size_t>("fas");
    a.source = r.required<std::string>("source");
    a.unreliable = r.optional<bool>("unreliable").value_or(false);
    r.finish();
    if (a.source != "rule" && a.source != "judge") {
      throw SchemaMismatch("annotation: 'source' must be \"rule\" or \"judge\"");
    }
    try {
      validate_annotation(a.annotation);
    } catch (const ParseFailure& e) {
      throw SchemaMismatch("annotation " + a.id + ": " + e.what());
    }
    return a;
  }
};

/// One line of the run manifest.
struct ManifestRow {
  std::string id;
  std::string status;
  std::size_t steps = 0;
  std::size_t tokens = 0;
  std::size_t injections = 0;
  std::optional<std::size_t> stop_step;
  std::vector<double> probes;
  std::optional<std::string> error;

  bool operator==(const ManifestRow&) const = default;
};

inline ManifestRow manifest_row(const BuildOutcome& o) {
  ManifestRow row;
  row.id = o.chain.task.id;
  row.status = std::string(to_string(o.status));
  row.steps = o.chain.size();
  row.tokens = chain_tokens(o.chain);
  row.injections = o.injections;
  row.stop_step = o.stop_step;
  for (const auto& p : o.probes) row.probes.push_back(p.value);
  row.error = o.error;
  return row;
}

inline ManifestRow manifest_row(const DecodeOutcome& o) {
  ManifestRow row;
  row.id = o.chain.task.id;
  row.status = std::string(to_string(o.chain.terminated));
  row.steps = o.chain.size();
  row.tokens = chain_tokens(o.chain);
  row.injections = o.injections;
  row.stop_step = o.chain.size();
  for (const auto& p : o.probes) row.probes.push_back(p.value);
  return row;
}

template <>
struct JsonRecord<ManifestRow> {
  static Json to(const ManifestRow& m) {
    Json j;
    j["id"] = m.id;
    j["status"] = m.status;
    j["steps"] = m.steps;
    j["tokens"] = m.tokens;
    j["injections"] = m.injections;
    j["stop_step"] = m.stop_step ? Json(*m.stop_step) : Json(nullptr);
    j["probes"] = m.probes;
    if (m.error) j["error"] = *m.error;
    return j;
  }

  static ManifestRow from(const Json& j) {
    FieldReader r(j, "manifest");
    ManifestRow m;
    m.id = r.required<std::string>("id");
    m.status = r.required<std::string>("status");
    m.steps = r.required<std::size_t>("steps");
    m.tokens = r.required<std::size_t>("tokens");
    m.injections = r.required<std::size_t>("injections");
    m.stop_step = r.optional<std::size_t>("stop_step");
    m.probes = r.required<std::vector<double>>("probes");
    m.error = r.optional<std::string>("error");
    r.finish();
    return m;
  }
};

/// Per-chain detector readings with the chain's first answer step; input
/// of the threshold sweep.
struct ProbeTrace {
  std::string id;
  std::vector<double> probes;  // one reading per step, in order
  std::size_t fas = 1;

  bool operator==(const ProbeTrace&) const = default;
};

template <>
struct JsonRecord<ProbeTrace> {
  static Json to(const ProbeTrace& t) {
    Json j;
    j["id"] = t.id;
    j["probes"] = t.probes;
    j["fas"] = t.fas;
    return j;
  }

  static ProbeTrace from(const Json& j) {
    FieldReader r(j, "trace");
    ProbeTrace t;
    t.id = r.optional<std::string>("id").value_or("");
    t.probes = r.required<std::vector<double>>("probes");
    t.fas = r.required<std::size_t>("fas");
    r.finish();
    return t;
  }
};

}  // namespace concise
