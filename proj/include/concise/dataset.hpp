#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "concise/answer.hpp"
#include "concise/chain.hpp"
#include "concise/errors.hpp"
#include "concise/jsonl.hpp"
#include "concise/pipeline.hpp"

namespace concise {

struct SftRecord {
  std::string id;
  std::string question;
  std::string target;  // steps, think_close, summary
  std::string answer;
  std::size_t tokens = 0;

  bool operator==(const SftRecord&) const = default;
};

struct PreferenceRecord {
  std::string id;
  std::string prompt;  // rendered preamble, ending at the think_open marker
  std::string chosen;
  std::string rejected;
  std::size_t chosen_tokens = 0;
  std::size_t rejected_tokens = 0;

  bool operator==(const PreferenceRecord&) const = default;
};

struct BuildReport {
  std::size_t tasks_in = 0;
  std::size_t emitted = 0;
  std::size_t discarded = 0;
  std::size_t preference_pairs = 0;
  std::size_t skipped_no_correct_sample = 0;
  // Pairs whose chosen side is not shorter than the rejected side.
  std::size_t length_inversions = 0;

  bool operator==(const BuildReport&) const = default;
};

inline Json to_json(const BuildReport& r) {
  Json j;
  j["tasks_in"] = r.tasks_in;
  j["emitted"] = r.emitted;
  j["discarded"] = r.discarded;
  j["preference_pairs"] = r.preference_pairs;
  j["skipped_no_correct_sample"] = r.skipped_no_correct_sample;
  j["length_inversions"] = r.length_inversions;
  return j;
}

inline SftRecord make_sft_record(const BuildOutcome& o, const PromptTemplate& tmpl) {
  return SftRecord{o.chain.task.id, o.chain.task.question, render_response(o.chain, tmpl),
                   o.chain.final_answer.value_or(""), chain_tokens(o.chain)};
}

/// One record per emitted outcome; discarded outcomes are only counted.
inline std::pair<std::vector<SftRecord>, BuildReport> build_sft_dataset(
    const std::vector<BuildOutcome>& outcomes, const PromptTemplate& tmpl) {
  std::vector<SftRecord> records;
  BuildReport report;
  report.tasks_in = outcomes.size();
  for (const auto& o : outcomes) {
    if (o.status == BuildStatus::emitted) {
      ++report.emitted;
      records.push_back(make_sft_record(o, tmpl));
    } else {
      ++report.discarded;
    }
  }
  return {std::move(records), report};
}

/// Pairs an emitted concise chain with the longest correct plain sample
/// (first one on ties). No correct sample means no pair.
inline std::optional<PreferenceRecord> build_preference_record(const BuildOutcome& concise,
                                                               const std::vector<PlainSample>& samples,
                                                               const PromptTemplate& tmpl) {
  if (concise.status != BuildStatus::emitted) {
    throw InvalidRequest("preference pairs need an emitted chain (task " + concise.chain.task.id + ")");
  }
  const PlainSample* longest = nullptr;
  std::size_t longest_tokens = 0;
  for (const auto& s : samples) {
    if (!s.correct) continue;
    const std::size_t t = chain_tokens(s.chain);
    if (!longest || t > longest_tokens) {
      longest = &s;
      longest_tokens = t;
    }
  }
  if (!longest) return std::nullopt;
  PreferenceRecord r;
  r.id = concise.chain.task.id;
  r.prompt = render_preamble(concise.chain.task, tmpl);
  r.chosen = render_response(concise.chain, tmpl);
  r.rejected = render_response(longest->chain, tmpl);
  r.chosen_tokens = chain_tokens(concise.chain);
  r.rejected_tokens = longest_tokens;
  return r;
}

struct TaskRun {
  BuildOutcome outcome;
  std::vector<PlainSample> samples;  // empty when preference data is not requested
};

struct DatasetBundle {
  std::vector<SftRecord> sft;
  std::vector<PreferenceRecord> preference;
  BuildReport report;
};

/// Pure assembly of both datasets from finished runs.
inline DatasetBundle build_datasets(const std::vector<TaskRun>& runs, const PromptTemplate& tmpl,
                                    bool with_preference) {
  DatasetBundle out;
  out.report.tasks_in = runs.size();
  for (const auto& run : runs) {
    if (run.outcome.status != BuildStatus::emitted) {
      ++out.report.discarded;
      continue;
    }
    ++out.report.emitted;
    out.sft.push_back(make_sft_record(run.outcome, tmpl));
    if (!with_preference) continue;
    if (auto pair = build_preference_record(run.outcome, run.samples, tmpl)) {
      if (pair->chosen_tokens >= pair->rejected_tokens) ++out.report.length_inversions;
      out.preference.push_back(std::move(*pair));
      ++out.report.preference_pairs;
    } else {
      ++out.report.skipped_no_correct_sample;
    }
  }
  return out;
}

template <>
struct JsonRecord<SftRecord> {
  static Json to(const SftRecord& r) {
    Json j;
    j["id"] = r.id;
    j["question"] = r.question;
    j["target"] = r.target;
    j["answer"] = r.answer;
    j["tokens"] = r.tokens;
    return j;
  }

  static SftRecord from(const Json& j) {
    FieldReader f(j, "sft");
    SftRecord r;
    r.id = f.required<std::string>("id");
    r.question = f.required<std::string>("question");
    r.target = f.required<std::string>("target");
    r.answer = f.required<std::string>("answer");
    r.tokens = f.required<std::size_t>("tokens");
    f.finish();
    return r;
  }
};

template <>
struct JsonRecord<PreferenceRecord> {
  static Json to(const PreferenceRecord& r) {
    Json j;
    j["id"] = r.id;
    j["prompt"] = r.prompt;
    j["chosen"] = r.chosen;
    j["rejected"] = r.rejected;
    j["chosen_tokens"] = r.chosen_tokens;
    j["rejected_tokens"] = r.rejected_tokens;
    return j;
  }

  static PreferenceRecord from(const Json& j) {
    FieldReader f(j, "preference");
    PreferenceRecord r;
    r.id = f.required<std::string>("id");
    r.prompt = f.required<std::string>("prompt");
    r.chosen = f.required<std::string>("chosen");
    r.rejected = f.required<std::string>("rejected");
    r.chosen_tokens = f.required<std::size_t>("chosen_tokens");
    r.rejected_tokens = f.required<std::size_t>("rejected_tokens");
    f.finish();
    return r;
  }
};

}  // namespace concise
