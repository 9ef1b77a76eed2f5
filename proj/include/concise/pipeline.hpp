#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "concise/answer.hpp"
#include "concise/backend.hpp"
#include "concise/chain.hpp"
#include "concise/confidence.hpp"
#include "concise/errors.hpp"
#include "concise/reflect.hpp"
#include "concise/rng.hpp"
#include "concise/text.hpp"

namespace concise {

struct PipelineConfig {
  // Per-step generation defaults; prompt and stop are filled per request.
  CompletionRequest gen{.prompt = {}, .max_tokens = 1024, .temperature = 0.6, .top_p = 0.95, .stop = {}, .seed = std::nullopt};
  DetectorConfig detector;
  PhrasePool pool;
  KeywordSet keywords;
  PromptTemplate tmpl;
  std::size_t max_steps = 512;
  std::size_t max_total_tokens = 16384;
  bool keep_injected_phrase = true;
  std::uint64_t seed = 0;
  int answer_max_tokens = 64;
  int summary_max_tokens = 256;
  // Skip probes until some step looks like it states an answer.
  bool probe_only_after_answer_pattern = false;

  void validate() const {
    if (max_steps < 1) throw ConfigInvalid("max_steps must be >= 1");
    if (max_total_tokens < 1) throw ConfigInvalid("max_total_tokens must be >= 1");
    if (answer_max_tokens < 1) throw ConfigInvalid("answer_max_tokens must be >= 1");
    if (summary_max_tokens < 1) throw ConfigInvalid("summary_max_tokens must be >= 1");
    if (tmpl.step_delimiter.empty()) throw ConfigInvalid("step_delimiter must be non-empty");
    if (pool.phrases.empty()) throw EmptyPool("phrase pool must be non-empty");
    detector.validate();
    CompletionRequest probe = gen;
    probe.stop.clear();
    probe.validate();
  }
};

enum class BuildStatus { emitted, discarded };

inline std::string_view to_string(BuildStatus s) {
  return s == BuildStatus::emitted ? "emitted" : "discarded";
}

struct BuildOutcome {
  BuildStatus status = BuildStatus::discarded;
  ReasoningChain chain;
  std::vector<ConfidenceReading> probes;
  std::size_t injections = 0;
  std::optional<std::size_t> stop_step;
  // Every token requested from the backend: steps, redrafts, probes,
  // elicitations and the summary.
  std::size_t generated_tokens = 0;
  bool summary_truncated = false;
  std::optional<std::string> error;
};

// -- prompts -----------------------------------------------------------------

inline std::string answer_prompt(const ReasoningChain& chain, const PromptTemplate& tmpl) {
  return render_prompt(chain, tmpl) + "\n" + tmpl.answer_cue;
}

inline std::string summary_prompt(const ReasoningChain& chain, const PromptTemplate& tmpl) {
  return render_prompt(chain, tmpl, tmpl.think_close) + tmpl.summary_separator;
}

// -- single operations --------------------------------------------------------

/// A drafted step. `step` is empty when nothing but whitespace (or only the
/// think_close marker) was produced.
struct StepDraft {
  std::optional<Step> step;
  bool closed_thinking = false;  // the model emitted think_close itself
  std::size_t generated_tokens = 0;
};

namespace detail {

inline bool needs_space(std::string_view left, std::string_view right) {
  if (left.empty() || right.empty()) return false;
  auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  return word(left.back()) && word(right.front());
}

inline std::size_t remaining(std::size_t budget, std::size_t used) {
  return used >= budget ? 0 : budget - used;
}

}  // namespace detail

/// Generates the next step from the chain (continuing from `injection` when
/// given). The step delimiter is the stop sequence. Text after a spontaneous
/// think_close is dropped and `closed_thinking` is set. A reflection-start
/// draft is tagged so; an injected step keeps the phrase as its visible
/// prefix when `keep_injected_phrase` is on.
inline StepDraft next_step(const ReasoningChain& chain, const PipelineConfig& cfg, const Backend& backend,
                           std::optional<std::string_view> injection = std::nullopt,
                           std::optional<int> max_tokens = std::nullopt) {
  if (!chain.is_open()) throw ChainClosed("cannot extend a closed chain (task " + chain.task.id + ")");
  CompletionRequest req = cfg.gen;
  req.prompt = render_prompt(chain, cfg.tmpl, injection);
  req.stop = {cfg.tmpl.step_delimiter};
  if (max_tokens) req.max_tokens = std::max(1, std::min(req.max_tokens, *max_tokens));
  if (req.seed) *req.seed += chain.size();
  const CompletionResult res = backend.generate(req);

  StepDraft draft;
  draft.generated_tokens = res.token_count;
  std::string_view body = res.text;
  if (const std::size_t close = body.find(cfg.tmpl.think_close); close != std::string_view::npos) {
    body = body.substr(0, close);
    draft.closed_thinking = true;
  }

  Step step;
  step.index = chain.size() + 1;
  if (injection) {
    const std::string_view cont = text::trim_right(body);
    step.kind = StepKind::injected;
    step.injected_phrase = std::string(*injection);
    if (cfg.keep_injected_phrase) {
      step.text = std::string(*injection);
      if (detail::needs_space(step.text, cont)) step.text += ' ';
      step.text += cont;
      step.text = std::string(text::trim(step.text));
      step.token_count = backend.count_tokens(step.text);
    } else {
      step.text = std::string(text::trim(cont));
      step.token_count = step.text.empty() ? 0 : backend.count_tokens(step.text);
    }
    if (text::trim(cont).empty() && !cfg.keep_injected_phrase) return draft;
  } else {
    step.text = std::string(text::trim(body));
    if (step.text.empty()) return draft;
    step.kind = is_reflection_start(step.text, cfg.keywords) ? StepKind::reflection_start : StepKind::plain;
    step.token_count = draft.closed_thinking ? backend.count_tokens(step.text) : res.token_count;
  }
  draft.step = std::move(step);
  return draft;
}

struct Elicitation {
  std::string raw;
  std::size_t tokens = 0;
};

/// Appends the answer cue and returns the raw continuation. The
/// elicitation never becomes part of the chain.
inline Elicitation elicit_final_answer(const ReasoningChain& chain, const PipelineConfig& cfg,
                                       const Backend& backend) {
  if (chain.steps.empty()) throw EmptyChain("nothing to elicit an answer from (task " + chain.task.id + ")");
  CompletionRequest req = cfg.gen;
  req.prompt = answer_prompt(chain, cfg.tmpl);
  req.max_tokens = cfg.answer_max_tokens;
  req.stop = {cfg.tmpl.step_delimiter};
  const CompletionResult res = backend.generate(req);
  return {res.text, res.token_count};
}

struct Summary {
  std::string text;
  std::size_t tokens = 0;
  bool truncated = false;
};

/// Closes the thinking section and generates until end of sequence or the
/// summary token cap.
inline Summary generate_summary(const ReasoningChain& chain, const PipelineConfig& cfg,
                                const Backend& backend) {
  CompletionRequest req = cfg.gen;
  req.prompt = summary_prompt(chain, cfg.tmpl);
  req.max_tokens = cfg.summary_max_tokens;
  req.stop.clear();
  const CompletionResult res = backend.generate(req);
  return {std::string(text::trim(res.text)), res.token_count, res.finish_reason == FinishReason::length};
}

// -- chain construction -------------------------------------------------------

namespace detail {

inline bool looks_like_answer(std::string_view step_text) {
  return step_text.find("\\boxed{") != std::string_view::npos ||
         text::fold_case(step_text).find("answer") != std::string::npos;
}

enum class GateDecision { keep_going, stop };

/// The generation loop shared by chain construction and decoding. After each
/// probe with c > t_e the gate is asked whether to stop. Returns how the loop
/// ended (early_stopped, natural_end or budget_exhausted).
template <class Gate>
Termination run_loop(ReasoningChain& chain, const PipelineConfig& cfg, const Backend& backend,
                     std::vector<ConfidenceReading>& probes, std::size_t& injections,
                     std::size_t& used, Gate&& gate) {
  Rng rng = task_rng(cfg.seed, chain.task.id);
  bool answer_seen = false;
  while (true) {
    const std::size_t left = remaining(cfg.max_total_tokens, used);
    if (chain.size() >= cfg.max_steps || left == 0) return Termination::budget_exhausted;

    const int cap = static_cast<int>(std::min<std::size_t>(left, static_cast<std::size_t>(cfg.gen.max_tokens)));
    StepDraft draft = next_step(chain, cfg, backend, std::nullopt, cap);
    used += draft.generated_tokens;
    if (!draft.step) return Termination::natural_end;

    if (!draft.closed_thinking && draft.step->kind == StepKind::reflection_start) {
      const std::string& phrase = sample_phrase(cfg.pool, rng);
      const int recap = static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(
          remaining(cfg.max_total_tokens, used), static_cast<std::size_t>(cfg.gen.max_tokens))));
      StepDraft redraft = next_step(chain, cfg, backend, phrase, recap);
      used += redraft.generated_tokens;
      ++injections;
      if (!redraft.step) return Termination::natural_end;
      draft = std::move(redraft);
    }

    answer_seen = answer_seen || looks_like_answer(draft.step->text);
    chain = append_step(std::move(chain), std::move(*draft.step));
    if (draft.closed_thinking) return Termination::natural_end;

    if (cfg.probe_only_after_answer_pattern && !answer_seen) continue;
    ConfidenceReading reading = detect_confidence(chain, cfg.tmpl, cfg.detector, backend);
    used += reading.second_query_used ? 2 : 1;
    const double value = reading.value;
    probes.push_back(std::move(reading));
    if (value > cfg.detector.threshold && gate() == GateDecision::stop) return Termination::early_stopped;
  }
}

}  // namespace detail

/// Builds one concise chain for a task with known ground truth.
///
/// Each step is drafted; a reflection-start draft is redrafted once after a
/// sampled confidence phrase (and kept even if it still reflects). After
/// every appended step the detector runs; when c > t_e an answer is elicited
/// and the loop stops only if it verifies. A spontaneous think_close or an
/// exhausted budget triggers one last elicitation. Verified chains get a
/// summary and are emitted; the rest are discarded.
inline BuildOutcome build_concise_chain(const Task& task, const PipelineConfig& cfg, const Backend& backend) {
  if (!task.ground_truth) throw InvalidRequest("task " + task.id + " has no ground truth");
  const std::string& gt = *task.ground_truth;

  BuildOutcome out;
  out.chain.task = task;
  std::optional<std::size_t> elicited_at;
  std::optional<std::string> verified_answer;

  auto try_answer = [&]() -> bool {
    const Elicitation e = elicit_final_answer(out.chain, cfg, backend);
    out.generated_tokens += e.tokens;
    elicited_at = out.chain.size();
    if (!verify_answer(e.raw, gt)) return false;
    verified_answer = extract_answer(e.raw);
    return true;
  };

  try {
    Termination end = detail::run_loop(out.chain, cfg, backend, out.probes, out.injections,
                                       out.generated_tokens, [&] {
                                         return try_answer() ? detail::GateDecision::stop
                                                             : detail::GateDecision::keep_going;
                                       });
    if (!verified_answer && !out.chain.steps.empty() && elicited_at != out.chain.size()) try_answer();

    if (!verified_answer) {
      out.chain.terminated = Termination::discarded;
      out.status = BuildStatus::discarded;
      return out;
    }
    out.chain.final_answer = verified_answer;
    out.chain.terminated = end;
    out.stop_step = out.chain.size();
    const Summary s = generate_summary(out.chain, cfg, backend);
    out.generated_tokens += s.tokens;
    out.chain.summary = s.text;
    out.chain.summary_token_count = s.tokens;
    out.summary_truncated = s.truncated;
    out.status = BuildStatus::emitted;
  } catch (const BackendError& e) {
    out.chain.terminated = Termination::discarded;
    out.chain.summary.reset();
    out.chain.summary_token_count = 0;
    out.chain.final_answer.reset();
    out.status = BuildStatus::discarded;
    out.stop_step.reset();
    out.error = e.code() + ": " + e.what();
  }
  return out;
}

struct DecodeOutcome {
  ReasoningChain chain;
  std::vector<ConfidenceReading> probes;
  std::size_t injections = 0;
  std::size_t generated_tokens = 0;
};

/// Training-free variant: the same loop, stopping the first time c > t_e.
/// The elicited answer is recorded without verification and nothing is
/// discarded. Ground truth, if present, is ignored.
inline DecodeOutcome concise_decode(const Task& task, const PipelineConfig& cfg, const Backend& backend) {
  DecodeOutcome out;
  out.chain.task = task;
  const Termination end = detail::run_loop(out.chain, cfg, backend, out.probes, out.injections,
                                           out.generated_tokens,
                                           [] { return detail::GateDecision::stop; });
  if (!out.chain.steps.empty()) {
    const Elicitation e = elicit_final_answer(out.chain, cfg, backend);
    out.generated_tokens += e.tokens;
    out.chain.final_answer = extract_answer(e.raw);
  } else {
    out.chain.final_answer = std::string{};
  }
  out.chain.terminated = end;
  return out;
}

// -- plain sampling -----------------------------------------------------------

/// Splits a full response into steps and summary at think_close.
inline ReasoningChain chain_from_response(const Task& task, std::string_view response, FinishReason finish,
                                          const PipelineConfig& cfg, const Backend& backend) {
  ReasoningChain chain;
  chain.task = task;
  std::string_view thinking = response;
  std::optional<std::string_view> summary;
  if (const std::size_t close = response.find(cfg.tmpl.think_close); close != std::string_view::npos) {
    thinking = response.substr(0, close);
    summary = text::trim(response.substr(close + cfg.tmpl.think_close.size()));
  }
  for (const auto& piece : text::split(thinking, cfg.tmpl.step_delimiter)) {
    const std::string_view t = text::trim(piece);
    if (t.empty()) continue;
    Step s;
    s.index = chain.size() + 1;
    s.text = std::string(t);
    s.kind = is_reflection_start(s.text, cfg.keywords) ? StepKind::reflection_start : StepKind::plain;
    s.token_count = backend.count_tokens(s.text);
    chain.steps.push_back(std::move(s));
  }
  if (summary) {
    chain.summary = std::string(*summary);
    chain.summary_token_count = backend.count_tokens(*summary);
  }
  std::string_view answer_source = summary && !summary->empty() ? *summary : thinking;
  chain.final_answer = extract_answer(answer_source);
  chain.terminated = summary || finish != FinishReason::length ? Termination::natural_end
                                                                : Termination::budget_exhausted;
  return chain;
}

struct PlainSample {
  ReasoningChain chain;
  bool correct = false;
  std::optional<std::string> error;
};

/// `n` independent full-length generations (no injection, no early stop),
/// each verified against the ground truth. Sample i uses seed cfg.seed + i.
inline std::vector<PlainSample> sample_plain_chains(const Task& task, std::size_t n, double temperature,
                                                    const PipelineConfig& cfg, const Backend& backend) {
  if (n < 1) throw InvalidRequest("sample count must be >= 1");
  std::vector<PlainSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    CompletionRequest req = cfg.gen;
    req.prompt = render_preamble(task, cfg.tmpl);
    req.max_tokens = static_cast<int>(std::min<std::size_t>(cfg.max_total_tokens, 1u << 30));
    req.temperature = temperature;
    req.stop.clear();
    req.seed = cfg.seed + i;
    PlainSample sample;
    try {
      const CompletionResult res = backend.generate(req);
      sample.chain = chain_from_response(task, res.text, res.finish_reason, cfg, backend);
      sample.correct = task.ground_truth && sample.chain.final_answer &&
                       verify_answer(*sample.chain.final_answer, *task.ground_truth);
    } catch (const BackendError& e) {
      sample.chain.task = task;
      sample.chain.terminated = Termination::discarded;
      sample.error = e.code() + ": " + e.what();
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace concise
