#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "concise/errors.hpp"
#include "concise/text.hpp"

namespace concise {

struct Task {
  std::string id;
  std::string question;
  // Absent for decode-only corpora.
  std::optional<std::string> ground_truth;
  std::map<std::string, std::string> meta;

  bool operator==(const Task&) const = default;
};

enum class StepKind { plain, reflection_start, injected, answer, summary };

enum class Termination { open, early_stopped, natural_end, budget_exhausted, discarded };

/// One blank-line-delimited reasoning unit.
struct Step {
  std::size_t index = 0;  // 1-based
  std::string text;
  StepKind kind = StepKind::plain;
  std::optional<std::string> injected_phrase;  // set iff kind == injected
  std::size_t token_count = 0;

  bool operator==(const Step&) const = default;
};

struct ReasoningChain {
  Task task;
  std::vector<Step> steps;
  std::optional<std::size_t> fas_index;
  std::optional<std::string> summary;
  std::size_t summary_token_count = 0;
  std::optional<std::string> final_answer;
  Termination terminated = Termination::open;

  bool is_open() const { return terminated == Termination::open; }
  std::size_t size() const { return steps.size(); }

  bool operator==(const ReasoningChain&) const = default;
};

/// Response length in tokens: every step plus the summary.
inline std::size_t chain_tokens(const ReasoningChain& chain) {
  std::size_t total = chain.summary_token_count;
  for (const auto& s : chain.steps) total += s.token_count;
  return total;
}

struct PromptTemplate {
  static constexpr std::string_view kQuestionPlaceholder = "{question}";

  std::string preamble =
      "{question}\nPlease reason step by step, and put your final answer within \\boxed{}.\n";
  std::string think_open = "<think>";
  std::string step_delimiter = "\n\n";
  std::string think_close = "</think>";
  // Between think_close and the summary.
  std::string summary_separator = "\n\n";
  // Cue appended (newline-joined) to ask for the final answer.
  std::string answer_cue = "Final Answer:";

  bool operator==(const PromptTemplate&) const = default;
};

/// The question-bearing prefix every backend prompt starts with.
inline std::string render_preamble(const Task& task, const PromptTemplate& tmpl) {
  return text::replace_all(tmpl.preamble, PromptTemplate::kQuestionPlaceholder, task.question) +
         tmpl.think_open + "\n";
}

inline std::string join_steps(const ReasoningChain& chain, const PromptTemplate& tmpl) {
  std::string out;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    if (i) out += tmpl.step_delimiter;
    out += chain.steps[i].text;
  }
  return out;
}

/// Preamble, then the steps joined by the delimiter. A non-empty `injection`
/// is placed after the last step (delimiter-separated) with nothing after
/// it, so generation continues from the injected text.
inline std::string render_prompt(const ReasoningChain& chain, const PromptTemplate& tmpl,
                                 std::optional<std::string_view> injection = std::nullopt) {
  std::string out = render_preamble(chain.task, tmpl);
  out += join_steps(chain, tmpl);
  if (injection) {
    if (!chain.steps.empty()) out += tmpl.step_delimiter;
    out += *injection;
  }
  return out;
}

/// What the model emits after the preamble: steps, then (when a summary
/// exists) the delimiter, think_close and the summary.
inline std::string render_response(const ReasoningChain& chain, const PromptTemplate& tmpl) {
  std::string out = join_steps(chain, tmpl);
  if (chain.summary) {
    if (!chain.steps.empty()) out += tmpl.step_delimiter;
    out += tmpl.think_close + tmpl.summary_separator + *chain.summary;
  }
  return out;
}

inline ReasoningChain append_step(ReasoningChain chain, Step step) {
  if (!chain.is_open()) {
    throw ChainClosed("cannot append to a closed chain (task " + chain.task.id + ")");
  }
  if (step.index != chain.steps.size() + 1) {
    throw IndexGap("expected step index " + std::to_string(chain.steps.size() + 1) + ", got " +
                   std::to_string(step.index));
  }
  chain.steps.push_back(std::move(step));
  return chain;
}

inline std::string_view to_string(StepKind k) {
  switch (k) {
    case StepKind::plain: return "plain";
    case StepKind::reflection_start: return "reflection_start";
    case StepKind::injected: return "injected";
    case StepKind::answer: return "answer";
    case StepKind::summary: return "summary";
  }
  return "plain";
}

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::open: return "open";
    case Termination::early_stopped: return "early_stopped";
    case Termination::natural_end: return "natural_end";
    case Termination::budget_exhausted: return "budget_exhausted";
    case Termination::discarded: return "discarded";
  }
  return "open";
}

inline std::optional<StepKind> step_kind_from_string(std::string_view s) {
  for (auto k : {StepKind::plain, StepKind::reflection_start, StepKind::injected,
                 StepKind::answer, StepKind::summary}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline std::optional<Termination> termination_from_string(std::string_view s) {
  for (auto t : {Termination::open, Termination::early_stopped, Termination::natural_end,
                 Termination::budget_exhausted, Termination::discarded}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

}  // namespace concise
