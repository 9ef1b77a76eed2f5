#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "concise/backend.hpp"
#include "concise/chain.hpp"
#include "concise/errors.hpp"
#include "concise/text.hpp"

namespace concise {

/// Lowercase reflection keywords matched as plain substrings.
struct KeywordSet {
  std::vector<std::string> keywords = {
      "wait",       "alternatively",  "check",     "reconsider", "reflect",
      "rethink",    "reconsidering",  "reviewing", "reassess",   "pause",
      "second thought", "reevaluate", "verify",    "think again"};

  static KeywordSet from(std::vector<std::string> words) {
    if (words.empty()) throw ConfigInvalid("keyword set must be non-empty");
    KeywordSet ks;
    ks.keywords.clear();
    for (auto& w : words) ks.keywords.push_back(text::fold_case(w));
    return ks;
  }
};

/// Case-insensitive substring test: "check" matches "double-check".
inline bool is_reflection_start(std::string_view step_text, const KeywordSet& keywords) {
  const std::string folded = text::fold_case(step_text);
  for (const auto& k : keywords.keywords) {
    if (!k.empty() && folded.find(k) != std::string::npos) return true;
  }
  return false;
}

/// Reflection groups (runs of consecutive step ordinals) plus the first
/// step at which the final answer appears.
struct JudgeAnnotation {
  std::vector<std::vector<std::size_t>> groups;
  std::size_t fas_index = 1;

  bool operator==(const JudgeAnnotation&) const = default;

  bool is_reflection(std::size_t step) const {
    for (const auto& g : groups) {
      for (auto s : g) {
        if (s == step) return true;
      }
    }
    return false;
  }
};

/// Throws ParseFailure naming the first violated constraint.
inline void validate_annotation(const JudgeAnnotation& a) {
  if (a.fas_index < 1) throw ParseFailure("first answer step must be >= 1");
  std::set<std::size_t> seen;
  for (const auto& g : a.groups) {
    if (g.empty()) throw ParseFailure("empty reflection group");
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] < 1) throw ParseFailure("step ordinals start at 1");
      if (i && g[i] != g[i - 1] + 1) {
        throw ParseFailure("reflection group steps must be consecutive (Step" +
                           std::to_string(g[i - 1]) + ", Step" + std::to_string(g[i]) + ")");
      }
      if (!seen.insert(g[i]).second) {
        throw ParseFailure("Step" + std::to_string(g[i]) + " appears in more than one group");
      }
    }
  }
}

inline std::string format_annotation(const JudgeAnnotation& a) {
  std::string out = "Reflection Step: [";
  for (std::size_t gi = 0; gi < a.groups.size(); ++gi) {
    if (gi) out += ", ";
    out += "(";
    for (std::size_t i = 0; i < a.groups[gi].size(); ++i) {
      if (i) out += ", ";
      out += "Step" + std::to_string(a.groups[gi][i]);
    }
    out += ")";
  }
  out += "]\nFirst Answer Step: Step" + std::to_string(a.fas_index);
  return out;
}

namespace detail {

class JudgeScanner {
 public:
  explicit JudgeScanner(std::string_view raw) : raw_(raw), folded_(text::fold_case(raw)) {}

  JudgeAnnotation parse() {
    JudgeAnnotation out;
    out.groups = parse_groups();
    out.fas_index = parse_fas();
    validate_annotation(out);
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    const std::size_t from = std::min(at, raw_.size());
    const std::string span(raw_.substr(from, 40));
    throw ParseFailure(what + " at offset " + std::to_string(from) + ": \"" + span + "\"");
  }

  void skip_space_and_markup() {
    while (pos_ < raw_.size() && (text::is_space(raw_[pos_]) || raw_[pos_] == '*')) ++pos_;
  }

  bool consume(char c) {
    skip_space_and_markup();
    if (pos_ < raw_.size() && raw_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::size_t parse_step_ref() {
    skip_space_and_markup();
    if (folded_.compare(pos_, 4, "step") != 0) fail("expected StepN", pos_);
    pos_ += 4;
    while (pos_ < raw_.size() && raw_[pos_] == ' ') ++pos_;
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < raw_.size() && std::isdigit(static_cast<unsigned char>(raw_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(raw_[pos_] - '0');
      ++pos_;
    }
    if (pos_ == start) fail("expected a step number", start);
    return value;
  }

  // Positions `pos_` just after "<label>" and an optional ':'.
  bool seek_label(std::initializer_list<std::string_view> labels) {
    std::size_t best = std::string::npos;
    std::size_t len = 0;
    for (auto l : labels) {
      const std::size_t at = folded_.find(l);
      if (at < best) {
        best = at;
        len = l.size();
      }
    }
    if (best == std::string::npos) return false;
    pos_ = best + len;
    consume(':');
    return true;
  }

  std::vector<std::vector<std::size_t>> parse_groups() {
    if (!seek_label({"reflection step"})) fail("missing 'Reflection Step' field", 0);
    // tolerate the plural form
    if (pos_ < raw_.size() && (raw_[pos_] == 's' || raw_[pos_] == 'S')) {
      ++pos_;
      consume(':');
    }
    const std::size_t open = pos_;
    if (!consume('[')) fail("expected '[' after 'Reflection Step'", open);
    std::vector<std::vector<std::size_t>> groups;
    if (consume(']')) return groups;
    while (true) {
      const std::size_t group_at = pos_;
      std::vector<std::size_t> group;
      const bool parenthesized = consume('(');
      group.push_back(parse_step_ref());
      if (parenthesized) {
        while (consume(',')) group.push_back(parse_step_ref());
        if (!consume(')')) fail("unterminated reflection group", group_at);
      }
      groups.push_back(std::move(group));
      if (consume(',')) continue;
      if (consume(']')) return groups;
      fail("expected ',' or ']' in reflection list", pos_);
    }
  }

  std::size_t parse_fas() {
    // The judge prompt's own example writes "First Correct Step".
    if (!seek_label({"first answer step", "first correct step"})) {
      fail("missing 'First Answer Step' field", raw_.size());
    }
    return parse_step_ref();
  }

  std::string_view raw_;
  std::string folded_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Reads "Reflection Step: [(StepA, StepB), (StepC)]" and
/// "First Answer Step: StepN" (or "First Correct Step") out of free text.
inline JudgeAnnotation parse_judge_output(std::string_view raw) {
  return detail::JudgeScanner(raw).parse();
}

inline constexpr std::string_view kJudgePromptTemplate =
    R"(You are an AI assistant trained to analyze reasoning steps in a response. Your task has two parts:
1. Examine each reasoning step to determine if it's part of a reflection process.
2. Identify the earliest step where the final answer (as later shown in boxed{}) is first derived, regardless of whether it is formally written or boxed at that moment.

### [Definition of Reflection]:
1. A reflection process is a sequence of one or more reasoning steps that recheck or doubt a previously made conclusion, such as double-checking calculations, using alternative methods.
2. Typical signals include (but are not limited to): 'Wait', 'Alternatively', 'Just to double check', 'But hold on', etc. These signals usually mean the start of a new reflection process.
3. However, even without such phrases, if the content of a step reflects a verification or reevaluation, it should be marked as a part of a reflection process.

### [Output Format]:
1. Reflection Step: List all reflection processes as groups of steps.
    - If Step3 and Step4 form a reflection, write as (Step3, Step4)
    - If Step5, Step6, Step7 form a new reflection process together, list as a separate group: [(Step3, Step4), (Step5, Step6, Step7)]
    - Avoid putting a lot of steps into one single reflection process.
2. First Answer Step: Write the earliest step where the final answer is first derived(e.g., Step2).

### [Example]:
Question: 2 + 3 = ?
Response:
Step1: I start with 2 + 3.
Step2: That gives me 5.
Step3: Wait, is that right? Let me make sure...
Step4: But hold on, let me double-check. Maybe I should...
Step5: Wait, no, I think...
Step6: Therefore, the result is 5
Step7: Alternatively, if I use...
Step8: So, the answer is 5
Step9: **Final Answer**: the answer is boxed{5}.
Output:
Reflection Step: [(Step3), (Step4), (Step5, Step6), (Step7, Step8)]
First Correct Step: Step2
Explanations for Reflection Step:
    - There is 'wait', a reflection keyword, in Step3, so Step3 is the start of a reflection process.
    - There is 'But hold on' in step4, so step4 means the start of a new reflection process.
    - Then, there is 'wait' in step5, so step5 means the start of a new reflection process.
    - There is 'therefore' in step6, so (step5,step6) is in the same refleciton process.
    - There is 'alternatively' in step7, so step7 is the start of a new reflection process.
    - There is 'so' in step8, so (step7,step8) is in the same reflection process.

### [Task]:
Now analyze the following question and response:
Question: {question}
Response: {response}
Please output the reflection steps and the first correct step in the format without extra explanation.
)";

struct JudgePrompt {
  std::string text;
  std::vector<std::string> warnings;
};

/// "Step1: ...\nStep2: ..." in chain order.
inline std::string render_judge_response(const ReasoningChain& chain) {
  std::string out;
  for (const auto& s : chain.steps) {
    if (!out.empty()) out += "\n";
    out += "Step" + std::to_string(s.index) + ": " + s.text;
  }
  return out;
}

inline JudgePrompt build_judge_prompt(const Task& task, const ReasoningChain& chain) {
  if (chain.steps.empty()) throw EmptyChain("judge prompt needs at least one step (task " + task.id + ")");
  JudgePrompt out;
  for (const auto& s : chain.steps) {
    const std::string folded = text::fold_case(s.text);
    for (std::size_t at = folded.find("step"); at != std::string::npos; at = folded.find("step", at + 4)) {
      std::size_t j = at + 4;
      while (j < folded.size() && std::isdigit(static_cast<unsigned char>(folded[j]))) ++j;
      if (j > at + 4 && j < folded.size() && folded[j] == ':') {
        out.warnings.push_back("Step" + std::to_string(s.index) +
                               " text contains a step label and may confuse the judge");
        break;
      }
    }
  }
  // Substitute the response last so braces inside step text are never re-expanded.
  std::string prompt = text::replace_all(std::string(kJudgePromptTemplate), "{question}", task.question);
  const std::size_t slot = prompt.rfind("{response}");
  prompt.replace(slot, std::string_view("{response}").size(), render_judge_response(chain));
  out.text = std::move(prompt);
  return out;
}

/// Keyword detector applied per step. It only sees reflection starts, so
/// every group is a singleton. The FAS comes from the chain when known,
/// otherwise it is the first step containing the final answer (or the
/// ground truth when no answer was recorded).
inline JudgeAnnotation annotate_rule_based(const ReasoningChain& chain, const KeywordSet& keywords) {
  JudgeAnnotation out;
  for (const auto& s : chain.steps) {
    if (is_reflection_start(s.text, keywords)) out.groups.push_back({s.index});
  }
  if (chain.fas_index) {
    out.fas_index = *chain.fas_index;
    return out;
  }
  std::optional<std::string> answer = chain.final_answer;
  if (!answer || text::trim(*answer).empty()) answer = chain.task.ground_truth;
  if (answer && !text::trim(*answer).empty()) {
    const std::string needle(text::trim(*answer));
    for (const auto& s : chain.steps) {
      if (s.text.find(needle) != std::string::npos) {
        out.fas_index = s.index;
        return out;
      }
    }
  }
  throw FasUnknown("cannot locate the first answer step for task " + chain.task.id);
}

struct JudgeSettings {
  CompletionRequest gen{.prompt = {}, .max_tokens = 512, .temperature = 0.0, .top_p = 1.0, .stop = {}, .seed = std::nullopt};
  // Judges degrade on long chains; longer ones are flagged, not refused.
  std::size_t token_cap = 5000;
};

struct JudgeResult {
  JudgeAnnotation annotation;
  bool unreliable = false;
  std::vector<std::string> warnings;
  std::string raw;
};

inline JudgeResult annotate_with_judge(const ReasoningChain& chain, const JudgeSettings& settings,
                                       const Backend& judge) {
  JudgePrompt prompt = build_judge_prompt(chain.task, chain);
  CompletionRequest req = settings.gen;
  req.prompt = prompt.text;
  req.stop.clear();
  JudgeResult out;
  out.raw = judge.generate(req).text;
  out.annotation = parse_judge_output(out.raw);
  out.unreliable = chain_tokens(chain) > settings.token_cap;
  out.warnings = std::move(prompt.warnings);
  return out;
}

}  // namespace concise
