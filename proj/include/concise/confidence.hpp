#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "concise/backend.hpp"
#include "concise/chain.hpp"
#include "concise/errors.hpp"
#include "concise/reflect.hpp"
#include "concise/rng.hpp"
#include "concise/text.hpp"

namespace concise {

struct DetectorConfig {
  std::string probing_prompt = "So, I'm";
  std::vector<std::string> indicative_words = {"confident", "sure"};
  std::string composite_prefix = "pretty";
  double threshold = 0.5;  // t_e
  std::size_t top_k = 20;

  void validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigInvalid("t_e must be in [0, 1]");
    if (indicative_words.empty()) throw ConfigInvalid("indicative_words must be non-empty");
    if (top_k < 1) throw ConfigInvalid("top_k must be >= 1");
  }
};

struct ConfidenceReading {
  double value = 0.0;
  std::map<std::string, double> components;         // first probe, per indicative word
  double composite_mass = 0.0;                      // first probe, composite prefix
  std::map<std::string, double> second_components;  // probe after the composite prefix
  bool second_query_used = false;
  double topk_mass = 0.0;  // total mass the first probe exposed
  std::size_t after_step = 0;
  std::string probe_prompt;
};

/// Probability mass on `word`, merging surface variants (" Sure", "sure").
inline double token_mass(const TokenDistribution& dist, std::string_view word) {
  const std::string target = text::fold_case(text::trim(word));
  double mass = 0.0;
  for (const auto& e : dist.entries) {
    if (text::fold_case(text::trim(e.token)) == target) mass += e.probability;
  }
  return mass;
}

/// Indicative mass of the first probe, plus composite-prefix mass times the
/// indicative mass after "<probe> <prefix>". `second` may be absent only
/// when the composite mass is zero.
inline ConfidenceReading confidence_from_distributions(const TokenDistribution& first,
                                                       const TokenDistribution* second,
                                                       const DetectorConfig& cfg) {
  ConfidenceReading r;
  double direct = 0.0;
  for (const auto& w : cfg.indicative_words) {
    const double m = token_mass(first, w);
    r.components[w] = m;
    direct += m;
  }
  r.composite_mass = cfg.composite_prefix.empty() ? 0.0 : token_mass(first, cfg.composite_prefix);
  r.topk_mass = first.total_mass();
  double after_prefix = 0.0;
  if (second) {
    r.second_query_used = true;
    for (const auto& w : cfg.indicative_words) {
      const double m = token_mass(*second, w);
      r.second_components[w] = m;
      after_prefix += m;
    }
  }
  r.value = direct + r.composite_mass * after_prefix;
  return r;
}

/// Probe text appended to the chain: a fresh step reading "So, I'm".
inline std::string probe_prompt(const ReasoningChain& chain, const PromptTemplate& tmpl,
                                const DetectorConfig& cfg) {
  return render_prompt(chain, tmpl, cfg.probing_prompt);
}

/// One probe; a second one only when the composite prefix carries mass.
inline ConfidenceReading detect_confidence(const ReasoningChain& chain, const PromptTemplate& tmpl,
                                           const DetectorConfig& cfg, const Backend& backend) {
  const std::string prompt = probe_prompt(chain, tmpl, cfg);
  const TokenDistribution first = backend.next_token_distribution(prompt, cfg.top_k);
  ConfidenceReading r;
  if (!cfg.composite_prefix.empty() && token_mass(first, cfg.composite_prefix) > 0.0) {
    const TokenDistribution second =
        backend.next_token_distribution(prompt + " " + cfg.composite_prefix, cfg.top_k);
    r = confidence_from_distributions(first, &second, cfg);
  } else {
    r = confidence_from_distributions(first, nullptr, cfg);
  }
  r.probe_prompt = prompt;
  r.after_step = chain.size();
  return r;
}

struct PhrasePool {
  std::vector<std::string> phrases = {
      "Therefore",
      "The reasoning holds",
      "Previous steps are correct",
      "All steps are valid",
      "With this established",
      "That sounds reasonable",
      "Let's go ahead",
      "Alright, let's carry on",
      "Let's proceed",
      "Let’s progress",
      "So, putting it all together",
      "The logic stands firm",
      "The reasoning process is valid",
      "Good, let's keep going",
      "Everything seems reasonable so far",
      "This part checks out",
      "I think that's solid. So",
      "The reasoning holds, let's keep going",
      "Everything checks out, let's move on",
      "All steps are solid, let's move forward",
  };

  static PhrasePool from(std::vector<std::string> phrases) {
    if (phrases.empty()) throw EmptyPool("phrase pool must be non-empty");
    std::set<std::string> seen;
    for (const auto& p : phrases) {
      if (p.empty()) throw ConfigInvalid("phrase pool entries must be non-empty");
      if (!seen.insert(p).second) throw ConfigInvalid("duplicate phrase in pool: " + p);
    }
    PhrasePool pool;
    pool.phrases = std::move(phrases);
    return pool;
  }

  bool contains(std::string_view p) const {
    for (const auto& q : phrases) {
      if (q == p) return true;
    }
    return false;
  }
};

inline const std::string& sample_phrase(const PhrasePool& pool, Rng& rng) {
  if (pool.phrases.empty()) throw EmptyPool("cannot sample from an empty phrase pool");
  return pool.phrases[uniform_index(rng, pool.phrases.size())];
}

struct PhraseEvalRow {
  std::string phrase;
  double rate = 0.0;  // reflections / evaluated points
  std::size_t points = 0;
  std::size_t skipped = 0;
};

struct PhraseEvalSettings {
  PromptTemplate tmpl;
  CompletionRequest gen;  // prompt and stop are filled per point
};

/// For each candidate, injects it at every point (a chain prefix whose
/// natural next step was a reflection), regenerates that step, and reports
/// how often the continuation still opens a reflection. Only the generated
/// continuation is classified; several pool phrases contain keywords
/// themselves ("This part checks out"). Failed points are skipped and tallied.
inline std::vector<PhraseEvalRow> evaluate_phrase_pool(const std::vector<std::string>& candidates,
                                                       const std::vector<ReasoningChain>& points,
                                                       const KeywordSet& keywords,
                                                       const PhraseEvalSettings& settings,
                                                       const Backend& backend) {
  std::vector<PhraseEvalRow> rows;
  rows.reserve(candidates.size());
  for (const auto& phrase : candidates) {
    PhraseEvalRow row;
    row.phrase = phrase;
    std::size_t reflections = 0;
    for (const auto& point : points) {
      CompletionRequest req = settings.gen;
      req.prompt = render_prompt(point, settings.tmpl, phrase);
      req.stop = {settings.tmpl.step_delimiter};
      try {
        const CompletionResult res = backend.generate(req);
        ++row.points;
        if (is_reflection_start(res.text, keywords)) ++reflections;
      } catch (const BackendError&) {
        ++row.skipped;
      }
    }
    row.rate = row.points ? static_cast<double>(reflections) / static_cast<double>(row.points) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace concise
