#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "concise/backend.hpp"
#include "concise/errors.hpp"
#include "concise/text.hpp"

namespace concise {

/// What the scripted backend answers for one prompt key.
struct ScriptRecord {
  std::optional<std::string> text;
  std::map<std::uint64_t, std::string> seeded;  // per-seed overrides of `text`
  std::optional<std::vector<TokenProb>> distribution;
};

/// Deterministic backend for tests and desk demos.
///
/// Prompts are looked up by exact match after trimming trailing whitespace.
/// A prompt with no entry is a hard failure (ScriptMiss). Tokens are
/// whitespace-separated words. No state changes after construction.
///
/// Script JSON:
///   {"entries": [
///      {"prompt": "...", "text": "...", "seeded": {"7": "..."}},
///      {"prompt": "...", "distribution": [["confident", 0.3], ["sure", 0.2]]}
///   ]}
/// A distribution may also be given as an object {"token": p, ...}.
class ScriptedBackend final : public Backend {
 public:
  ScriptedBackend() = default;

  explicit ScriptedBackend(const nlohmann::json& script) { load(script); }

  static ScriptedBackend from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open script file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigInvalid("script " + path + ": " + e.what());
    }
    return ScriptedBackend(j);
  }

  static std::string normalize(std::string_view prompt) {
    return std::string(text::trim_right(prompt));
  }

  void set_probing_supported(bool supported) { probing_supported_ = supported; }

  const std::map<std::string, ScriptRecord>& records() const { return records_; }

  CompletionResult generate(const CompletionRequest& request) const override {
    request.validate();
    const ScriptRecord& rec = lookup(request.prompt);
    const std::string* scripted = nullptr;
    if (request.seed) {
      if (auto it = rec.seeded.find(*request.seed); it != rec.seeded.end()) scripted = &it->second;
    }
    if (!scripted && rec.text) scripted = &*rec.text;
    if (!scripted) throw ScriptMiss("script entry has no completion text: " + excerpt(request.prompt));

    CompletionResult result;
    result.text = *scripted;
    result.finish_reason = FinishReason::eos;
    if (truncate_at_stop(result.text, request.stop)) result.finish_reason = FinishReason::stop;

    const auto words = text::split_whitespace(result.text);
    if (words.size() > static_cast<std::size_t>(request.max_tokens)) {
      const auto& last = words[static_cast<std::size_t>(request.max_tokens) - 1];
      result.text.resize(static_cast<std::size_t>(last.data() + last.size() - result.text.data()));
      result.finish_reason = FinishReason::length;
    }
    result.token_count = count_tokens(result.text);
    return result;
  }

  TokenDistribution next_token_distribution(std::string_view prompt,
                                            std::size_t top_k) const override {
    if (!probing_supported_) throw ProbeUnsupported("scripted backend configured without probing");
    const ScriptRecord& rec = lookup(prompt);
    if (!rec.distribution) throw ScriptMiss("script entry has no distribution: " + excerpt(prompt));
    return TokenDistribution::from_entries(*rec.distribution, top_k);
  }

  std::size_t count_tokens(std::string_view s) const override { return text::count_words(s); }

 private:
  static std::string excerpt(std::string_view prompt) {
    constexpr std::size_t kTail = 160;
    const std::string_view t = text::trim_right(prompt);
    if (t.size() <= kTail) return "\"" + std::string(t) + "\"";
    return "\"..." + std::string(t.substr(t.size() - kTail)) + "\"";
  }

  const ScriptRecord& lookup(std::string_view prompt) const {
    auto it = records_.find(normalize(prompt));
    if (it == records_.end()) throw ScriptMiss("no script entry for prompt " + excerpt(prompt));
    return it->second;
  }

  static std::vector<TokenProb> parse_distribution(const nlohmann::json& d) {
    std::vector<TokenProb> out;
    if (d.is_object()) {
      for (const auto& [tok, p] : d.items()) out.push_back({tok, p.get<double>()});
    } else if (d.is_array()) {
      for (const auto& pair : d) {
        if (!pair.is_array() || pair.size() != 2) {
          throw ConfigInvalid("distribution entries must be [token, probability] pairs");
        }
        out.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
      }
    } else {
      throw ConfigInvalid("distribution must be an array or object");
    }
    double mass = 0.0;
    for (const auto& e : out) {
      if (!(e.probability >= 0.0 && e.probability <= 1.0)) {
        throw ConfigInvalid("probability out of [0,1] for token '" + e.token + "'");
      }
      mass += e.probability;
    }
    if (mass > 1.0 + 1e-6) throw ConfigInvalid("distribution mass exceeds 1");
    return out;
  }

  void load(const nlohmann::json& script) {
    try {
      const auto& entries = script.at("entries");
      for (const auto& e : entries) {
        ScriptRecord rec;
        if (e.contains("text")) rec.text = e.at("text").get<std::string>();
        if (e.contains("seeded")) {
          for (const auto& [seed, t] : e.at("seeded").items()) {
            rec.seeded.emplace(std::stoull(seed), t.get<std::string>());
          }
        }
        if (e.contains("distribution")) rec.distribution = parse_distribution(e.at("distribution"));
        auto key = normalize(e.at("prompt").get<std::string>());
        auto [it, inserted] = records_.try_emplace(std::move(key), rec);
        if (!inserted) merge(it->second, std::move(rec), it->first);
      }
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigInvalid(std::string("malformed script: ") + ex.what());
    }
  }

  // Entries for one prompt may be split (completion in one, distribution in another).
  static void merge(ScriptRecord& into, ScriptRecord from, const std::string& key) {
    auto conflict = [&] { throw ConfigInvalid("conflicting script entries for prompt " + excerpt(key)); };
    if (from.text) {
      if (into.text && *into.text != *from.text) conflict();
      into.text = std::move(from.text);
    }
    for (auto& [seed, t] : from.seeded) {
      auto [it, inserted] = into.seeded.try_emplace(seed, t);
      if (!inserted && it->second != t) conflict();
    }
    if (from.distribution) {
      if (into.distribution && *into.distribution != *from.distribution) conflict();
      into.distribution = std::move(from.distribution);
    }
  }

  std::map<std::string, ScriptRecord> records_;
  bool probing_supported_ = true;
};

}  // namespace concise
