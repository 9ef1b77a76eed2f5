#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "concise/errors.hpp"

namespace concise {

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 1024;
  double temperature = 0.6;
  double top_p = 0.95;
  std::vector<std::string> stop;
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (max_tokens < 1) throw InvalidRequest("max_tokens must be >= 1");
    if (temperature < 0.0) throw InvalidRequest("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidRequest("top_p must be in (0, 1]");
    for (const auto& s : stop) {
      if (s.empty()) throw InvalidRequest("stop sequences must be non-empty");
    }
  }
};

enum class FinishReason { stop, length, eos };

inline std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::eos: return "eos";
  }
  return "eos";
}

struct CompletionResult {
  std::string text;  // never contains a matched stop sequence
  FinishReason finish_reason = FinishReason::eos;
  std::size_t token_count = 0;
};

struct TokenProb {
  std::string token;
  double probability = 0.0;

  bool operator==(const TokenProb&) const = default;
};

/// Top-k next-token candidates, sorted by descending probability.
struct TokenDistribution {
  std::vector<TokenProb> entries;
  std::size_t top_k = 0;

  double total_mass() const {
    double m = 0.0;
    for (const auto& e : entries) m += e.probability;
    return m;
  }

  /// Stable descending sort then truncation; equal probabilities keep input order.
  static TokenDistribution from_entries(std::vector<TokenProb> entries, std::size_t top_k) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const TokenProb& a, const TokenProb& b) { return a.probability > b.probability; });
    if (entries.size() > top_k) entries.resize(top_k);
    return TokenDistribution{std::move(entries), top_k};
  }

  bool valid() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double p = entries[i].probability;
      if (!(p >= 0.0 && p <= 1.0)) return false;
      if (i && entries[i - 1].probability < p) return false;
    }
    return entries.size() <= top_k && total_mass() <= 1.0 + 1e-6;
  }
};

/// Text-completion backend. Implementations must be safe to call
/// concurrently from several pipeline runs.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual CompletionResult generate(const CompletionRequest& request) const = 0;

  virtual TokenDistribution next_token_distribution(std::string_view prompt,
                                                    std::size_t top_k) const = 0;

  virtual std::size_t count_tokens(std::string_view text) const = 0;
};

/// Cuts `text` at the earliest stop sequence. Returns true when one matched.
inline bool truncate_at_stop(std::string& text, const std::vector<std::string>& stop) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stop) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  if (cut == std::string::npos) return false;
  text.resize(cut);
  return true;
}

}  // namespace concise
