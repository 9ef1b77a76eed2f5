#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "concise/answer.hpp"
#include "concise/chain.hpp"
#include "concise/errors.hpp"
#include "concise/jsonl.hpp"
#include "concise/records.hpp"
#include "concise/reflect.hpp"

namespace concise {

struct ChainStats {
  std::size_t tokens = 0;  // steps plus summary
  std::size_t step_num = 0;
  double step_len = 0.0;  // mean step tokens
  std::size_t ref_num = 0;
  std::size_t non_ref_num = 0;
  // Split at the FAS; the FAS step itself counts as post-FAS.
  std::size_t pre_fas_ref_num = 0;
  std::size_t post_fas_ref_num = 0;
};

inline ChainStats chain_stats(const ReasoningChain& chain, const JudgeAnnotation& annotation) {
  const std::size_t n = chain.size();
  for (const auto& g : annotation.groups) {
    for (auto s : g) {
      if (s < 1 || s > n) {
        throw IndexOutOfRange("annotation references Step" + std::to_string(s) + " but chain " +
                              chain.task.id + " has " + std::to_string(n) + " steps");
      }
    }
  }
  if (annotation.fas_index < 1 || annotation.fas_index > n) {
    throw IndexOutOfRange("first answer step " + std::to_string(annotation.fas_index) + " outside chain " +
                          chain.task.id);
  }
  ChainStats st;
  st.step_num = n;
  std::size_t step_tokens = 0;
  for (const auto& s : chain.steps) {
    step_tokens += s.token_count;
    if (annotation.is_reflection(s.index)) {
      ++st.ref_num;
      if (s.index < annotation.fas_index) {
        ++st.pre_fas_ref_num;
      } else {
        ++st.post_fas_ref_num;
      }
    }
  }
  st.non_ref_num = n - st.ref_num;
  st.tokens = step_tokens + chain.summary_token_count;
  st.step_len = n ? static_cast<double>(step_tokens) / static_cast<double>(n) : 0.0;
  return st;
}

/// Fraction of (predicted, ground truth) pairs that verify.
inline double accuracy(const std::vector<std::pair<std::string, std::string>>& results) {
  if (results.empty()) throw EmptyInput("accuracy over an empty result set");
  std::size_t ok = 0;
  for (const auto& [pred, gt] : results) ok += verify_answer(pred, gt) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

inline double compression_rate(double mean_tokens, double baseline_mean_tokens) {
  if (!(baseline_mean_tokens > 0.0)) throw ZeroBaseline("baseline mean token count must be positive");
  return mean_tokens / baseline_mean_tokens;
}

/// Whole-percent presentation of a ratio (0.582 -> 58).
inline long to_percent(double ratio) { return std::lround(ratio * 100.0); }

/// Unweighted mean across benchmark groups.
inline double unweighted_mean(const std::vector<double>& values) {
  if (values.empty()) throw EmptyInput("mean over no values");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

// -- threshold sweep ------------------------------------------------------------

enum class SweepBucket : std::size_t { pre_fas = 0, fas, ref1, ref2, ref3, ref4, ref5, beyond };

inline constexpr std::size_t kSweepBuckets = 8;

inline constexpr std::array<std::string_view, kSweepBuckets> kSweepBucketNames = {
    "pre_fas", "fas", "ref1", "ref2", "ref3", "ref4", "ref5", "beyond"};

/// First 1-based step whose reading exceeds the threshold.
inline std::optional<std::size_t> first_exceed(const std::vector<double>& probes, double threshold) {
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (probes[i] > threshold) return i + 1;
  }
  return std::nullopt;
}

/// Step fas + k lands in Ref k; past Ref5, or never exceeding, is "beyond".
inline SweepBucket bucket_for(std::optional<std::size_t> exceed_at, std::size_t fas) {
  if (!exceed_at) return SweepBucket::beyond;
  if (*exceed_at < fas) return SweepBucket::pre_fas;
  const std::size_t offset = *exceed_at - fas;
  if (offset > 5) return SweepBucket::beyond;
  return static_cast<SweepBucket>(static_cast<std::size_t>(SweepBucket::fas) + offset);
}

struct SweepHistogram {
  double threshold = 0.0;
  std::array<std::size_t, kSweepBuckets> counts{};

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::size_t operator[](SweepBucket b) const { return counts[static_cast<std::size_t>(b)]; }
};

inline std::vector<SweepHistogram> threshold_sweep(const std::vector<ProbeTrace>& traces,
                                                   const std::vector<double>& thresholds) {
  std::vector<SweepHistogram> out;
  for (double t : thresholds) {
    SweepHistogram h;
    h.threshold = t;
    for (const auto& trace : traces) {
      if (trace.probes.empty()) throw EmptyInput("probe trace " + trace.id + " is empty");
      ++h.counts[static_cast<std::size_t>(bucket_for(first_exceed(trace.probes, t), trace.fas))];
    }
    out.push_back(h);
  }
  return out;
}

inline Json to_json(const std::vector<SweepHistogram>& hs) {
  Json arr = Json::array();
  for (const auto& h : hs) {
    Json j;
    j["t_e"] = h.threshold;
    Json counts;
    for (std::size_t b = 0; b < kSweepBuckets; ++b) counts[std::string(kSweepBucketNames[b])] = h.counts[b];
    j["counts"] = std::move(counts);
    j["total"] = h.total();
    arr.push_back(std::move(j));
  }
  return arr;
}

// -- corpus report ----------------------------------------------------------------

struct ReportRow {
  std::string id;
  bool correct = false;
  std::size_t tokens = 0;
  std::size_t step_num = 0;
  double step_len = 0.0;
  std::size_t ref_num = 0;
  std::optional<std::size_t> pre_fas_ref;  // absent when the FAS is unknown
  std::optional<std::size_t> post_fas_ref;
  std::optional<double> cr;  // against this task's baseline chain
};

struct BenchmarkReport {
  double accuracy = 0.0;
  double mean_tokens = 0.0;
  double baseline_mean_tokens = 0.0;
  double compression_rate = 0.0;
  std::vector<ReportRow> rows;
};

/// Aggregates a corpus against a baseline corpus sharing its task ids.
/// Reflection structure comes from `annotations` when given for a chain,
/// otherwise from the keyword detector.
inline BenchmarkReport build_report(const std::vector<ReasoningChain>& corpus,
                                    const std::map<std::string, JudgeAnnotation>& annotations,
                                    const std::vector<ReasoningChain>& baseline, const KeywordSet& keywords) {
  if (corpus.empty()) throw EmptyInput("report over an empty corpus");
  std::map<std::string, const ReasoningChain*> base_by_id;
  for (const auto& b : baseline) base_by_id[b.task.id] = &b;

  BenchmarkReport rep;
  double tokens = 0.0;
  double base_tokens = 0.0;
  std::size_t correct = 0;
  for (const auto& chain : corpus) {
    auto base = base_by_id.find(chain.task.id);
    if (base == base_by_id.end()) throw BaselineMismatch("baseline has no chain for task " + chain.task.id);

    ReportRow row;
    row.id = chain.task.id;
    row.correct = chain.task.ground_truth && chain.final_answer &&
                  verify_answer(*chain.final_answer, *chain.task.ground_truth);
    row.tokens = chain_tokens(chain);
    row.step_num = chain.size();

    std::optional<JudgeAnnotation> ann;
    if (auto it = annotations.find(chain.task.id); it != annotations.end()) {
      ann = it->second;
    } else if (!chain.steps.empty()) {
      try {
        ann = annotate_rule_based(chain, keywords);
      } catch (const FasUnknown&) {
      }
    }
    if (ann) {
      const ChainStats st = chain_stats(chain, *ann);
      row.step_len = st.step_len;
      row.ref_num = st.ref_num;
      row.pre_fas_ref = st.pre_fas_ref_num;
      row.post_fas_ref = st.post_fas_ref_num;
    } else {
      std::size_t st = 0;
      for (const auto& s : chain.steps) {
        st += s.token_count;
        if (is_reflection_start(s.text, keywords)) ++row.ref_num;
      }
      row.step_len = chain.steps.empty() ? 0.0 : static_cast<double>(st) / static_cast<double>(chain.size());
    }
    const std::size_t bt = chain_tokens(*base->second);
    if (bt > 0) row.cr = static_cast<double>(row.tokens) / static_cast<double>(bt);

    tokens += static_cast<double>(row.tokens);
    base_tokens += static_cast<double>(bt);
    correct += row.correct ? 1 : 0;
    rep.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(corpus.size());
  rep.accuracy = static_cast<double>(correct) / n;
  rep.mean_tokens = tokens / n;
  rep.baseline_mean_tokens = base_tokens / n;
  rep.compression_rate = compression_rate(rep.mean_tokens, rep.baseline_mean_tokens);
  return rep;
}

struct GroupAverage {
  double accuracy = 0.0;
  double compression_rate = 0.0;
};

/// Average over benchmark groups, each group weighted equally.
inline GroupAverage average_over_groups(const std::vector<BenchmarkReport>& groups) {
  std::vector<double> acc;
  std::vector<double> cr;
  for (const auto& g : groups) {
    acc.push_back(g.accuracy);
    cr.push_back(g.compression_rate);
  }
  return {unweighted_mean(acc), unweighted_mean(cr)};
}

namespace detail {

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

inline std::string report_csv(const BenchmarkReport& rep) {
  std::string out = "id,acc,tokens,step_num,step_len,ref_num,pre_fas_ref,post_fas_ref,cr\n";
  for (const auto& r : rep.rows) {
    out += detail::csv_escape(r.id) + "," + (r.correct ? "1" : "0") + "," + std::to_string(r.tokens) + "," +
           std::to_string(r.step_num) + "," + detail::format_real(r.step_len) + "," +
           std::to_string(r.ref_num) + "," + (r.pre_fas_ref ? std::to_string(*r.pre_fas_ref) : "") + "," +
           (r.post_fas_ref ? std::to_string(*r.post_fas_ref) : "") + "," +
           (r.cr ? detail::format_real(*r.cr) : "") + "\n";
  }
  return out;
}

inline Json report_json(const BenchmarkReport& rep) {
  Json j;
  j["tasks"] = rep.rows.size();
  j["accuracy"] = rep.accuracy;
  j["mean_tokens"] = rep.mean_tokens;
  j["baseline_mean_tokens"] = rep.baseline_mean_tokens;
  j["compression_rate"] = rep.compression_rate;
  j["compression_rate_percent"] = to_percent(rep.compression_rate);
  return j;
}

}  // namespace concise
