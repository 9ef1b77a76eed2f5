#include <gtest/gtest.h>

#include "concise/scripted_backend.hpp"

using namespace concise;
using nlohmann::json;

namespace {

CompletionRequest req(std::string prompt, std::vector<std::string> stop = {}, int max_tokens = 1024) {
  CompletionRequest r;
  r.prompt = std::move(prompt);
  r.stop = std::move(stop);
  r.max_tokens = max_tokens;
  return r;
}

ScriptedBackend backend() {
  return ScriptedBackend(json{{"entries",
                               {{{"prompt", "q1"}, {"text", "Compute 7*5 = 35.\n\nWait, is that right?"}},
                                {{"prompt", "q2  \n"}, {"text", "one two three four five"}},
                                {{"prompt", "p"}, {"distribution", {{"confident", 0.3}, {"sure", 0.2}, {"pretty", 0.5}}}},
                                {{"prompt", "dup"}, {"distribution", {{" confident", 0.2}, {"confident", 0.1}, {"x", 0.3}}}},
                                {{"prompt", "flat"},
                                 {"distribution", {{"a", 0.24}, {"b", 0.25}, {"c", 0.26}, {"d", 0.25}}}},
                                {{"prompt", "seeded"}, {"text", "default"}, {"seeded", {{"3", "three"}}}}}}});
}

}  // namespace

TEST(ScriptedBackend, LookupAndStopTruncation) {
  const auto b = backend();
  const auto full = b.generate(req("q1"));
  EXPECT_EQ(full.finish_reason, FinishReason::eos);
  EXPECT_EQ(full.text, "Compute 7*5 = 35.\n\nWait, is that right?");

  const auto cut = b.generate(req("q1", {"\n\n"}));
  EXPECT_EQ(cut.text, "Compute 7*5 = 35.");
  EXPECT_EQ(cut.finish_reason, FinishReason::stop);
  EXPECT_EQ(cut.text.find("\n\n"), std::string::npos);
  EXPECT_EQ(cut.token_count, 4u);
}

TEST(ScriptedBackend, TrailingWhitespaceIsNormalizedOnBothSides) {
  const auto b = backend();
  EXPECT_EQ(b.generate(req("q2")).text, "one two three four five");
  EXPECT_EQ(b.generate(req("q1 \n\n")).finish_reason, FinishReason::eos);
}

TEST(ScriptedBackend, MissingPromptIsScriptMiss) {
  const auto b = backend();
  EXPECT_THROW(b.generate(req("nothing here")), ScriptMiss);
  EXPECT_THROW(b.next_token_distribution("q1", 20), ScriptMiss);
  EXPECT_THROW(b.generate(req(" q1")), ScriptMiss);
}

TEST(ScriptedBackend, MaxTokensTruncatesWithLengthFinish) {
  const auto r = backend().generate(req("q2", {}, 2));
  EXPECT_EQ(r.text, "one two");
  EXPECT_EQ(r.finish_reason, FinishReason::length);
  EXPECT_EQ(r.token_count, 2u);
}

TEST(ScriptedBackend, SeededOverrides) {
  const auto b = backend();
  auto r = req("seeded");
  EXPECT_EQ(b.generate(r).text, "default");
  r.seed = 3;
  EXPECT_EQ(b.generate(r).text, "three");
  r.seed = 4;
  EXPECT_EQ(b.generate(r).text, "default");
}

TEST(ScriptedBackend, DistributionSortedAndTruncated) {
  const auto b = backend();
  const auto d = b.next_token_distribution("p", 20);
  ASSERT_EQ(d.entries.size(), 3u);
  EXPECT_EQ(d.entries[0].token, "pretty");
  EXPECT_DOUBLE_EQ(d.entries[0].probability, 0.5);
  EXPECT_TRUE(d.valid());

  const auto top1 = b.next_token_distribution("flat", 1);
  ASSERT_EQ(top1.entries.size(), 1u);
  EXPECT_EQ(top1.entries[0].token, "c");
}

TEST(ScriptedBackend, SurfaceVariantsPreservedVerbatim) {
  const auto d = backend().next_token_distribution("dup", 20);
  ASSERT_EQ(d.entries.size(), 3u);
  EXPECT_EQ(d.entries[1].token, " confident");
  EXPECT_EQ(d.entries[2].token, "confident");
}

TEST(ScriptedBackend, ProbingCanBeDisabled) {
  auto b = backend();
  b.set_probing_supported(false);
  EXPECT_THROW(b.next_token_distribution("p", 20), ProbeUnsupported);
}

TEST(ScriptedBackend, CountTokensIsWhitespaceWords) {
  const auto b = backend();
  EXPECT_EQ(b.count_tokens(""), 0u);
  EXPECT_EQ(b.count_tokens("ab cd ef"), 3u);
}

TEST(ScriptedBackend, Deterministic) {
  const auto b1 = backend();
  const auto b2 = backend();
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(b1.generate(req("q1", {"\n\n"})).text, b2.generate(req("q1", {"\n\n"})).text);
    EXPECT_EQ(b1.next_token_distribution("p", 20).entries, b2.next_token_distribution("p", 20).entries);
  }
}

TEST(ScriptedBackend, InvalidScriptsRejected) {
  EXPECT_THROW(ScriptedBackend(json{{"entries", {{{"prompt", "a"}, {"distribution", {{"x", 0.7}, {"y", 0.6}}}}}}}),
               ConfigInvalid);
  EXPECT_THROW(ScriptedBackend(json{{"entries", {{{"prompt", "a"}, {"distribution", {{"x", -0.1}}}}}}}),
               ConfigInvalid);
  EXPECT_THROW(ScriptedBackend(json{{"entries", {{{"prompt", "a"}, {"text", "x"}}, {{"prompt", "a "}, {"text", "y"}}}}}),
               ConfigInvalid);
  EXPECT_THROW(ScriptedBackend(json{{"nope", 1}}), ConfigInvalid);
}

TEST(CompletionRequest, Validation) {
  auto r = req("x");
  r.max_tokens = 0;
  EXPECT_THROW(r.validate(), InvalidRequest);
  r = req("x", {""});
  EXPECT_THROW(r.validate(), InvalidRequest);
  r = req("x");
  r.top_p = 0.0;
  EXPECT_THROW(r.validate(), InvalidRequest);
  r = req("x");
  r.temperature = -1;
  EXPECT_THROW(r.validate(), InvalidRequest);
}

TEST(TruncateAtStop, EarliestStopWins) {
  std::string s = "abc END def STOP";
  EXPECT_TRUE(truncate_at_stop(s, {"STOP", "END"}));
  EXPECT_EQ(s, "abc ");
  std::string t = "no stop";
  EXPECT_FALSE(truncate_at_stop(t, {"\n\n"}));
}
