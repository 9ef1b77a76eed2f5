#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "concise/dataset.hpp"
#include "concise/records.hpp"

using namespace concise;

namespace {

ReasoningChain chain_with(const std::string& id, std::vector<std::pair<std::string, std::size_t>> steps,
                          std::optional<std::string> summary = std::nullopt) {
  ReasoningChain c;
  c.task.id = id;
  c.task.question = "Question " + id;
  c.task.ground_truth = "5";
  for (auto& [text, tokens] : steps) {
    Step s;
    s.index = c.size() + 1;
    s.text = text;
    s.token_count = tokens;
    c = append_step(std::move(c), std::move(s));
  }
  if (summary) {
    c.summary = summary;
    c.summary_token_count = text::count_words(*summary);
  }
  c.final_answer = "5";
  c.terminated = Termination::early_stopped;
  return c;
}

BuildOutcome emitted(const std::string& id) {
  BuildOutcome o;
  o.status = BuildStatus::emitted;
  o.chain = chain_with(id, {{"Add 2 and 3.", 4}, {"So it is 5.", 4}}, "The answer is \\boxed{5}.");
  return o;
}

BuildOutcome discarded(const std::string& id) {
  BuildOutcome o;
  o.status = BuildStatus::discarded;
  o.chain = chain_with(id, {{"Add 2 and 4.", 4}});
  o.chain.final_answer.reset();
  o.chain.terminated = Termination::discarded;
  return o;
}

PlainSample sample(std::size_t tokens, bool correct) {
  PlainSample s;
  s.chain = chain_with("p", {{"step of " + std::to_string(tokens), tokens}});
  s.chain.terminated = Termination::natural_end;
  s.correct = correct;
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "concise_test_dataset";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(BuildSftDataset, KeepsOnlyEmittedChains) {
  const PromptTemplate tmpl;
  const std::vector<BuildOutcome> outcomes = {emitted("a"), discarded("b"), emitted("c"), emitted("d")};
  const auto [records, report] = build_sft_dataset(outcomes, tmpl);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].id, "a");
  EXPECT_EQ(records[2].id, "d");
  EXPECT_EQ(report.tasks_in, 4u);
  EXPECT_EQ(report.emitted, 3u);
  EXPECT_EQ(report.discarded, 1u);
}

TEST(BuildSftDataset, TargetIsStepsThinkCloseSummary) {
  const PromptTemplate tmpl;
  const auto [records, report] = build_sft_dataset({emitted("a")}, tmpl);
  EXPECT_EQ(records[0].target, "Add 2 and 3.\n\nSo it is 5.\n\n</think>\n\nThe answer is \\boxed{5}.");
  EXPECT_EQ(records[0].answer, "5");
  EXPECT_EQ(records[0].tokens, 8u + 4u);
  EXPECT_EQ(records[0].question, "Question a");
}

TEST(BuildSftDataset, InjectedPhraseSurvivesIntoTarget) {
  auto o = emitted("a");
  o.chain.steps[1].kind = StepKind::injected;
  o.chain.steps[1].injected_phrase = "Let's proceed";
  o.chain.steps[1].text = "Let's proceed, so it is 5.";
  const auto [records, report] = build_sft_dataset({o}, PromptTemplate{});
  EXPECT_NE(records[0].target.find("Let's proceed, so it is 5."), std::string::npos);
}

TEST(BuildPreferenceRecord, ChoosesLongestCorrectSample) {
  const PromptTemplate tmpl;
  const auto r = build_preference_record(emitted("a"), {sample(100, true), sample(250, true), sample(180, true)}, tmpl);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->rejected_tokens, 250u);
  EXPECT_EQ(r->rejected, "step of 250");
  EXPECT_EQ(r->chosen_tokens, 12u);
  EXPECT_TRUE(r->prompt.ends_with("<think>\n"));
  EXPECT_TRUE(r->chosen.starts_with("Add 2 and 3."));
}

TEST(BuildPreferenceRecord, IgnoresIncorrectAndSkipsWhenNoneCorrect) {
  const PromptTemplate tmpl;
  EXPECT_FALSE(build_preference_record(emitted("a"), {sample(300, false), sample(90, false)}, tmpl));
  const auto r = build_preference_record(emitted("a"), {sample(900, false), sample(40, true)}, tmpl);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->rejected_tokens, 40u);
  EXPECT_THROW(build_preference_record(discarded("b"), {sample(10, true)}, tmpl), InvalidRequest);
}

TEST(BuildPreferenceRecord, TiesKeepTheFirstSample) {
  auto first = sample(50, true);
  first.chain.steps[0].text = "first";
  auto second = sample(50, true);
  second.chain.steps[0].text = "second";
  const auto r = build_preference_record(emitted("a"), {first, second}, PromptTemplate{});
  EXPECT_TRUE(r->rejected.starts_with("first"));
}

TEST(BuildPreferenceRecord, ArgmaxAgreesWithLinearScanOracle) {
  std::mt19937 gen(77);
  for (int n = 0; n < 500; ++n) {
    std::vector<PlainSample> samples;
    const int k = 1 + static_cast<int>(gen() % 8);
    std::optional<std::size_t> best;
    for (int i = 0; i < k; ++i) {
      const std::size_t tokens = 1 + gen() % 400;
      const bool ok = gen() % 3 != 0;
      samples.push_back(sample(tokens, ok));
      if (ok && (!best || tokens > *best)) best = tokens;
    }
    const auto r = build_preference_record(emitted("a"), samples, PromptTemplate{});
    ASSERT_EQ(r.has_value(), best.has_value());
    if (r) {
      ASSERT_EQ(r->rejected_tokens, *best);
    }
  }
}

TEST(BuildDatasets, CountsPairsSkipsAndInversions) {
  std::vector<TaskRun> runs;
  runs.push_back({emitted("a"), {sample(100, true)}});
  runs.push_back({emitted("b"), {sample(100, false)}});
  runs.push_back({discarded("c"), {sample(100, true)}});
  runs.push_back({emitted("d"), {sample(5, true)}});
  const auto bundle = build_datasets(runs, PromptTemplate{}, true);
  EXPECT_EQ(bundle.sft.size(), 3u);
  EXPECT_EQ(bundle.preference.size(), 2u);
  EXPECT_EQ(bundle.report.preference_pairs, 2u);
  EXPECT_EQ(bundle.report.skipped_no_correct_sample, 1u);
  EXPECT_EQ(bundle.report.length_inversions, 1u);
  EXPECT_EQ(bundle.report.discarded, 1u);

  const auto no_pref = build_datasets(runs, PromptTemplate{}, false);
  EXPECT_TRUE(no_pref.preference.empty());
  EXPECT_EQ(no_pref.report.skipped_no_correct_sample, 0u);
}

TEST(Jsonl, RoundTripsRecordsWithEscapes) {
  const auto path = temp_file("sft.jsonl");
  SftRecord r{"x1", "Line one\nline \"two\"", "a\n\nb\n</think>\n\nc\tdone", "ünïcode", 7};
  write_jsonl(path, std::vector<SftRecord>{r, r});
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_NE(line.find("\\n"), std::string::npos);
  }
  EXPECT_EQ(lines, 2u);
  const auto back = read_jsonl<SftRecord>(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], r);

  PreferenceRecord p{"y", "prompt", "short", "long", 1, 9};
  const auto ppath = temp_file("pref.jsonl");
  write_jsonl(ppath, std::vector<PreferenceRecord>{p});
  EXPECT_EQ(read_jsonl<PreferenceRecord>(ppath).front(), p);
}

TEST(Jsonl, SchemaMismatchOnRenamedOrMistypedField) {
  EXPECT_THROW(JsonRecord<SftRecord>::from(Json::parse(
                   R"({"id":"a","prompt":"q","target":"t","answer":"5","tokens":1})")),
               SchemaMismatch);
  EXPECT_THROW(JsonRecord<SftRecord>::from(Json::parse(
                   R"({"id":"a","question":"q","target":"t","answer":"5","tokens":"one"})")),
               SchemaMismatch);
  EXPECT_THROW(JsonRecord<PreferenceRecord>::from(Json::parse(R"(["not","an","object"])")), SchemaMismatch);

  const auto path = temp_file("broken.jsonl");
  write_text(path, "{\"id\":\"a\",\"question\":\"q\",\"target\":\"t\",\"answer\":\"5\",\"tokens\":1}\n{oops\n");
  try {
    read_jsonl<SftRecord>(path);
    FAIL();
  } catch (const SchemaMismatch& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  EXPECT_THROW(read_jsonl<SftRecord>(temp_file("missing.jsonl")), IoFailure);
}

TEST(Jsonl, ManifestAndTraceRecords) {
  ManifestRow m{"s1", "emitted", 3, 17, 0, 3, {0.1, 0.2, 0.7}, std::nullopt};
  const auto j = JsonRecord<ManifestRow>::to(m);
  EXPECT_EQ(dump_line(j),
            R"({"id":"s1","status":"emitted","steps":3,"tokens":17,"injections":0,"stop_step":3,"probes":[0.1,0.2,0.7]})");
  EXPECT_EQ(JsonRecord<ManifestRow>::from(j), m);

  const auto t = JsonRecord<ProbeTrace>::from(Json::parse(R"({"id":"t","probes":[0.5],"fas":1})"));
  EXPECT_EQ(t.fas, 1u);
  EXPECT_THROW(JsonRecord<ProbeTrace>::from(Json::parse(R"({"probes":[0.5]})")), SchemaMismatch);
}

TEST(BuildReport, JsonFields) {
  BuildReport r{4, 3, 1, 2, 1, 0};
  EXPECT_EQ(dump_line(to_json(r)),
            R"({"tasks_in":4,"emitted":3,"discarded":1,"preference_pairs":2,"skipped_no_correct_sample":1,"length_inversions":0})");
}
