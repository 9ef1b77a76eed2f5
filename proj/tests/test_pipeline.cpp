#include <gtest/gtest.h>

#include <random>

#include "concise/concise.hpp"
#include "concise/testing/script_builder.hpp"
#include "support/scenarios.hpp"

using namespace concise;
using concise::testing::ScriptBuilder;
using nlohmann::json;

namespace {

Task task(std::string id = "t", std::optional<std::string> gt = "5") {
  Task t;
  t.id = std::move(id);
  t.question = "What is 2 + 3?";
  t.ground_truth = std::move(gt);
  return t;
}

ReasoningChain empty_chain(const Task& t = task()) {
  ReasoningChain c;
  c.task = t;
  return c;
}

ScriptedBackend single(const std::string& prompt, const std::string& text) {
  return ScriptedBackend(json{{"entries", {{{"prompt", prompt}, {"text", text}}}}});
}

std::vector<double> values(const std::vector<ConfidenceReading>& r) {
  std::vector<double> out;
  for (const auto& x : r) out.push_back(x.value);
  return out;
}

}  // namespace

TEST(NextStep, PlainAndReflectionKinds) {
  PipelineConfig cfg;
  const auto c = empty_chain();
  const auto prompt = render_prompt(c, cfg.tmpl);

  auto d = next_step(c, cfg, single(prompt, "Compute 7·5 = 35.\n\nmore"));
  ASSERT_TRUE(d.step);
  EXPECT_EQ(d.step->kind, StepKind::plain);
  EXPECT_EQ(d.step->text, "Compute 7·5 = 35.");
  EXPECT_EQ(d.step->index, 1u);
  EXPECT_EQ(d.step->token_count, 4u);

  d = next_step(c, cfg, single(prompt, "Wait, is that right?"));
  EXPECT_EQ(d.step->kind, StepKind::reflection_start);
}

TEST(NextStep, InjectedStepKeepsPhrase) {
  PipelineConfig cfg;
  const auto c = empty_chain();
  const auto b = single(render_prompt(c, cfg.tmpl, "Let's proceed"), " the total is 12.");
  auto d = next_step(c, cfg, b, std::string_view("Let's proceed"));
  ASSERT_TRUE(d.step);
  EXPECT_EQ(d.step->kind, StepKind::injected);
  EXPECT_EQ(d.step->text, "Let's proceed the total is 12.");
  EXPECT_EQ(d.step->injected_phrase, "Let's proceed");
  EXPECT_EQ(d.step->token_count, 6u);
  EXPECT_FALSE(is_reflection_start(d.step->text, cfg.keywords));

  cfg.keep_injected_phrase = false;
  d = next_step(c, cfg, b, std::string_view("Let's proceed"));
  EXPECT_EQ(d.step->text, "the total is 12.");
  EXPECT_EQ(d.step->injected_phrase, "Let's proceed");
}

TEST(NextStep, EmptyAndThinkCloseGenerations) {
  PipelineConfig cfg;
  const auto c = empty_chain();
  const auto prompt = render_prompt(c, cfg.tmpl);
  EXPECT_FALSE(next_step(c, cfg, single(prompt, "   ")).step);
  auto d = next_step(c, cfg, single(prompt, "</think>\n\nThe answer is 5."));
  EXPECT_FALSE(d.step);
  EXPECT_TRUE(d.closed_thinking);
  d = next_step(c, cfg, single(prompt, "Last bit. </think> summary"));
  ASSERT_TRUE(d.step);
  EXPECT_EQ(d.step->text, "Last bit.");
  EXPECT_TRUE(d.closed_thinking);

  auto closed = c;
  closed.terminated = Termination::discarded;
  EXPECT_THROW(next_step(closed, cfg, single(prompt, "x")), ChainClosed);
}

TEST(ElicitFinalAnswer, ReturnsRawContinuationOutOfBand) {
  PipelineConfig cfg;
  auto c = empty_chain();
  Step s;
  s.index = 1;
  s.text = "Count the days.";
  c = append_step(c, s);
  const auto prompt = answer_prompt(c, cfg.tmpl);
  EXPECT_TRUE(prompt.ends_with("Count the days.\nFinal Answer:"));
  EXPECT_EQ(elicit_final_answer(c, cfg, single(prompt, " \\boxed{Sunday}")).raw, " \\boxed{Sunday}");
  EXPECT_EQ(elicit_final_answer(c, cfg, single(prompt, "")).raw, "");
  EXPECT_EQ(elicit_final_answer(c, cfg, single(prompt, "5, because reasons")).raw, "5, because reasons");
  EXPECT_EQ(c.size(), 1u);
  EXPECT_THROW(elicit_final_answer(empty_chain(), cfg, single(prompt, "")), EmptyChain);
}

TEST(GenerateSummary, VerbatimAndTruncated) {
  PipelineConfig cfg;
  auto c = empty_chain();
  Step s;
  s.index = 1;
  s.text = "2 + 3 = 5.";
  c = append_step(c, s);
  const auto prompt = summary_prompt(c, cfg.tmpl);
  EXPECT_TRUE(prompt.ends_with("2 + 3 = 5.\n\n</think>\n\n"));

  auto sum = generate_summary(c, cfg, single(prompt, "The answer is 5."));
  EXPECT_EQ(sum.text, "The answer is 5.");
  EXPECT_FALSE(sum.truncated);

  std::string longer;
  for (int i = 0; i < 300; ++i) longer += "w" + std::to_string(i) + " ";
  sum = generate_summary(c, cfg, single(prompt, longer));
  EXPECT_TRUE(sum.truncated);
  EXPECT_EQ(sum.tokens, 256u);
  EXPECT_EQ(text::count_words(sum.text), 256u);
}

TEST(BuildConciseChain, ControlFlowScenarios) {
  const auto cfg = scenarios::control_flow_config();
  const ScriptedBackend b(scenarios::control_flow_script(cfg));
  const auto tasks = scenarios::control_flow_tasks();

  const auto s1 = build_concise_chain(tasks[0], cfg, b);
  EXPECT_EQ(s1.status, BuildStatus::emitted);
  EXPECT_EQ(s1.stop_step, 3u);
  EXPECT_EQ(s1.injections, 0u);
  EXPECT_EQ(values(s1.probes), (std::vector<double>{0.1, 0.2, 0.7}));
  EXPECT_EQ(s1.chain.final_answer, "5");
  EXPECT_EQ(s1.chain.summary, "The answer is \\boxed{5}.");
  EXPECT_EQ(s1.chain.terminated, Termination::early_stopped);

  const auto s2 = build_concise_chain(tasks[1], cfg, b);
  EXPECT_EQ(s2.status, BuildStatus::emitted);
  EXPECT_EQ(s2.injections, 1u);
  EXPECT_EQ(s2.chain.steps[1].kind, StepKind::injected);
  EXPECT_EQ(s2.chain.steps[1].text, "Let's proceed, so the total is 12.");

  const auto s3 = build_concise_chain(tasks[2], cfg, b);
  EXPECT_EQ(s3.status, BuildStatus::emitted);
  EXPECT_EQ(s3.injections, 1u);
  EXPECT_TRUE(is_reflection_start(s3.chain.steps[2].text, cfg.keywords));

  const auto s4 = build_concise_chain(tasks[3], cfg, b);
  EXPECT_EQ(s4.status, BuildStatus::emitted);
  EXPECT_EQ(s4.stop_step, 3u);
  EXPECT_EQ(s4.chain.final_answer, "6");

  const auto s5 = build_concise_chain(tasks[4], cfg, b);
  EXPECT_EQ(s5.status, BuildStatus::emitted);
  EXPECT_EQ(s5.chain.terminated, Termination::natural_end);
  EXPECT_EQ(s5.probes.size(), 2u);

  const auto s6 = build_concise_chain(tasks[5], cfg, b);
  EXPECT_EQ(s6.status, BuildStatus::discarded);
  EXPECT_EQ(s6.chain.terminated, Termination::discarded);
  EXPECT_FALSE(s6.chain.summary);
  EXPECT_FALSE(s6.stop_step);
  EXPECT_EQ(s6.chain.size(), 4u);
}

TEST(BuildConciseChain, EmittedChainsAlwaysVerify) {
  const auto cfg = scenarios::control_flow_config();
  const ScriptedBackend b(scenarios::control_flow_script(cfg));
  for (const auto& t : scenarios::control_flow_tasks()) {
    const auto o = build_concise_chain(t, cfg, b);
    if (o.status == BuildStatus::emitted) {
      EXPECT_TRUE(verify_answer(*o.chain.final_answer, *t.ground_truth)) << t.id;
      EXPECT_TRUE(o.chain.summary.has_value());
    }
    // Injections equal the number of steps whose first draft reflected.
    std::size_t injected = 0;
    for (const auto& s : o.chain.steps) injected += s.kind == StepKind::injected ? 1 : 0;
    EXPECT_EQ(o.injections, injected) << t.id;
  }
}

TEST(BuildConciseChain, DeterministicAcrossRunsAndParallelism) {
  const auto cfg = scenarios::demo_config();
  const ScriptedBackend b(scenarios::demo_script(cfg, 0));
  const auto tasks = scenarios::demo_tasks();
  auto run = [&](std::size_t threads) {
    auto outs = parallel_map(tasks, threads, [&](const Task& t) { return build_concise_chain(t, cfg, b); });
    std::string all;
    for (const auto& o : outs) {
      all += dump_line(JsonRecord<ReasoningChain>::to(o.chain)) + dump_line(JsonRecord<ManifestRow>::to(manifest_row(o)));
    }
    return all;
  };
  const auto serial = run(1);
  EXPECT_EQ(serial, run(1));
  EXPECT_EQ(serial, run(8));
}

TEST(BuildConciseChain, PhrasesComeFromThePool) {
  const auto cfg = scenarios::demo_config();
  const ScriptedBackend b(scenarios::demo_script(cfg, 0));
  for (const auto& t : scenarios::demo_tasks()) {
    const auto o = build_concise_chain(t, cfg, b);
    ASSERT_EQ(o.status, BuildStatus::emitted);
    for (const auto& s : o.chain.steps) {
      if (s.kind == StepKind::injected) {
        EXPECT_TRUE(cfg.pool.contains(*s.injected_phrase));
      }
    }
  }
}

TEST(BuildConciseChain, RequiresGroundTruth) {
  PipelineConfig cfg;
  EXPECT_THROW(build_concise_chain(task("x", std::nullopt), cfg, ScriptedBackend{}), InvalidRequest);
}

TEST(BuildConciseChain, ScriptMissIsAHardFailure) {
  PipelineConfig cfg;
  EXPECT_THROW(build_concise_chain(task(), cfg, ScriptedBackend(json{{"entries", json::array()}})), ScriptMiss);
}

namespace {

class DownBackend final : public Backend {
 public:
  CompletionResult generate(const CompletionRequest&) const override { throw BackendUnavailable("connection refused"); }
  TokenDistribution next_token_distribution(std::string_view, std::size_t) const override {
    throw BackendUnavailable("connection refused");
  }
  std::size_t count_tokens(std::string_view t) const override { return text::count_words(t); }
};

}  // namespace

TEST(BuildConciseChain, BackendFailureDiscardsWithErrorMeta) {
  PipelineConfig cfg;
  const auto o = build_concise_chain(task(), cfg, DownBackend{});
  EXPECT_EQ(o.status, BuildStatus::discarded);
  ASSERT_TRUE(o.error);
  EXPECT_NE(o.error->find("BackendUnavailable"), std::string::npos);
}

TEST(BuildConciseChain, TokenBudgetBoundsGeneration) {
  PipelineConfig cfg;
  cfg.pool = PhrasePool::from({"Let's proceed"});
  cfg.max_total_tokens = 40;
  cfg.gen.max_tokens = 8;
  ScriptBuilder sb(cfg);
  auto chain = sb.task(task());
  for (int i = 0; i < 30; ++i) chain.step("one two three four five six seven", 0.1).answer("\\boxed{4}");
  const ScriptedBackend b(sb.script());
  const auto o = build_concise_chain(task(), cfg, b);
  EXPECT_EQ(o.status, BuildStatus::discarded);
  EXPECT_LE(o.generated_tokens, cfg.max_total_tokens + static_cast<std::size_t>(cfg.gen.max_tokens));
}

TEST(ConciseDecode, StopsAtFirstCrossing) {
  PipelineConfig cfg;
  cfg.pool = PhrasePool::from({"Let's proceed"});
  ScriptBuilder sb(cfg);
  const Task t = task("d", std::nullopt);
  sb.task(t).step("A.", 0.2).step("B.", 0.6).answer("\\boxed{7}");
  const ScriptedBackend b(sb.script());
  const auto o = concise_decode(t, cfg, b);
  EXPECT_EQ(o.chain.size(), 2u);
  EXPECT_EQ(o.chain.final_answer, "7");
  EXPECT_EQ(o.chain.terminated, Termination::early_stopped);
  EXPECT_FALSE(o.chain.summary);
}

TEST(ConciseDecode, RunsToBudgetWithoutCrossing) {
  PipelineConfig cfg;
  cfg.max_steps = 3;
  ScriptBuilder sb(cfg);
  const Task t = task("d", std::nullopt);
  sb.task(t).step("A.", 0.2).step("B.", 0.3).step("C.", 0.4).answer("9");
  const auto o = concise_decode(t, cfg, ScriptedBackend(sb.script()));
  EXPECT_EQ(o.chain.size(), 3u);
  EXPECT_EQ(o.chain.terminated, Termination::budget_exhausted);
  EXPECT_EQ(o.chain.final_answer, "9");
}

TEST(ConciseDecode, ZeroThresholdStopsAfterFirstStep) {
  PipelineConfig cfg;
  cfg.detector.threshold = 0.0;
  ScriptBuilder sb(cfg);
  const Task t = task("d", std::nullopt);
  sb.task(t).step("A.", 0.01).answer("1");
  const auto o = concise_decode(t, cfg, ScriptedBackend(sb.script()));
  EXPECT_EQ(o.chain.size(), 1u);
}

TEST(ConciseDecode, IgnoresGroundTruth) {
  PipelineConfig cfg;
  ScriptBuilder sb(cfg);
  const Task t = task("d", "5");
  sb.task(t).step("A.", 0.9).answer("\\boxed{4}");
  const auto o = concise_decode(t, cfg, ScriptedBackend(sb.script()));
  EXPECT_EQ(o.chain.final_answer, "4");
  EXPECT_EQ(o.chain.terminated, Termination::early_stopped);
}

TEST(SamplePlainChains, CorrectnessFlagsAndSeeds) {
  PipelineConfig cfg;
  cfg.seed = 100;
  ScriptBuilder sb(cfg);
  const Task t = task();
  sb.plain_sample(t, 100, "Add.\n\nIt is 5.\n\n</think>\n\nThe answer is \\boxed{5}.");
  sb.plain_sample(t, 101, "Add.\n\n</think>\n\nThe answer is \\boxed{6}.");
  sb.plain_sample(t, 102, "Add.\n\nWait, check.\n\nStill 5.\n\n</think>\n\n\\boxed{5}");
  const ScriptedBackend b(sb.script());
  const auto samples = sample_plain_chains(t, 3, 1.0, cfg, b);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_TRUE(samples[0].correct);
  EXPECT_FALSE(samples[1].correct);
  EXPECT_TRUE(samples[2].correct);
  EXPECT_EQ(samples[2].chain.size(), 3u);
  EXPECT_EQ(samples[2].chain.steps[1].kind, StepKind::reflection_start);
  EXPECT_EQ(samples[0].chain.summary, "The answer is \\boxed{5}.");
  EXPECT_EQ(chain_tokens(samples[0].chain), 4u + 4u);

  const auto one = sample_plain_chains(t, 1, 1.0, cfg, b);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(one[0].correct);
  EXPECT_THROW(sample_plain_chains(t, 0, 1.0, cfg, b), InvalidRequest);
}

TEST(PipelineConfig, Validation) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.max_steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigInvalid);
  cfg = PipelineConfig{};
  cfg.max_total_tokens = 0;
  EXPECT_THROW(cfg.validate(), ConfigInvalid);
  cfg = PipelineConfig{};
  cfg.pool.phrases.clear();
  EXPECT_THROW(cfg.validate(), EmptyPool);
}
