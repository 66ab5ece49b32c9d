#include <doctest.h>

#include <numeric>

#include "stepctl/backend.hpp"
#include "stepctl/embedding.hpp"
#include "stepctl/error.hpp"
#include "stepctl/fsm.hpp"
#include "stepctl/orchestrator.hpp"
#include "stepctl/pilot.hpp"
#include "stepctl/trace.hpp"

using namespace stepctl;

namespace {

Script plain_script(int n, const std::string& stem = "we add the next term") {
  Script s;
  for (int i = 0; i < n; ++i) s.steps.push_back({std::nullopt, stem + " " + std::to_string(i), 0.9});
  s.answer = "The answer is \\boxed{42}";
  return s;
}

// Records every context handed to the wrapped backend.
class Recorder final : public GenerationBackend {
 public:
  explicit Recorder(GenerationBackend& inner) : inner_(inner) {}
  GenerationChunk generate(const std::string& context, const SamplingConfig& s, int max_tokens,
                           StopMode mode) override {
    contexts.push_back(context);
    modes.push_back(mode);
    return inner_.generate(context, s, max_tokens, mode);
  }
  std::string identity() const override { return inner_.identity(); }

  std::vector<std::string> contexts;
  std::vector<StopMode> modes;

 private:
  GenerationBackend& inner_;
};

class FailingBackend final : public GenerationBackend {
 public:
  FailingBackend(Script s, int fail_after) : inner_(std::move(s), 1), left_(fail_after) {}
  GenerationChunk generate(const std::string& c, const SamplingConfig& s, int m, StopMode mode) override {
    if (left_-- <= 0) throw Error(Errc::BackendFailure, "connection reset");
    return inner_.generate(c, s, m, mode);
  }
  std::string identity() const override { return "failing"; }

 private:
  ScriptedBackend inner_;
  int left_;
};

std::size_t accounted(const TraceDocument& d) {
  std::size_t n = d.unattributed_tokens + d.answer_tokens;
  for (const auto& s : d.steps) n += s.token_count;
  return n;
}

const HashEmbedding kEmbed;

}  // namespace

TEST_CASE("assemble_context") {
  const std::string q = "What is 1+1?";
  CHECK(assemble_context(q, {}, std::nullopt) == render_prompt(q));
  CHECK(render_prompt(q).size() == system_prompt_template().size() - std::string("{question}").size() + q.size());
  CHECK(render_prompt(q).ends_with("\n\nWhat is 1+1?"));

  std::vector<std::string> steps{"First, 1+1."};
  auto ctx = assemble_context(q, steps, ControlTag::FastStep);
  CHECK(ctx == render_prompt(q) + "\nFirst, 1+1.\n[Fast_Step]");
  CHECK(assemble_context(q, steps, tag_for_state(ThinkingState::End)) == render_prompt(q) + "\nFirst, 1+1.");
}

TEST_CASE("system prompt text") {
  auto p = system_prompt_template();
  CHECK(p.starts_with("Please reason step by step, and put your final answer within \\boxed{}.\n"));
  CHECK(p.find("[Skip_Step] means this step is too difficult") != std::string_view::npos);
  CHECK(p.ends_with("{question}"));
}

TEST_CASE("extract_answer") {
  CHECK(extract_answer("\\boxed{42}") == "42");
  CHECK(extract_answer("so \\boxed{\\frac{1}{2}} done") == "\\frac{1}{2}");
  CHECK_FALSE(extract_answer("answer is 7"));
  CHECK(extract_answer("\\boxed{1} then \\boxed{2}") == "2");
  CHECK(extract_answer("\\boxed{3} and \\boxed{unclosed") == "3");
}

TEST_CASE("constant easy score: normal warm-up, then fast") {
  ScriptedBackend be(plain_script(12), 7);
  ConstantDifficulty est(0.1);
  auto doc = run_session("q", "Q?", be, est, kEmbed, ControllerConfig{});
  REQUIRE(doc.steps.size() == 12);
  CHECK(doc.steps[0].state_before == ThinkingState::Init);
  // The sixth score completes the k_fast window.
  for (std::size_t i = 0; i < 5; ++i) CHECK(doc.steps[i].state_after == ThinkingState::Normal);
  for (std::size_t i = 5; i < 12; ++i) CHECK(doc.steps[i].state_after == ThinkingState::Fast);
  CHECK(doc.steps[5].tag_injected == ControlTag::FastStep);
  CHECK(audit_trace(doc, ControllerConfig{}.fsm).empty());
}

TEST_CASE("mid-band constant never leaves normal") {
  ScriptedBackend be(plain_script(40), 7);
  ConstantDifficulty est(0.45);
  auto doc = run_session("q", "Q?", be, est, kEmbed, ControllerConfig{});
  for (const auto& s : doc.steps) CHECK(s.state_after == ThinkingState::Normal);
}

TEST_CASE("think end at step 3 runs the answer phase") {
  Script s;
  s.steps = {{std::nullopt, "Let x = 1.", 0.9}, {std::nullopt, "Then x + 1 = 2.", 0.9},
             {std::nullopt, "So the result is 2.</think>", 0.9}, {std::nullopt, "never reached", 0.9}};
  s.answer = " The answer is \\boxed{2}.";
  ScriptedBackend be(s, 3);
  Recorder rec(be);
  ConstantDifficulty est(0.4);
  auto doc = run_session("q", "Q?", rec, est, kEmbed, ControllerConfig{});
  REQUIRE(doc.steps.size() == 3);
  CHECK(doc.steps[2].text == "So the result is 2.");
  CHECK(doc.steps[2].think_end);
  CHECK(doc.steps[2].state_after == ThinkingState::End);
  CHECK_FALSE(doc.steps[2].tag_injected);
  CHECK(doc.final_state == ThinkingState::End);
  CHECK(doc.answer == "2");
  CHECK(doc.answer_tokens > 0);
  CHECK_FALSE(doc.truncated);
  CHECK(rec.modes.back() == StopMode::EndOfSequence);
  CHECK(rec.contexts.back().ends_with("\nSo the result is 2.\n</think>"));
  CHECK(doc.total_tokens == accounted(doc));
  CHECK(audit_trace(doc, ControllerConfig{}.fsm).empty());
}

TEST_CASE("tags are injected at every boundary and excluded from step text") {
  ScriptedBackend be(plain_script(4), 1);
  Recorder rec(be);
  ConstantDifficulty est(0.45);
  auto doc = run_session("q", "Q?", rec, est, kEmbed, ControllerConfig{});
  REQUIRE(doc.steps.size() == 4);
  CHECK(rec.contexts[0] == render_prompt("Q?"));
  CHECK(rec.contexts[1] == render_prompt("Q?") + "\n" + doc.steps[0].text + "\n[Normal_Step]");
  CHECK(rec.contexts[2].ends_with(doc.steps[1].text + "\n[Normal_Step]"));
  for (const auto& s : doc.steps) CHECK(s.text.find("[Normal_Step]") == std::string::npos);
}

TEST_CASE("conditional script entries follow the tag") {
  Script s;
  s.steps = {{std::nullopt, "step", 0.9}, {ControlTag::SlowStep, "slow path", 0.9},
             {ControlTag::NormalStep, "normal path", 0.9}};
  ScriptedBackend be(s, 1);
  ConstantDifficulty est(0.45);
  auto doc = run_session("q", "Q?", be, est, kEmbed, ControllerConfig{});
  REQUIRE(doc.steps.size() == 2);
  CHECK(doc.steps[1].text == "normal path");
}

TEST_CASE("budget exhaustion truncates and flushes") {
  // ~11 tokens per entry, well past the 16384 default budget
  ScriptedBackend be(plain_script(2000, "one two three four five six seven eight nine"), 5);
  ConstantDifficulty est(0.45);
  ControllerConfig cfg;
  auto doc = run_session("q", "Q?", be, est, kEmbed, cfg, {false});
  CHECK(doc.truncated);
  CHECK(doc.total_tokens == 16384u);
  CHECK(doc.total_tokens == accounted(doc));
  CHECK(doc.final_state != ThinkingState::End);
  // the cut step was flushed: its text is a proper prefix of the scripted line
  CHECK(doc.steps.back().text.size() < doc.steps.front().text.size());
}

TEST_CASE("natural end of sequence is not truncation") {
  ScriptedBackend be(plain_script(3), 5);
  ConstantDifficulty est(0.45);
  auto doc = run_session("q", "Q?", be, est, kEmbed, ControllerConfig{});
  CHECK_FALSE(doc.truncated);
  CHECK(doc.steps.size() == 3);
  CHECK(doc.total_tokens == accounted(doc));
}

TEST_CASE("pilot-driven sessions are deterministic; overhead recorded only on request") {
  auto model = PilotModel::initialized(96, 3);
  PilotEstimator est(model);
  auto run = [&](bool timing) {
    ScriptedBackend be(plain_script(10), 9);
    return run_session("q", "Q?", be, est, kEmbed, ControllerConfig{}, {timing});
  };
  auto a = run(false);
  auto b = run(false);
  CHECK(trace_to_json(a).dump() == trace_to_json(b).dump());
  CHECK(a.controller_overhead_ms.empty());
  auto c = run(true);
  CHECK(c.controller_overhead_ms.size() == c.steps.size());
  for (double ms : c.controller_overhead_ms) CHECK(ms >= 0.0);
  for (const auto& s : a.steps) {
    CHECK(s.difficulty >= 0.0);
    CHECK(s.difficulty <= 1.0);
    CHECK(s.token_count == s.tokens.size());
    CHECK(s.features.z.size() == kFeatureDim);
  }
}

TEST_CASE("backend failure keeps the partial trace") {
  FailingBackend be(plain_script(10), 3);
  ConstantDifficulty est(0.45);
  try {
    run_session("q", "Q?", be, est, kEmbed, ControllerConfig{});
    FAIL("expected SessionError");
  } catch (const SessionError& e) {
    CHECK(e.code() == Errc::BackendFailure);
    CHECK(e.partial().steps.size() == 3);
    CHECK(e.partial().error.has_value());
  }
}

TEST_CASE("scheduled difficulty repeats its last value") {
  ScheduledDifficulty est({0.1, 0.9});
  auto s = est.open();
  StepFeatureVector f;
  CHECK(s->next(f) == 0.1);
  CHECK(s->next(f) == 0.9);
  CHECK(s->next(f) == 0.9);
  CHECK_THROWS_AS(ScheduledDifficulty({}), Error);
}

TEST_CASE("audit flags tampered states") {
  ScriptedBackend be(plain_script(12), 7);
  ConstantDifficulty est(0.1);
  auto doc = run_session("q", "Q?", be, est, kEmbed, ControllerConfig{});
  doc.steps[7].state_after = ThinkingState::Slow;
  auto bad = audit_trace(doc, ControllerConfig{}.fsm);
  REQUIRE_FALSE(bad.empty());
  CHECK(bad.front() == 7);
}

TEST_CASE("trace json round trip") {
  ScriptedBackend be(plain_script(5), 2);
  ConstantDifficulty est(0.1);
  auto doc = run_session("q1", "Q?", be, est, kEmbed, ControllerConfig{});
  const auto j = trace_to_json(doc);
  CHECK(j["format_version"] == kTraceFormatVersion);
  auto back = trace_from_json(nlohmann::json::parse(j.dump()));
  CHECK(trace_to_json(back).dump() == j.dump());
}

TEST_CASE("scripted backend honours max_tokens and resumes") {
  Script s;
  s.steps = {{std::nullopt, "a b c d e", 0.9}};
  ScriptedBackend be(s, 1);
  auto c1 = be.generate("ctx", {}, 2, StopMode::Newline);
  CHECK(c1.tokens.size() == 2);
  CHECK(c1.finish == FinishReason::Length);
  auto c2 = be.generate("ctx", {}, 100, StopMode::Newline);
  CHECK(c2.finish == FinishReason::Newline);
  CHECK(c2.tokens.back().text == "\n");
  auto c3 = be.generate("ctx", {}, 100, StopMode::Newline);
  CHECK(c3.tokens.empty());
  CHECK(c3.finish == FinishReason::EndOfSequence);
  for (const auto& t : c1.tokens) {
    CHECK(t.top_k.size() == 20);
    CHECK(t.logprob <= 0.0);
    double mass = 0.0;
    for (const auto& [_, lp] : t.top_k) mass += std::exp(lp);
    CHECK(mass <= 1.0 + 1e-6);
  }
}
