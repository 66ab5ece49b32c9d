#include "stepctl/orchestrator.hpp"

#include <algorithm>
#include <chrono>

#include "stepctl/error.hpp"
#include "stepctl/segmenter.hpp"

namespace stepctl {

namespace {

constexpr std::string_view kSystemPrompt =
    "Please reason step by step, and put your final answer within \\boxed{}.\n"
    "\n"
    "During your thinking, you may see the following tags:\n"
    "- [Fast_Step] means the current step seems easy; keep your reasoning brief and avoid unnecessary details.\n"
    "- [Slow_Step] means the current step seems difficult; please perform detailed reasoning.\n"
    "- [Normal_Step] means the current step has moderate difficulty; please resume normal step-by-step "
    "reasoning.\n"
    "- [Skip_Step] means this step is too difficult and further detailed expansion is not very helpful, please "
    "summarize the existing reasoning, make a reasonable guess for the conclusion, and then quickly output the "
    "final answer.\n"
    "\n"
    "{question}";

constexpr std::string_view kQuestionSlot = "{question}";

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

class PilotSession final : public DifficultySession {
 public:
  explicit PilotSession(const PilotModel& m) : model_(m), state_(m.initial_state()) {}
  double next(const StepFeatureVector& step) override {
    return std::clamp(difficulty(model_.step(state_, step.z)), 0.0, 1.0);
  }

 private:
  const PilotModel& model_;
  PilotState state_;
};

class ConstantSession final : public DifficultySession {
 public:
  explicit ConstantSession(double r) : r_(r) {}
  double next(const StepFeatureVector&) override { return r_; }

 private:
  double r_;
};

class ScheduledSession final : public DifficultySession {
 public:
  explicit ScheduledSession(const std::vector<double>& p) : profile_(p) {}
  double next(const StepFeatureVector&) override {
    const double r = profile_[std::min(i_, profile_.size() - 1)];
    ++i_;
    return r;
  }

 private:
  const std::vector<double>& profile_;
  std::size_t i_ = 0;
};

}  // namespace

std::string_view system_prompt_template() noexcept { return kSystemPrompt; }

std::string render_prompt(std::string_view question) {
  std::string out(kSystemPrompt);
  const auto pos = out.find(kQuestionSlot);
  out.replace(pos, kQuestionSlot.size(), question);
  return out;
}

std::string assemble_context(std::string_view question, std::span<const std::string> prior_steps,
                             std::optional<ControlTag> pending_tag) {
  std::string ctx = render_prompt(question);
  for (const auto& s : prior_steps) {
    ctx += '\n';
    ctx += s;
  }
  if (pending_tag) {
    ctx += '\n';
    ctx += render_tag(*pending_tag);
  }
  return ctx;
}

std::optional<std::string> extract_answer(std::string_view text) {
  constexpr std::string_view kOpen = "\\boxed{";
  std::optional<std::string> last;
  std::size_t pos = 0;
  while ((pos = text.find(kOpen, pos)) != std::string_view::npos) {
    const std::size_t start = pos + kOpen.size();
    int depth = 1;
    std::size_t i = start;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}') --depth;
    }
    if (depth == 0) last = std::string(text.substr(start, i - 1 - start));
    pos = start;
  }
  return last;
}

std::unique_ptr<DifficultySession> PilotEstimator::open() const { return std::make_unique<PilotSession>(model_); }

std::unique_ptr<DifficultySession> ConstantDifficulty::open() const { return std::make_unique<ConstantSession>(r_); }

std::string ConstantDifficulty::identity() const { return "constant:" + std::to_string(r_); }

ScheduledDifficulty::ScheduledDifficulty(std::vector<double> profile) : profile_(std::move(profile)) {
  if (profile_.empty()) throw Error(Errc::EmptyInput, "difficulty profile is empty");
  for (double r : profile_) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(Errc::MalformedInput, "difficulty profile value outside [0,1]");
  }
}

std::unique_ptr<DifficultySession> ScheduledDifficulty::open() const {
  return std::make_unique<ScheduledSession>(profile_);
}

namespace {

class SessionRunner {
 public:
  SessionRunner(const std::string& id, const std::string& question, GenerationBackend& backend,
                const DifficultyEstimator& estimator, const EmbeddingProvider& embedding, const ControllerConfig& cfg,
                const SessionOptions& opts)
      : question_(question),
        backend_(backend),
        embedding_(embedding),
        cfg_(cfg),
        opts_(opts),
        ctrl_(cfg.fsm),
        scorer_(estimator.open()) {
    doc_.id = id;
    doc_.question = question;
    doc_.system_prompt = std::string(system_prompt_template());
    doc_.config = cfg;
    doc_.backend = backend.identity();
    doc_.embedding = embedding.identity();
    doc_.estimator = estimator.identity();
  }

  TraceDocument run() {
    const int budget = cfg_.sampling.max_total_tokens;
    bool need_context = true;
    bool eos = false;
    std::string step_context;

    while (ctrl_.state != ThinkingState::End && !eos) {
      if (used_ >= budget) break;
      if (need_context) {
        std::optional<ControlTag> tag;
        if (ctrl_.state != ThinkingState::Init) tag = tag_for_state(ctrl_.state);
        step_context = assemble_context(question_, step_texts_, tag);
        need_context = false;
      }
      GenerationChunk chunk =
          call_backend(step_context + segmenter_.pending_text(), budget - used_, StopMode::Newline);

      for (auto& tok : chunk.tokens) {
        ++used_;
        generated_ += tok.text;
        if (segmenter_.ended()) {
          // Tokens after "</think>" in the same chunk start the answer.
          doc_.answer_text += tok.text;
          ++doc_.answer_tokens;
          continue;
        }
        auto events = segmenter_.feed_token(std::move(tok));
        if (handle_events(events)) need_context = true;
      }
      if (segmenter_.ended()) break;

      switch (chunk.finish) {
        case FinishReason::Newline:
          if (auto ev = segmenter_.flush()) {
            process_step(std::move(*ev), false);
            need_context = true;
          }
          break;
        case FinishReason::Length:
          break;
        case FinishReason::EndOfSequence:
          if (auto ev = segmenter_.flush()) process_step(std::move(*ev), false);
          eos = true;
          break;
      }
    }

    if (ctrl_.state == ThinkingState::End) {
      run_answer_phase(budget);
      doc_.answer = extract_answer(doc_.answer_text);
    } else {
      doc_.truncated = !eos && used_ >= budget;
      if (auto ev = segmenter_.flush()) process_step(std::move(*ev), false);
      doc_.answer = extract_answer(generated_);
    }
    doc_.unattributed_tokens += segmenter_.take_unattributed().size();
    return finish();
  }

 private:
  GenerationChunk call_backend(const std::string& context, int max_tokens, StopMode mode) {
    GenerationChunk chunk;
    try {
      chunk = backend_.generate(context, cfg_.sampling, max_tokens, mode);
    } catch (const std::exception& e) {
      doc_.error = e.what();
      throw SessionError(e.what(), finish());
    }
    if (static_cast<int>(chunk.tokens.size()) > max_tokens) {
      chunk.tokens.resize(static_cast<std::size_t>(std::max(max_tokens, 0)));
      chunk.finish = FinishReason::Length;
    }
    return chunk;
  }

  // Returns true when at least one step boundary was crossed.
  bool handle_events(std::vector<StepEvent>& events) {
    bool boundary = false;
    for (std::size_t i = 0; i < events.size(); ++i) {
      auto& ev = events[i];
      if (ev.kind == StepEventKind::StepComplete) {
        const bool closes_thought = i + 1 < events.size() && events[i + 1].kind == StepEventKind::ThinkEnd;
        process_step(std::move(ev), closes_thought);
        boundary = true;
      } else {
        doc_.unattributed_tokens += ev.tokens.size();
        doc_.answer_text += ev.text;
        if (ctrl_.state != ThinkingState::End) transition(ctrl_, 0.0, true, cfg_.fsm);
        boundary = true;
      }
    }
    return boundary;
  }

  void process_step(StepEvent ev, bool closes_thought) {
    const auto t0 = Clock::now();
    const auto feats = tracker_.push_all(ev.tokens);
    const UncertaintyVector h_unc = feats.empty() ? UncertaintyVector{} : pool_step(feats);
    const auto t1 = Clock::now();
    StepFeatureVector fv = fuse(h_unc, embedding_, ev.text);
    const auto t2 = Clock::now();
    const double r = scorer_->next(fv);
    StepRecord rec;
    rec.index = doc_.steps.size();
    rec.state_before = ctrl_.state;
    rec.state_after = transition(ctrl_, r, closes_thought, cfg_.fsm);
    const auto t3 = Clock::now();

    rec.text = std::move(ev.text);
    rec.token_count = ev.tokens.size();
    rec.tokens = std::move(ev.tokens);
    rec.features = std::move(fv);
    rec.difficulty = r;
    rec.think_end = closes_thought;
    rec.tag_injected = tag_for_state(rec.state_after);
    if (opts_.record_timing) doc_.controller_overhead_ms.push_back(ms_between(t0, t1) + ms_between(t2, t3));
    step_texts_.push_back(rec.text);
    doc_.steps.push_back(std::move(rec));
  }

  void run_answer_phase(int budget) {
    const std::string base = assemble_context(question_, step_texts_, std::nullopt) + "\n" +
                             std::string(kThinkEndMarker);
    while (used_ < budget) {
      GenerationChunk chunk = call_backend(base + doc_.answer_text, budget - used_, StopMode::EndOfSequence);
      for (const auto& tok : chunk.tokens) {
        doc_.answer_text += tok.text;
        generated_ += tok.text;
      }
      used_ += static_cast<int>(chunk.tokens.size());
      doc_.answer_tokens += chunk.tokens.size();
      if (chunk.finish != FinishReason::Length || chunk.tokens.empty()) break;
    }
  }

  TraceDocument finish() {
    TraceDocument out = doc_;
    out.total_tokens = static_cast<std::size_t>(used_);
    out.final_state = ctrl_.state;
    return out;
  }

  const std::string& question_;
  GenerationBackend& backend_;
  const EmbeddingProvider& embedding_;
  const ControllerConfig& cfg_;
  const SessionOptions& opts_;
  ControllerState ctrl_;
  std::unique_ptr<DifficultySession> scorer_;
  Segmenter segmenter_;
  FeatureTracker tracker_;
  std::vector<std::string> step_texts_;
  std::string generated_;
  int used_ = 0;
  TraceDocument doc_;
};

}  // namespace

TraceDocument run_session(const std::string& id, const std::string& question, GenerationBackend& backend,
                          const DifficultyEstimator& estimator, const EmbeddingProvider& embedding,
                          const ControllerConfig& cfg, const SessionOptions& opts) {
  validate_config(cfg.fsm);
  validate_config(cfg.sampling);
  SessionRunner runner(id, question, backend, estimator, embedding, cfg, opts);
  return runner.run();
}

std::vector<std::size_t> audit_trace(const TraceDocument& doc, const FsmConfig& cfg) {
  std::vector<std::size_t> mismatches;
  ControllerState ctrl(cfg);
  for (const auto& s : doc.steps) {
    if (ctrl.state == ThinkingState::End || ctrl.state != s.state_before) {
      mismatches.push_back(s.index);
      if (ctrl.state == ThinkingState::End) continue;
    }
    const ThinkingState next = transition(ctrl, s.difficulty, s.think_end, cfg);
    if (next != s.state_after && (mismatches.empty() || mismatches.back() != s.index)) {
      mismatches.push_back(s.index);
    }
  }
  return mismatches;
}

}  // namespace stepctl
