#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepctl/backend.hpp"
#include "stepctl/config.hpp"
#include "stepctl/embedding.hpp"
#include "stepctl/fsm.hpp"
#include "stepctl/pilot.hpp"
#include "stepctl/trace.hpp"

namespace stepctl {

/// Math system prompt with a "{question}" placeholder.
std::string_view system_prompt_template() noexcept;
std::string render_prompt(std::string_view question);

/// Prompt, then every prior step on its own line, then the tag on a fresh line.
std::string assemble_context(std::string_view question, std::span<const std::string> prior_steps,
                             std::optional<ControlTag> pending_tag);

/// Contents of the last balanced "\boxed{...}" in `text`.
std::optional<std::string> extract_answer(std::string_view text);

/// Per-session difficulty scorer; returns r_t in [0,1] for each step in order.
class DifficultySession {
 public:
  virtual ~DifficultySession() = default;
  virtual double next(const StepFeatureVector& step) = 0;
};

class DifficultyEstimator {
 public:
  virtual ~DifficultyEstimator() = default;
  virtual std::unique_ptr<DifficultySession> open() const = 0;
  virtual std::string identity() const = 0;
};

/// r_t = 1 - v_t from a shared, read-only pilot.
class PilotEstimator final : public DifficultyEstimator {
 public:
  explicit PilotEstimator(const PilotModel& model, std::string label = "pilot") : model_(model), label_(std::move(label)) {}
  std::unique_ptr<DifficultySession> open() const override;
  std::string identity() const override { return label_; }

 private:
  const PilotModel& model_;
  std::string label_;
};

class ConstantDifficulty final : public DifficultyEstimator {
 public:
  explicit ConstantDifficulty(double r) : r_(r) {}
  std::unique_ptr<DifficultySession> open() const override;
  std::string identity() const override;

 private:
  double r_;
};

/// Replays a fixed score profile; the last value repeats once it runs out.
class ScheduledDifficulty final : public DifficultyEstimator {
 public:
  explicit ScheduledDifficulty(std::vector<double> profile);
  std::unique_ptr<DifficultySession> open() const override;
  std::string identity() const override { return "scheduled"; }

 private:
  std::vector<double> profile_;
};

struct SessionOptions {
  bool record_timing = true;
};

/// Thrown when the backend fails; carries the trace generated so far.
class SessionError : public Error {
 public:
  SessionError(const std::string& what, TraceDocument partial)
      : Error(Errc::BackendFailure, what), partial_(std::move(partial)) {}
  const TraceDocument& partial() const noexcept { return partial_; }

 private:
  TraceDocument partial_;
};

/// Runs one question through the controlled generation loop.
TraceDocument run_session(const std::string& id, const std::string& question, GenerationBackend& backend,
                          const DifficultyEstimator& estimator, const EmbeddingProvider& embedding,
                          const ControllerConfig& cfg, const SessionOptions& opts = {});

/// Replays the FSM over a trace's recorded scores. Returns the indices of
/// steps whose recorded state_after disagrees.
std::vector<std::size_t> audit_trace(const TraceDocument& doc, const FsmConfig& cfg);

}  // namespace stepctl
