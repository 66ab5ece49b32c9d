#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepctl/error.hpp"

namespace stepctl {

enum class ThinkingState { Init, Normal, Fast, Slow, Skip, End };

enum class ControlTag { FastStep, SlowStep, NormalStep, SkipStep };

std::string_view state_name(ThinkingState s) noexcept;
std::optional<ThinkingState> parse_state(std::string_view name) noexcept;

/// Exact tag literal injected into the model context, e.g. "[Fast_Step]".
std::string_view render_tag(ControlTag tag) noexcept;
std::optional<ControlTag> parse_tag(std::string_view literal) noexcept;

struct FsmConfig {
  double tau_fast = 0.2;
  double tau_slow = 0.6;
  double tau_skip = 0.85;
  double delta = 0.1;
  int k_fast = 6;
  int k_slow = 5;
  int k_skip = 35;

  std::size_t max_window() const noexcept;

  /// Thresholds pushed to the edges of (0,1) so that no realistic score
  /// sequence leaves NORMAL. Reproduces plain chain-of-thought control.
  static FsmConfig forced_normal() noexcept;
};

struct SamplingConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  int max_total_tokens = 16384;
  int top_k_logprobs = 20;
};

/// Raised by validate_config; lists every violated invariant, not just the first.
class ConfigError : public Error {
 public:
  ConfigError(std::vector<Errc> violations, std::vector<std::string> messages);

  const std::vector<Errc>& violations() const noexcept { return violations_; }
  bool has(Errc code) const noexcept;

 private:
  std::vector<Errc> violations_;
};

const FsmConfig& validate_config(const FsmConfig& cfg);
const SamplingConfig& validate_config(const SamplingConfig& cfg);

void to_json(nlohmann::json& j, const FsmConfig& cfg);
void from_json(const nlohmann::json& j, FsmConfig& cfg);
void to_json(nlohmann::json& j, const SamplingConfig& cfg);
void from_json(const nlohmann::json& j, SamplingConfig& cfg);

/// Combined on-disk config: {"fsm": {...}, "sampling": {...}}. Missing fields keep defaults.
struct ControllerConfig {
  FsmConfig fsm;
  SamplingConfig sampling;
};

ControllerConfig load_controller_config(const std::string& path);
nlohmann::json controller_config_json(const ControllerConfig& cfg);

}  // namespace stepctl
