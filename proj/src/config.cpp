#include "stepctl/config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace stepctl {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ThresholdOrderViolation: return "ThresholdOrderViolation";
    case Errc::OverlappingHysteresisBands: return "OverlappingHysteresisBands";
    case Errc::NonPositiveWindow: return "NonPositiveWindow";
    case Errc::InvalidSampling: return "InvalidSampling";
    case Errc::FedAfterEnd: return "FedAfterEnd";
    case Errc::EmptyTopK: return "EmptyTopK";
    case Errc::EmptyStep: return "EmptyStep";
    case Errc::ProviderDimensionMismatch: return "ProviderDimensionMismatch";
    case Errc::ProviderFailure: return "ProviderFailure";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::InvalidTrainConfig: return "InvalidTrainConfig";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::TransitionAfterEnd: return "TransitionAfterEnd";
    case Errc::BackendFailure: return "BackendFailure";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TooShort: return "TooShort";
    case Errc::UnpairedSamples: return "UnpairedSamples";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::MissingGrades: return "MissingGrades";
    case Errc::BadManifest: return "BadManifest";
    case Errc::MalformedInput: return "MalformedInput";
  }
  return "Unknown";
}

namespace {

constexpr std::array<std::pair<ThinkingState, std::string_view>, 6> kStateNames{{
    {ThinkingState::Init, "INIT"},
    {ThinkingState::Normal, "NORMAL"},
    {ThinkingState::Fast, "FAST"},
    {ThinkingState::Slow, "SLOW"},
    {ThinkingState::Skip, "SKIP"},
    {ThinkingState::End, "END"},
}};

constexpr std::array<std::pair<ControlTag, std::string_view>, 4> kTagLiterals{{
    {ControlTag::FastStep, "[Fast_Step]"},
    {ControlTag::SlowStep, "[Slow_Step]"},
    {ControlTag::NormalStep, "[Normal_Step]"},
    {ControlTag::SkipStep, "[Skip_Step]"},
}};

std::string join_messages(const std::vector<std::string>& messages) {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += "; ";
    out += m;
  }
  return out;
}

}  // namespace

std::string_view state_name(ThinkingState s) noexcept {
  for (const auto& [state, name] : kStateNames) {
    if (state == s) return name;
  }
  return "?";
}

std::optional<ThinkingState> parse_state(std::string_view name) noexcept {
  for (const auto& [state, n] : kStateNames) {
    if (n == name) return state;
  }
  return std::nullopt;
}

std::string_view render_tag(ControlTag tag) noexcept {
  for (const auto& [t, literal] : kTagLiterals) {
    if (t == tag) return literal;
  }
  return {};
}

std::optional<ControlTag> parse_tag(std::string_view literal) noexcept {
  for (const auto& [t, lit] : kTagLiterals) {
    if (lit == literal) return t;
  }
  return std::nullopt;
}

std::size_t FsmConfig::max_window() const noexcept {
  return static_cast<std::size_t>(std::max({k_fast, k_slow, k_skip, 1}));
}

FsmConfig FsmConfig::forced_normal() noexcept {
  FsmConfig cfg;
  cfg.tau_fast = 1e-9;
  cfg.tau_slow = 1.0 - 2e-9;
  cfg.tau_skip = 1.0 - 1e-9;
  cfg.delta = 1e-10;
  return cfg;
}

ConfigError::ConfigError(std::vector<Errc> violations, std::vector<std::string> messages)
    : Error(violations.empty() ? Errc::MalformedInput : violations.front(), join_messages(messages)),
      violations_(std::move(violations)) {}

bool ConfigError::has(Errc code) const noexcept {
  return std::find(violations_.begin(), violations_.end(), code) != violations_.end();
}

const FsmConfig& validate_config(const FsmConfig& cfg) {
  std::vector<Errc> codes;
  std::vector<std::string> messages;
  auto fail = [&](Errc code, std::string msg) {
    codes.push_back(code);
    messages.push_back(std::move(msg));
  };

  const bool finite = std::isfinite(cfg.tau_fast) && std::isfinite(cfg.tau_slow) &&
                      std::isfinite(cfg.tau_skip) && std::isfinite(cfg.delta);
  if (!finite || !(0.0 < cfg.tau_fast && cfg.tau_fast < cfg.tau_slow && cfg.tau_slow < cfg.tau_skip &&
                   cfg.tau_skip < 1.0)) {
    fail(Errc::ThresholdOrderViolation, "require 0 < tau_fast < tau_slow < tau_skip < 1");
  }
  if (!(cfg.delta > 0.0)) {
    fail(Errc::OverlappingHysteresisBands, "delta must be positive");
  } else if (!(cfg.tau_fast + cfg.delta < cfg.tau_slow - cfg.delta)) {
    fail(Errc::OverlappingHysteresisBands, "tau_fast + delta must be below tau_slow - delta");
  }
  if (cfg.k_fast < 1 || cfg.k_slow < 1 || cfg.k_skip < 1) {
    fail(Errc::NonPositiveWindow, "window lengths k_fast, k_slow, k_skip must be >= 1");
  }
  if (!codes.empty()) throw ConfigError(std::move(codes), std::move(messages));
  return cfg;
}

const SamplingConfig& validate_config(const SamplingConfig& cfg) {
  std::vector<Errc> codes;
  std::vector<std::string> messages;
  auto fail = [&](std::string msg) {
    codes.push_back(Errc::InvalidSampling);
    messages.push_back(std::move(msg));
  };
  if (!(cfg.temperature >= 0.0) || !std::isfinite(cfg.temperature)) fail("temperature must be >= 0");
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) fail("top_p must lie in (0, 1]");
  if (cfg.max_total_tokens < 1) fail("max_total_tokens must be positive");
  if (cfg.top_k_logprobs < 10) fail("top_k_logprobs must be >= 10");
  if (!codes.empty()) throw ConfigError(std::move(codes), std::move(messages));
  return cfg;
}

void to_json(nlohmann::json& j, const FsmConfig& cfg) {
  j = nlohmann::json{{"tau_fast", cfg.tau_fast}, {"tau_slow", cfg.tau_slow}, {"tau_skip", cfg.tau_skip},
                     {"delta", cfg.delta},       {"k_fast", cfg.k_fast},     {"k_slow", cfg.k_slow},
                     {"k_skip", cfg.k_skip}};
}

void from_json(const nlohmann::json& j, FsmConfig& cfg) {
  cfg.tau_fast = j.value("tau_fast", cfg.tau_fast);
  cfg.tau_slow = j.value("tau_slow", cfg.tau_slow);
  cfg.tau_skip = j.value("tau_skip", cfg.tau_skip);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.k_fast = j.value("k_fast", cfg.k_fast);
  cfg.k_slow = j.value("k_slow", cfg.k_slow);
  cfg.k_skip = j.value("k_skip", cfg.k_skip);
}

void to_json(nlohmann::json& j, const SamplingConfig& cfg) {
  j = nlohmann::json{{"temperature", cfg.temperature},
                     {"top_p", cfg.top_p},
                     {"max_total_tokens", cfg.max_total_tokens},
                     {"top_k_logprobs", cfg.top_k_logprobs}};
}

void from_json(const nlohmann::json& j, SamplingConfig& cfg) {
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.top_p = j.value("top_p", cfg.top_p);
  cfg.max_total_tokens = j.value("max_total_tokens", cfg.max_total_tokens);
  cfg.top_k_logprobs = j.value("top_k_logprobs", cfg.top_k_logprobs);
}

ControllerConfig load_controller_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MalformedInput, "cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedInput, "config " + path + ": " + e.what());
  }
  ControllerConfig cfg;
  try {
    if (j.contains("fsm")) cfg.fsm = j.at("fsm").get<FsmConfig>();
    if (j.contains("sampling")) cfg.sampling = j.at("sampling").get<SamplingConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedInput, "config " + path + ": " + e.what());
  }
  return cfg;
}

nlohmann::json controller_config_json(const ControllerConfig& cfg) {
  return nlohmann::json{{"fsm", cfg.fsm}, {"sampling", cfg.sampling}};
}

}  // namespace stepctl
