#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepctl/config.hpp"
#include "stepctl/features.hpp"
#include "stepctl/segmenter.hpp"

namespace stepctl {

inline constexpr int kTraceFormatVersion = 1;

struct StepRecord {
  std::size_t index = 0;
  std::string text;
  std::size_t token_count = 0;
  std::vector<TokenMeta> tokens;
  StepFeatureVector features;
  double difficulty = 0.0;
  ThinkingState state_before = ThinkingState::Init;
  ThinkingState state_after = ThinkingState::Init;
  std::optional<ControlTag> tag_injected;  // appended to the context after this step
  bool think_end = false;                  // the step closed the thought with "</think>"
};

struct TraceDocument {
  int format_version = kTraceFormatVersion;
  std::string id;
  std::string question;
  std::string system_prompt;
  std::vector<StepRecord> steps;
  std::optional<std::string> answer;
  std::string answer_text;
  std::size_t answer_tokens = 0;
  std::size_t unattributed_tokens = 0;  // blank-line and marker tokens outside any step
  std::size_t total_tokens = 0;
  bool truncated = false;
  ThinkingState final_state = ThinkingState::Init;
  ControllerConfig config;
  std::string backend;
  std::string embedding;
  std::string estimator;
  std::vector<double> controller_overhead_ms;  // per step; empty when timing is off
  std::optional<std::string> error;

  std::size_t thought_tokens() const noexcept;
};

struct TraceWriteOptions {
  bool include_tokens = true;
  bool include_features = true;
};

nlohmann::json trace_to_json(const TraceDocument& doc, const TraceWriteOptions& opts = {});
TraceDocument trace_from_json(const nlohmann::json& j);

/// One TraceDocument per line. Errors name the offending line.
std::vector<TraceDocument> read_traces(const std::string& path);

void to_json(nlohmann::json& j, const TokenMeta& tok);
void from_json(const nlohmann::json& j, TokenMeta& tok);

}  // namespace stepctl
