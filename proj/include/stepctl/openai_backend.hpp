#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "stepctl/backend.hpp"

namespace stepctl {

struct OpenAiBackendOptions {
  std::string base_url = "http://127.0.0.1:8000/v1";  // "/completions" is appended
  std::string model;
  std::string api_key_env = "STEPCTL_API_KEY";
  int max_tokens_per_call = 1024;
  int timeout_seconds = 300;
};

/// Legacy OpenAI-compatible /completions client. Newline mode sends stop ["\n"];
/// "</think>" is detected client side by the segmenter.
class OpenAiCompletionsBackend final : public GenerationBackend {
 public:
  explicit OpenAiCompletionsBackend(OpenAiBackendOptions options);

  GenerationChunk generate(const std::string& context, const SamplingConfig& sampling, int max_tokens,
                           StopMode mode) override;
  std::string identity() const override;

  nlohmann::json build_request(const std::string& context, const SamplingConfig& sampling, int max_tokens,
                               StopMode mode) const;

 private:
  OpenAiBackendOptions options_;
  std::optional<std::string> api_key_;
};

/// Parses choices[0] of a completions response into tokens and a finish reason.
GenerationChunk parse_completion_response(const nlohmann::json& response, StopMode mode);

}  // namespace stepctl
