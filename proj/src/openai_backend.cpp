#include "stepctl/openai_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "stepctl/embedding.hpp"
#include "stepctl/error.hpp"

namespace stepctl {

OpenAiCompletionsBackend::OpenAiCompletionsBackend(OpenAiBackendOptions options) : options_(std::move(options)) {
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0') api_key_ = key;
  }
}

std::string OpenAiCompletionsBackend::identity() const {
  return "openai-completions:" + options_.base_url + (options_.model.empty() ? "" : "#" + options_.model);
}

nlohmann::json OpenAiCompletionsBackend::build_request(const std::string& context, const SamplingConfig& sampling,
                                                       int max_tokens, StopMode mode) const {
  nlohmann::json req{
      {"prompt", context},
      {"temperature", sampling.temperature},
      {"top_p", sampling.top_p},
      {"max_tokens", std::max(1, std::min(max_tokens, options_.max_tokens_per_call))},
      {"logprobs", sampling.top_k_logprobs},
  };
  if (!options_.model.empty()) req["model"] = options_.model;
  if (mode == StopMode::Newline) req["stop"] = nlohmann::json::array({"\n"});
  return req;
}

GenerationChunk parse_completion_response(const nlohmann::json& response, StopMode mode) {
  GenerationChunk chunk;
  try {
    const auto& choice = response.at("choices").at(0);
    const auto& lp = choice.at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& token_logprobs = lp.at("token_logprobs");
    const auto& top = lp.at("top_logprobs");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      TokenMeta tok;
      tok.text = tokens.at(i).get<std::string>();
      tok.logprob = token_logprobs.at(i).is_null() ? 0.0 : token_logprobs.at(i).get<double>();
      if (i < top.size() && top.at(i).is_object()) {
        for (const auto& [text, value] : top.at(i).items()) tok.top_k.emplace_back(text, value.get<double>());
      }
      std::stable_sort(tok.top_k.begin(), tok.top_k.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      const auto it = std::find_if(tok.top_k.begin(), tok.top_k.end(),
                                   [&](const auto& p) { return p.first == tok.text; });
      tok.rank = static_cast<int>(std::distance(tok.top_k.begin(), it)) + 1;
      chunk.tokens.push_back(std::move(tok));
    }

    const std::string finish = choice.value("finish_reason", std::string("stop"));
    if (finish == "length") {
      chunk.finish = FinishReason::Length;
    } else if (mode == StopMode::EndOfSequence) {
      chunk.finish = FinishReason::EndOfSequence;
    } else if (choice.contains("stop_reason")) {
      // vLLM reports the matched stop string, or null/int for end-of-sequence.
      const auto& sr = choice.at("stop_reason");
      chunk.finish = sr.is_string() ? FinishReason::Newline : FinishReason::EndOfSequence;
    } else {
      // Plain OpenAI does not distinguish stop strings from EOS; an empty
      // completion is the only unambiguous end.
      chunk.finish = chunk.tokens.empty() ? FinishReason::EndOfSequence : FinishReason::Newline;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BackendFailure, std::string("malformed completions response: ") + e.what());
  }
  return chunk;
}

GenerationChunk OpenAiCompletionsBackend::generate(const std::string& context, const SamplingConfig& sampling,
                                                   int max_tokens, StopMode mode) {
  const UrlParts parts = split_url(options_.base_url);
  httplib::Client client(parts.scheme_host_port);
  client.set_connection_timeout(options_.timeout_seconds);
  client.set_read_timeout(options_.timeout_seconds);
  if (api_key_) client.set_bearer_token_auth(*api_key_);

  const auto body = build_request(context, sampling, max_tokens, mode).dump();
  auto res = client.Post(parts.path + "/completions", body, "application/json");
  if (!res) {
    throw Error(Errc::BackendFailure,
                "completions request to " + options_.base_url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::BackendFailure, "completions endpoint returned HTTP " + std::to_string(res->status) + ": " +
                                          res->body.substr(0, 200));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BackendFailure, std::string("completions response is not JSON: ") + e.what());
  }
  GenerationChunk chunk = parse_completion_response(doc, mode);
  if (static_cast<int>(chunk.tokens.size()) > max_tokens) {
    chunk.tokens.resize(static_cast<std::size_t>(max_tokens));
    chunk.finish = FinishReason::Length;
  }
  return chunk;
}

}  // namespace stepctl
