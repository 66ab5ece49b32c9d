#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepctl/config.hpp"
#include "stepctl/segmenter.hpp"

namespace stepctl {

enum class StopMode {
  Newline,        // stop after the first newline (reasoning steps)
  EndOfSequence,  // run until the model stops (answer phase)
};

enum class FinishReason { Newline, EndOfSequence, Length };

struct GenerationChunk {
  std::vector<TokenMeta> tokens;
  FinishReason finish = FinishReason::EndOfSequence;
};

/// A language model that continues a raw text context. Implementations may
/// hold per-session state; use one instance per session.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;

  /// Generates at most `max_tokens` tokens continuing `context`.
  virtual GenerationChunk generate(const std::string& context, const SamplingConfig& sampling, int max_tokens,
                                   StopMode mode) = 0;
  virtual std::string identity() const = 0;

  GenerationChunk generate_until_newline(const std::string& context, const SamplingConfig& sampling,
                                         int max_tokens) {
    return generate(context, sampling, max_tokens, StopMode::Newline);
  }
};

struct ScriptEntry {
  std::optional<ControlTag> when;  // only used when the context ends with this tag
  std::string text;
  double confidence = 0.9;
};

struct Script {
  std::vector<ScriptEntry> steps;
  std::string answer;
  double answer_confidence = 0.95;
};

void from_json(const nlohmann::json& j, Script& script);
void to_json(nlohmann::json& j, const Script& script);

/// Deterministic test double replaying a script.
///
/// On each new step the next entry whose condition matches the tag at the
/// end of the context is emitted word by word, followed by "\n" unless the
/// text contains "</think>". Token distributions are synthesized from the
/// entry confidence with seeded jitter. Entries cut by max_tokens resume on
/// the next call.
class ScriptedBackend final : public GenerationBackend {
 public:
  ScriptedBackend(Script script, std::uint64_t seed, int top_k = 20);

  GenerationChunk generate(const std::string& context, const SamplingConfig& sampling, int max_tokens,
                           StopMode mode) override;
  std::string identity() const override;

 private:
  bool load_next_step(const std::string& context);

  Script script_;
  std::uint64_t seed_;
  std::uint64_t rng_;
  int top_k_;
  std::size_t cursor_ = 0;
  std::deque<TokenMeta> queue_;
  bool answer_loaded_ = false;
};

/// The tag literal on the last line of `context`, if any.
std::optional<ControlTag> trailing_tag(const std::string& context);

/// Scripts keyed by question id with an optional "*" fallback. A file holding a
/// bare script (an object with "steps") applies to every question.
class ScriptLibrary {
 public:
  static ScriptLibrary load(const std::string& path);
  static ScriptLibrary from_json(const nlohmann::json& j);
  const Script& for_id(const std::string& id) const;

 private:
  std::map<std::string, Script> by_id_;
};

}  // namespace stepctl
