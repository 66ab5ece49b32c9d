#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stepctl {

inline constexpr std::string_view kThinkEndMarker = "</think>";

/// One sampled token with its top-K alternatives (natural-log probabilities).
struct TokenMeta {
  std::string text;
  double logprob = 0.0;
  int rank = 1;
  std::vector<std::pair<std::string, double>> top_k;  // descending by logprob
};

enum class StepEventKind { StepComplete, ThinkEnd };

struct StepEvent {
  StepEventKind kind = StepEventKind::StepComplete;
  // StepComplete: the step text (never contains '\n').
  // ThinkEnd: whatever followed the marker, which belongs to the answer phase.
  std::string text;
  std::vector<TokenMeta> tokens;
};

/// Splits a token stream into newline-delimited reasoning steps.
///
/// Tokens are attributed to the step in which their text starts. Tokens that
/// only contributed to dropped blank lines carry over to the next emitted
/// step. A single token spanning several newlines can therefore produce a
/// step with no tokens of its own.
class Segmenter {
 public:
  std::vector<StepEvent> feed_token(TokenMeta tok);

  /// Emits the pending buffer as a final step if it is non-blank.
  std::optional<StepEvent> flush();

  bool ended() const noexcept { return ended_; }
  const std::string& pending_text() const noexcept { return buffer_; }

  /// Tokens received but not yet attributed to any emitted step.
  std::vector<TokenMeta> take_unattributed();

 private:
  void close_line(std::vector<StepEvent>& out);

  std::string buffer_;
  std::vector<TokenMeta> pending_tokens_;
  std::vector<std::size_t> pending_starts_;  // buffer offset where each pending token began
  bool ended_ = false;
};

/// True when the text is empty after trimming spaces and tabs.
bool is_blank(std::string_view text) noexcept;

}  // namespace stepctl
