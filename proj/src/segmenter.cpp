#include "stepctl/segmenter.hpp"

#include <algorithm>

#include "stepctl/error.hpp"

namespace stepctl {

bool is_blank(std::string_view text) noexcept {
  return std::all_of(text.begin(), text.end(), [](char c) { return c == ' ' || c == '\t'; });
}

void Segmenter::close_line(std::vector<StepEvent>& out) {
  if (!is_blank(buffer_)) {
    out.push_back(StepEvent{StepEventKind::StepComplete, std::move(buffer_), std::move(pending_tokens_)});
    pending_tokens_.clear();
    pending_starts_.clear();
  }
  // Tokens of a dropped blank line carry over and count as starting the next line.
  std::fill(pending_starts_.begin(), pending_starts_.end(), 0);
  buffer_.clear();
}

std::vector<StepEvent> Segmenter::feed_token(TokenMeta tok) {
  if (ended_) throw Error(Errc::FedAfterEnd, "token fed after </think>");

  std::vector<StepEvent> events;
  const std::string text = tok.text;
  pending_tokens_.push_back(std::move(tok));
  pending_starts_.push_back(buffer_.size());

  std::size_t pos = 0;
  while (true) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t seg_end = nl == std::string::npos ? text.size() : nl;

    // The marker may straddle token boundaries, so search the tail of the buffer.
    const std::size_t search_from = buffer_.size() >= kThinkEndMarker.size() - 1
                                        ? buffer_.size() - (kThinkEndMarker.size() - 1)
                                        : 0;
    buffer_.append(text, pos, seg_end - pos);
    if (const std::size_t m = buffer_.find(kThinkEndMarker, search_from); m != std::string::npos) {
      std::string after = buffer_.substr(m + kThinkEndMarker.size());
      if (seg_end < text.size()) after.append(text, seg_end, std::string::npos);
      buffer_.resize(m);
      // Tokens that began inside the marker belong to no step.
      std::vector<TokenMeta> marker_tokens;
      if (is_blank(buffer_)) {
        marker_tokens = std::move(pending_tokens_);
      } else {
        const auto split = static_cast<std::ptrdiff_t>(
            std::find_if(pending_starts_.begin(), pending_starts_.end(), [&](std::size_t s) { return s >= m; }) -
            pending_starts_.begin());
        marker_tokens.assign(std::make_move_iterator(pending_tokens_.begin() + split),
                             std::make_move_iterator(pending_tokens_.end()));
        pending_tokens_.resize(static_cast<std::size_t>(split));
        close_line(events);
      }
      buffer_.clear();
      pending_tokens_.clear();
      pending_starts_.clear();
      events.push_back(StepEvent{StepEventKind::ThinkEnd, std::move(after), std::move(marker_tokens)});
      ended_ = true;
      return events;
    }

    if (nl == std::string::npos) break;
    close_line(events);
    pos = nl + 1;
  }
  return events;
}

std::optional<StepEvent> Segmenter::flush() {
  if (is_blank(buffer_)) {
    buffer_.clear();
    return std::nullopt;
  }
  StepEvent ev{StepEventKind::StepComplete, std::move(buffer_), std::move(pending_tokens_)};
  buffer_.clear();
  pending_tokens_.clear();
  return ev;
}

std::vector<TokenMeta> Segmenter::take_unattributed() {
  std::vector<TokenMeta> out = std::move(pending_tokens_);
  pending_tokens_.clear();
  pending_starts_.clear();
  return out;
}

}  // namespace stepctl
