#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "stepctl/config.hpp"

namespace stepctl {

/// Fixed-capacity ring of recent difficulty scores, most recent last.
class DifficultyHistory {
 public:
  explicit DifficultyHistory(std::size_t capacity = 1);

  void push(double r);
  void clear() noexcept;

  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return buf_.size(); }
  bool full(std::size_t k) const noexcept { return size_ >= k; }

  /// The last min(k, size()) scores, oldest first.
  std::vector<double> window(std::size_t k) const;

  /// True iff at least k scores are stored and `pred` holds for each of the last k.
  template <typename Pred>
  bool all_of_last(std::size_t k, Pred pred) const {
    if (k == 0 || size_ < k) return false;
    for (std::size_t i = 0; i < k; ++i) {
      if (!pred(at_back(i))) return false;
    }
    return true;
  }

 private:
  double at_back(std::size_t i) const noexcept;  // 0 = most recent

  std::vector<double> buf_;
  std::size_t head_ = 0;  // next write position
  std::size_t size_ = 0;
};

struct ControllerState {
  ThinkingState state = ThinkingState::Init;
  DifficultyHistory history;
  std::size_t steps_emitted = 0;

  explicit ControllerState(const FsmConfig& cfg);
};

/// Advances the controller by one step boundary and returns the new state.
///
/// Ends on `saw_think_end`. Otherwise r_t enters the history first, then:
/// INIT goes to NORMAL; NORMAL enters FAST (SLOW) when the full k_fast
/// (k_slow) window lies strictly below tau_fast (above tau_slow); FAST and
/// SLOW fall back to NORMAL only once r_t clears the threshold by delta; a
/// SLOW result escalates to SKIP when the full k_skip window exceeds
/// tau_skip. SKIP only leaves for END.
ThinkingState transition(ControllerState& ctrl, double r_t, bool saw_think_end, const FsmConfig& cfg);

std::optional<ControlTag> tag_for_state(ThinkingState s) noexcept;

void reset(ControllerState& ctrl) noexcept;

}  // namespace stepctl
