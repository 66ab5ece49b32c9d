#include "stepctl/fsm.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace stepctl {

DifficultyHistory::DifficultyHistory(std::size_t capacity) : buf_(capacity == 0 ? 1 : capacity, 0.0) {}

void DifficultyHistory::push(double r) {
  buf_[head_] = r;
  head_ = (head_ + 1) % buf_.size();
  if (size_ < buf_.size()) ++size_;
}

void DifficultyHistory::clear() noexcept {
  head_ = 0;
  size_ = 0;
}

double DifficultyHistory::at_back(std::size_t i) const noexcept {
  return buf_[(head_ + buf_.size() - 1 - i) % buf_.size()];
}

std::vector<double> DifficultyHistory::window(std::size_t k) const {
  const std::size_t n = std::min(k, size_);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[n - 1 - i] = at_back(i);
  return out;
}

ControllerState::ControllerState(const FsmConfig& cfg) : history(cfg.max_window()) {}

ThinkingState transition(ControllerState& ctrl, double r_t, bool saw_think_end, const FsmConfig& cfg) {
  if (ctrl.state == ThinkingState::End) throw Error(Errc::TransitionAfterEnd, "controller already ended");
  if (!(r_t >= 0.0 && r_t <= 1.0)) {
    throw Error(Errc::MalformedInput, "difficulty score outside [0,1]: " + std::to_string(r_t));
  }

  ++ctrl.steps_emitted;
  if (saw_think_end) {
    ctrl.state = ThinkingState::End;
    return ctrl.state;
  }

  ctrl.history.push(r_t);
  const auto& h = ctrl.history;
  const auto k_fast = static_cast<std::size_t>(cfg.k_fast);
  const auto k_slow = static_cast<std::size_t>(cfg.k_slow);
  const auto k_skip = static_cast<std::size_t>(cfg.k_skip);

  const ThinkingState prev = ctrl.state;
  ThinkingState next = prev;
  switch (prev) {
    case ThinkingState::Init:
      next = ThinkingState::Normal;
      break;
    case ThinkingState::Normal: {
      const bool fast = h.all_of_last(k_fast, [&](double r) { return r < cfg.tau_fast; });
      const bool slow = h.all_of_last(k_slow, [&](double r) { return r > cfg.tau_slow; });
      assert(!(fast && slow));
      if (slow) next = ThinkingState::Slow;
      if (fast) next = ThinkingState::Fast;
      break;
    }
    case ThinkingState::Fast:
      if (r_t > cfg.tau_fast + cfg.delta) next = ThinkingState::Normal;
      break;
    case ThinkingState::Slow:
      if (r_t < cfg.tau_slow - cfg.delta) next = ThinkingState::Normal;
      break;
    case ThinkingState::Skip:
    case ThinkingState::End:
      break;
  }

  if (next == ThinkingState::Slow && h.all_of_last(k_skip, [&](double r) { return r > cfg.tau_skip; })) {
    next = ThinkingState::Skip;
  }

  ctrl.state = next;
  return next;
}

std::optional<ControlTag> tag_for_state(ThinkingState s) noexcept {
  switch (s) {
    case ThinkingState::Normal: return ControlTag::NormalStep;
    case ThinkingState::Fast: return ControlTag::FastStep;
    case ThinkingState::Slow: return ControlTag::SlowStep;
    case ThinkingState::Skip: return ControlTag::SkipStep;
    case ThinkingState::Init:
    case ThinkingState::End: return std::nullopt;
  }
  return std::nullopt;
}

void reset(ControllerState& ctrl) noexcept {
  ctrl.state = ThinkingState::Init;
  ctrl.history.clear();
  ctrl.steps_emitted = 0;
}

}  // namespace stepctl
