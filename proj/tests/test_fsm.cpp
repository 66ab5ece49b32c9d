#include <doctest.h>

#include <random>

#include "stepctl/error.hpp"
#include "stepctl/fsm.hpp"
#include "support.hpp"

using namespace stepctl;

namespace {
ControllerState in_state(ThinkingState s, const std::vector<double>& history, const FsmConfig& cfg) {
  ControllerState c(cfg);
  for (double r : history) c.history.push(r);
  c.state = s;
  c.steps_emitted = history.size();
  return c;
}
}  // namespace

TEST_CASE("ring buffer") {
  DifficultyHistory h(3);
  CHECK(h.window(3).empty());
  h.push(0.1);
  h.push(0.2);
  CHECK(h.window(3) == std::vector<double>{0.1, 0.2});
  h.push(0.3);
  h.push(0.4);
  CHECK(h.size() == 3);
  CHECK(h.window(3) == std::vector<double>{0.2, 0.3, 0.4});
  CHECK(h.window(2) == std::vector<double>{0.3, 0.4});
  CHECK(h.all_of_last(3, [](double r) { return r > 0.15; }));
  CHECK_FALSE(h.all_of_last(4, [](double) { return true; }));
  ControllerState c{FsmConfig{}};
  CHECK(c.history.capacity() == 35);
}

TEST_CASE("worked transitions") {
  FsmConfig cfg;
  auto n = in_state(ThinkingState::Normal, {0.1, 0.1, 0.1, 0.1, 0.1}, cfg);
  CHECK(transition(n, 0.1, false, cfg) == ThinkingState::Fast);

  auto f = in_state(ThinkingState::Fast, std::vector<double>(6, 0.1), cfg);
  CHECK(transition(f, 0.31, false, cfg) == ThinkingState::Normal);
  auto f2 = in_state(ThinkingState::Fast, std::vector<double>(6, 0.1), cfg);
  CHECK(transition(f2, 0.30, false, cfg) == ThinkingState::Fast);

  auto s = in_state(ThinkingState::Slow, std::vector<double>(34, 0.9), cfg);
  CHECK(transition(s, 0.9, false, cfg) == ThinkingState::Skip);

  auto s2 = in_state(ThinkingState::Slow, std::vector<double>(10, 0.9), cfg);
  CHECK(transition(s2, 0.49, false, cfg) == ThinkingState::Normal);
  auto s3 = in_state(ThinkingState::Slow, std::vector<double>(10, 0.9), cfg);
  CHECK(transition(s3, 0.5, false, cfg) == ThinkingState::Slow);
}

TEST_CASE("init goes to normal, think end goes to end") {
  FsmConfig cfg;
  ControllerState c(cfg);
  CHECK(c.state == ThinkingState::Init);
  CHECK(transition(c, 0.05, false, cfg) == ThinkingState::Normal);
  CHECK(transition(c, 0.05, true, cfg) == ThinkingState::End);
  CHECK_THROWS_AS(transition(c, 0.05, false, cfg), Error);
}

TEST_CASE("scores outside [0,1] are rejected") {
  FsmConfig cfg;
  ControllerState c(cfg);
  CHECK_THROWS_AS(transition(c, 1.5, false, cfg), Error);
  CHECK_THROWS_AS(transition(c, -0.1, false, cfg), Error);
}

TEST_CASE("tags") {
  CHECK(tag_for_state(ThinkingState::Slow) == ControlTag::SlowStep);
  CHECK(tag_for_state(ThinkingState::Normal) == ControlTag::NormalStep);
  CHECK(tag_for_state(ThinkingState::Fast) == ControlTag::FastStep);
  CHECK(tag_for_state(ThinkingState::Skip) == ControlTag::SkipStep);
  CHECK_FALSE(tag_for_state(ThinkingState::End));
  CHECK_FALSE(tag_for_state(ThinkingState::Init));
}

TEST_CASE("warm-up: no entry without a full window") {
  FsmConfig cfg;
  ControllerState c(cfg);
  // INIT consumes the first score; NORMAL then needs k_fast scores in total.
  for (int i = 0; i < cfg.k_fast - 1; ++i) CHECK(transition(c, 0.0, false, cfg) == ThinkingState::Normal);
  CHECK(transition(c, 0.0, false, cfg) == ThinkingState::Fast);

  ControllerState s(cfg);
  for (int i = 0; i < cfg.k_slow - 1; ++i) CHECK(transition(s, 1.0, false, cfg) == ThinkingState::Normal);
  CHECK(transition(s, 1.0, false, cfg) == ThinkingState::Slow);
}

TEST_CASE("skip is absorbing") {
  FsmConfig cfg;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto c = in_state(ThinkingState::Skip, {}, cfg);
  for (int i = 0; i < 500; ++i) CHECK(transition(c, u(rng), false, cfg) == ThinkingState::Skip);
  CHECK(transition(c, 0.0, true, cfg) == ThinkingState::End);
}

TEST_CASE("reset") {
  FsmConfig cfg;
  auto c = in_state(ThinkingState::Slow, {0.9, 0.9}, cfg);
  reset(c);
  CHECK(c.state == ThinkingState::Init);
  CHECK(c.steps_emitted == 0);
  CHECK(c.history.window(35).empty());
  reset(c);
  CHECK(c.state == ThinkingState::Init);
  CHECK(c.history.size() == 0);
}

TEST_CASE("matches the reference interpreter on random long sequences") {
  FsmConfig cfg;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    ControllerState c(cfg);
    oracle::RefFsm ref{cfg};
    // bias blocks of scores towards low or high so every state is visited
    double base = u(rng);
    for (int t = 0; t < 120; ++t) {
      if (t % 15 == 0) base = u(rng);
      double r = std::clamp(base + (u(rng) - 0.5) * 0.3, 0.0, 1.0);
      REQUIRE(transition(c, r, false, cfg) == ref.step(r));
    }
  }
}

TEST_CASE("no direct fast-slow edge") {
  FsmConfig cfg;
  cfg.k_fast = 2;
  cfg.k_slow = 2;
  cfg.k_skip = 3;
  std::mt19937_64 rng(5);
  const double grid[] = {0.05, 0.25, 0.5, 0.7, 0.95};
  for (int trial = 0; trial < 2000; ++trial) {
    ControllerState c(cfg);
    ThinkingState prev = c.state;
    for (int t = 0; t < 30; ++t) {
      auto s = transition(c, grid[rng() % 5], false, cfg);
      CHECK_FALSE((prev == ThinkingState::Fast && s == ThinkingState::Slow));
      CHECK_FALSE((prev == ThinkingState::Slow && s == ThinkingState::Fast));
      CHECK(c.steps_emitted == static_cast<std::size_t>(t + 1));
      prev = s;
    }
  }
}
