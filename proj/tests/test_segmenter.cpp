#include <doctest.h>

#include <random>

#include "stepctl/error.hpp"
#include "stepctl/segmenter.hpp"

using namespace stepctl;

namespace {
TokenMeta tok(std::string text) {
  TokenMeta t;
  t.text = std::move(text);
  t.logprob = -0.1;
  t.top_k = {{t.text, -0.1}};
  return t;
}

std::vector<StepEvent> feed_all(Segmenter& s, const std::vector<std::string>& texts) {
  std::vector<StepEvent> out;
  for (const auto& t : texts) {
    auto ev = s.feed_token(tok(t));
    out.insert(out.end(), ev.begin(), ev.end());
  }
  return out;
}
}  // namespace

TEST_CASE("newline closes a step") {
  Segmenter s;
  auto ev = feed_all(s, {"He", "llo", "\n"});
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == StepEventKind::StepComplete);
  CHECK(ev[0].text == "Hello");
  CHECK(ev[0].tokens.size() == 3);
}

TEST_CASE("embedded newline splits the token") {
  Segmenter s;
  auto ev = feed_all(s, {"x = ", "a\nb"});
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].text == "x = a");
  CHECK(s.pending_text() == "b");
  auto last = s.flush();
  REQUIRE(last);
  CHECK(last->text == "b");
  // "a\nb" started in the first step, so the flushed step owns no tokens.
  CHECK(last->tokens.empty());
}

TEST_CASE("think end marker") {
  Segmenter s;
  auto ev = feed_all(s, {"</think>"});
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == StepEventKind::ThinkEnd);
  CHECK(s.ended());
  CHECK_THROWS_AS(s.feed_token(tok("x")), Error);
  try {
    s.feed_token(tok("x"));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FedAfterEnd);
  }
}

TEST_CASE("marker split across tokens, partial step emitted first") {
  Segmenter s;
  auto ev = feed_all(s, {"so x", "=1</", "thi", "nk>"});
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].kind == StepEventKind::StepComplete);
  CHECK(ev[0].text == "so x=1");
  CHECK(ev[1].kind == StepEventKind::ThinkEnd);
  CHECK(ev[0].tokens.size() == 2);
  CHECK(ev[1].tokens.size() == 2);  // "thi" and "nk>" began inside the marker
}

TEST_CASE("text after the marker belongs to the answer") {
  Segmenter s;
  auto ev = feed_all(s, {"done", "</think>\\boxed"});
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].text == "done");
  CHECK(ev[1].kind == StepEventKind::ThinkEnd);
  CHECK(ev[1].text == "\\boxed");
}

TEST_CASE("flush rules") {
  Segmenter a;
  feed_all(a, {"x = 3"});
  auto f = a.flush();
  REQUIRE(f);
  CHECK(f->text == "x = 3");

  Segmenter b;
  CHECK_FALSE(b.flush());

  Segmenter c;
  feed_all(c, {"  \t "});
  CHECK_FALSE(c.flush());
}

TEST_CASE("blank lines are dropped and their tokens carried forward") {
  Segmenter s;
  auto ev = feed_all(s, {"a", "\n", "\n", "  ", "\n", "b", "\n"});
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].text == "a");
  CHECK(ev[1].text == "b");
  CHECK(ev[0].tokens.size() + ev[1].tokens.size() == 7);
}

TEST_CASE("is_blank") {
  CHECK(is_blank(""));
  CHECK(is_blank(" \t"));
  CHECK_FALSE(is_blank(" x "));
}

// Property: over random token streams, tokens are partitioned exactly once
// and the step texts reconstruct the generated text minus blank lines.
TEST_CASE("partition and reconstruction over random streams") {
  std::mt19937_64 rng(42);
  const std::vector<std::string> pieces{"a", "b", " ", "\n", "x\ny", "\n\n", "  \t", "cd", "=1"};
  for (int trial = 0; trial < 500; ++trial) {
    Segmenter s;
    std::string full;
    std::vector<StepEvent> events;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      TokenMeta t = tok(pieces[rng() % pieces.size()]);
      t.rank = i + 1;  // unique tag per token
      full += t.text;
      auto ev = s.feed_token(t);
      events.insert(events.end(), ev.begin(), ev.end());
    }
    if (auto f = s.flush()) events.push_back(*f);
    auto rest = s.take_unattributed();

    std::vector<int> seen;
    std::string rebuilt;
    for (const auto& e : events) {
      CHECK(e.text.find('\n') == std::string::npos);
      for (const auto& t : e.tokens) seen.push_back(t.rank);
      rebuilt += e.text + "\n";
    }
    for (const auto& t : rest) seen.push_back(t.rank);
    REQUIRE(static_cast<int>(seen.size()) == n);
    for (int i = 0; i < n; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i + 1);

    std::string expected;
    std::size_t start = 0;
    while (start <= full.size()) {
      auto nl = full.find('\n', start);
      std::string line = full.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
      if (!is_blank(line)) expected += line + "\n";
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
    CHECK(rebuilt == expected);
  }
}
