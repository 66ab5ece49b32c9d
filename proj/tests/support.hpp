#pragma once

// Independent reference implementations used as test oracles, plus fixture
// builders shared by the unit tests and the acceptance binary. Nothing in
// here calls into the code under test except to build inputs.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stepctl/analyzer.hpp"
#include "stepctl/config.hpp"
#include "stepctl/pilot.hpp"
#include "stepctl/trace.hpp"

namespace oracle {

using stepctl::ThinkingState;

// Reference FSM: recomputes every decision from the full score list. Written
// straight from the transition rules, with no ring buffer.
struct RefFsm {
  stepctl::FsmConfig cfg;
  ThinkingState state = ThinkingState::Init;
  std::vector<double> scores;

  bool last_k_all(int k, bool below, double tau) const {
    if (static_cast<int>(scores.size()) < k) return false;
    for (int i = 0; i < k; ++i) {
      double r = scores[scores.size() - 1 - i];
      if (below ? !(r < tau) : !(r > tau)) return false;
    }
    return true;
  }

  ThinkingState step(double r, bool end = false) {
    if (end) return state = ThinkingState::End;
    scores.push_back(r);
    ThinkingState s = state;
    if (state == ThinkingState::Init) {
      s = ThinkingState::Normal;
    } else if (state == ThinkingState::Normal) {
      if (last_k_all(cfg.k_slow, false, cfg.tau_slow)) s = ThinkingState::Slow;
      if (last_k_all(cfg.k_fast, true, cfg.tau_fast)) s = ThinkingState::Fast;
    } else if (state == ThinkingState::Fast) {
      if (r > cfg.tau_fast + cfg.delta) s = ThinkingState::Normal;
    } else if (state == ThinkingState::Slow) {
      if (r < cfg.tau_slow - cfg.delta) s = ThinkingState::Normal;
    }
    if (s == ThinkingState::Slow && last_k_all(cfg.k_skip, false, cfg.tau_skip)) s = ThinkingState::Skip;
    return state = s;
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Element-by-element GRU over the flat parameter layout: per gate a
// row-major H x (I+H) weight then an H bias (update, reset, candidate), then
// the head weight (H) and bias.
inline std::vector<double> scalar_gru(const std::vector<double>& p, int H, int I,
                                      const std::vector<std::vector<double>>& zs) {
  const int cols = I + H;
  auto W = [&](int gate, int row, int col) { return p[gate * H * (cols + 1) + row * cols + col]; };
  auto B = [&](int gate, int row) { return p[gate * H * (cols + 1) + H * cols + row]; };
  const int head = 3 * H * (cols + 1);

  std::vector<double> h(H, 0.0), out;
  for (const auto& z : zs) {
    std::vector<double> u(H), r(H), c(H), hn(H);
    for (int i = 0; i < H; ++i) {
      double au = B(0, i), ar = B(1, i);
      for (int j = 0; j < I; ++j) {
        au += W(0, i, j) * z[j];
        ar += W(1, i, j) * z[j];
      }
      for (int j = 0; j < H; ++j) {
        au += W(0, i, I + j) * h[j];
        ar += W(1, i, I + j) * h[j];
      }
      u[i] = sigmoid(au);
      r[i] = sigmoid(ar);
    }
    for (int i = 0; i < H; ++i) {
      double ac = B(2, i);
      for (int j = 0; j < I; ++j) ac += W(2, i, j) * z[j];
      for (int j = 0; j < H; ++j) ac += W(2, i, I + j) * r[j] * h[j];
      c[i] = std::tanh(ac);
    }
    double logit = p[head + H];
    for (int i = 0; i < H; ++i) {
      hn[i] = (1.0 - u[i]) * h[i] + u[i] * c[i];
      logit += p[head + i] * hn[i];
    }
    h = hn;
    out.push_back(sigmoid(logit));
  }
  return out;
}

inline std::vector<std::vector<double>> random_inputs(std::mt19937_64& rng, int I, int T, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<std::vector<double>> zs(T, std::vector<double>(I));
  for (auto& z : zs)
    for (auto& x : z) x = d(rng);
  return zs;
}

inline stepctl::TrainSample to_sample(const std::vector<std::vector<double>>& zs, std::vector<double> targets) {
  stepctl::TrainSample s;
  s.inputs.resize(static_cast<Eigen::Index>(zs.empty() ? 0 : zs[0].size()), static_cast<Eigen::Index>(zs.size()));
  for (std::size_t t = 0; t < zs.size(); ++t)
    for (std::size_t i = 0; i < zs[t].size(); ++i) s.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = zs[t][i];
  s.targets = std::move(targets);
  return s;
}

// Max relative error between the analytic gradient and central differences.
// The denominator is floored at `floor` so parameters whose gradient is
// numerically zero are judged on absolute error.
inline double gradient_check(stepctl::PilotModel model, const std::vector<stepctl::TrainSample>& batch,
                             double h = 1e-5, double floor = 1e-5) {
  std::vector<double> grad;
  stepctl::loss_and_gradient(model, batch, grad);
  auto params = model.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = stepctl::mean_loss(model, batch);
    params[i] = saved - h;
    const double down = stepctl::mean_loss(model, batch);
    params[i] = saved;
    const double num = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(num), std::abs(grad[i]), floor});
    worst = std::max(worst, std::abs(num - grad[i]) / denom);
  }
  return worst;
}

// --- attribution fixture ---------------------------------------------------
//
// Three hand-built pairs under the default cues. Values worked out by hand:
//
//   pair a  baseline 10|5*|3*|4*|2 (step 2 "Wait, check that", W=2 marks 2..4)
//           thought 24, reflect 12; treated 8|2, thought 10, reflect 0
//           saving total 14, reflect 12, branch 0
//   pair b  baseline "Case 1"(6) "then y"(4) "Actually no"(3)
//           thought 13, reflect 3 (last step only), branch 13
//           treated "Case 1"(6) "then y"(4): thought 10, reflect 0, branch 10
//           saving total 3, reflect 3, branch 3
//   pair c  baseline 5 tokens, treated 7 tokens with a "verify" step
//           saving total 0, reflect 0, branch 0 (positive-only)
//
//   reflect_ratio = 15/17, branch_ratio = 3/17
//   totals (14,3,0) vs reflect (12,3,0): cov 92, var 978/9 and 78
//   totals vs branch (0,3,0): cov -8, var 978/9 and 6
//   W=1: reflect savings 8 + 3 -> 11/17; W=0: 5 + 3 -> 8/17
inline constexpr double kFixtureReflectRatio = 15.0 / 17.0;
inline constexpr double kFixtureBranchRatio = 3.0 / 17.0;
inline double fixture_reflect_pearson() { return 92.0 / std::sqrt(978.0 / 9.0 * 78.0); }
inline double fixture_branch_pearson() { return -8.0 / std::sqrt(978.0 / 9.0 * 6.0); }
inline constexpr double kFixtureReflectRatioW1 = 11.0 / 17.0;
inline constexpr double kFixtureReflectRatioW0 = 8.0 / 17.0;

inline stepctl::TraceDocument make_trace(const std::string& id,
                                         const std::vector<std::pair<std::string, std::size_t>>& steps) {
  stepctl::TraceDocument d;
  d.id = id;
  std::size_t total = 0;
  for (const auto& [text, n] : steps) {
    stepctl::StepRecord s;
    s.index = d.steps.size();
    s.text = text;
    s.token_count = n;
    s.state_after = ThinkingState::Normal;
    total += n;
    d.steps.push_back(std::move(s));
  }
  d.total_tokens = total;
  return d;
}

inline std::pair<std::vector<stepctl::TraceDocument>, std::vector<stepctl::TraceDocument>> attribution_fixture() {
  std::vector<stepctl::TraceDocument> base{
      make_trace("a", {{"Let x be 2", 10}, {"Wait, check that", 5}, {"ok", 3}, {"fine", 4}, {"done", 2}}),
      make_trace("b", {{"Case 1: x>0", 6}, {"then y", 4}, {"Actually no", 3}}),
      make_trace("c", {{"compute", 5}}),
  };
  std::vector<stepctl::TraceDocument> treated{
      make_trace("a", {{"Let x be 2", 8}, {"done", 2}}),
      make_trace("b", {{"Case 1: x>0", 6}, {"then y", 4}}),
      make_trace("c", {{"compute", 4}, {"verify", 3}}),
  };
  return {base, treated};
}

}  // namespace oracle
