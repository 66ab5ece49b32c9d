#include "stepctl/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace stepctl {

namespace {

double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> teacher_direction(std::uint64_t seed) {
  std::uint64_t state = seed ^ 0x7eac4e7d1cULL;
  std::vector<double> u(kSemanticDim);
  double norm = 0.0;
  for (double& x : u) {
    x = 2.0 * unit_uniform(state) - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : u) x /= norm;
  return u;
}

constexpr std::array<const char*, 40> kVocab{
    "let",    "x",      "=",      "3",       "so",      "the",    "sum",     "is",     "then",   "we",
    "get",    "2",      "+",      "5",       "times",   "equals", "7",       "check",  "wait",   "case",
    "factor", "square", "root",   "of",      "divide",  "by",     "both",    "sides",  "gives",  "answer",
    "hmm",    "verify", "again",  "number",  "integer", "prime",  "modulo",  "12",     "therefore", "value"};

}  // namespace

double unit_uniform(std::uint64_t& rng_state) noexcept {
  return static_cast<double>(splitmix64(rng_state) >> 11) * 0x1.0p-53;
}

std::vector<double> synth_teacher(std::span<const StepFeatureVector> trajectory, std::uint64_t seed) {
  const std::vector<double> u = teacher_direction(seed);
  const double gain = std::sqrt(1.0 - kTeacherWalkPersistence * kTeacherWalkPersistence) *
                      std::sqrt(static_cast<double>(kSemanticDim));
  std::vector<double> out;
  out.reserve(trajectory.size());
  double walk = 0.0;
  for (const auto& step : trajectory) {
    double proj = 0.0;
    for (std::size_t i = 0; i < std::min(step.h_sem.size(), kSemanticDim); ++i) proj += u[i] * step.h_sem[i];
    walk = kTeacherWalkPersistence * walk + gain * proj;
    const double mean_unc =
        std::accumulate(step.h_unc.begin(), step.h_unc.end(), 0.0) / static_cast<double>(kUncertaintyDim);
    out.push_back(sigmoid(kTeacherUncWeight * mean_unc + kTeacherWalkWeight * walk));
  }
  return out;
}

TokenMeta synthesize_token(std::string text, double confidence, int top_k, std::uint64_t& rng_state) {
  const int k = std::max(top_k, 2);
  // Jitter in logit space: a hard clamp would produce runs of identical
  // logprobs, and near-zero window spread blows up the z-score feature.
  const double c = std::clamp(confidence, 0.02, 0.98);
  const double logit = std::log(c / (1.0 - c)) + 2.0 * (unit_uniform(rng_state) - 0.5);
  const double p1 = 1.0 / (1.0 + std::exp(-logit));
  // Tail keeps 95% of the remaining mass, geometrically decaying.
  const double ratio = 0.6;
  const double tail = 0.95 * (1.0 - p1);
  const double norm = (1.0 - std::pow(ratio, k - 1)) / (1.0 - ratio);

  std::vector<double> probs;
  probs.reserve(static_cast<std::size_t>(k));
  probs.push_back(p1);
  for (int i = 0; i < k - 1; ++i) probs.push_back(tail * std::pow(ratio, i) / norm);
  std::sort(probs.begin(), probs.end(), std::greater<>());

  // Low-confidence tokens sometimes sample the runner-up.
  const std::size_t chosen = unit_uniform(rng_state) < 0.5 * (1.0 - confidence) ? 1 : 0;

  TokenMeta tok;
  tok.top_k.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    tok.top_k.emplace_back(i == chosen ? text : "<alt" + std::to_string(i) + ">", std::log(probs[i]));
  }
  tok.logprob = tok.top_k[chosen].second;
  tok.rank = static_cast<int>(chosen) + 1;
  tok.text = std::move(text);
  return tok;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if ((ch == ' ' || ch == '\n') && !cur.empty() && cur.back() != ' ') {
      out.push_back(std::move(cur));
      cur.clear();
    }
    cur += ch;
    if (ch == '\n') {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<SyntheticTrajectory> make_synthetic_dataset(std::size_t count, std::uint64_t seed,
                                                        std::uint64_t teacher_seed, int top_k) {
  const HashEmbedding embedding(seed ^ 0xe111bedULL);
  std::uint64_t rng = seed;
  std::vector<SyntheticTrajectory> out;
  out.reserve(count);

  for (std::size_t n = 0; n < count; ++n) {
    SyntheticTrajectory traj;
    traj.id = "synth-" + std::to_string(n);
    FeatureTracker tracker;
    const int n_steps = 8 + static_cast<int>(unit_uniform(rng) * 17);  // 8..24
    for (int s = 0; s < n_steps; ++s) {
      const int n_words = 3 + static_cast<int>(unit_uniform(rng) * 10);
      const double confidence = 0.3 + 0.68 * unit_uniform(rng);
      std::string text;
      std::vector<UncertaintyFeatures> feats;
      for (int w = 0; w < n_words; ++w) {
        std::string word = kVocab[static_cast<std::size_t>(unit_uniform(rng) * kVocab.size())];
        if (w > 0) word.insert(word.begin(), ' ');
        text += word;
        feats.push_back(tracker.push(synthesize_token(std::move(word), confidence, top_k, rng)));
      }
      traj.steps.push_back(fuse(pool_step(feats), embedding, text));
    }
    traj.targets = synth_teacher(traj.steps, teacher_seed);
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace stepctl
