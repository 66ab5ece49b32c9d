#include "stepctl/features.hpp"

#include <cmath>
#include <numeric>

#include "stepctl/embedding.hpp"
#include "stepctl/error.hpp"

namespace stepctl {

std::array<double, kUncertaintyDim> UncertaintyFeatures::to_array() const noexcept {
  return {logprob, selected_rank, entropy, logit_gap, margin, topk_mass_5,
          topk_mass_10, d_logp, d_entropy, d_margin, z_logp};
}

UncertaintyFeatures token_features(const TokenMeta& tok, const std::optional<UncertaintyFeatures>& prev,
                                   std::span<const double> logp_window) {
  if (tok.top_k.empty()) throw Error(Errc::EmptyTopK, "token '" + tok.text + "' has no top-k logprobs");

  UncertaintyFeatures f;
  f.logprob = tok.logprob;
  f.selected_rank = static_cast<double>(tok.rank);

  // Raw truncated top-K probabilities, no renormalization.
  double mass = 0.0;
  for (std::size_t i = 0; i < tok.top_k.size(); ++i) {
    const double lp = tok.top_k[i].second;
    const double p = std::exp(lp);
    if (p > 0.0) f.entropy -= p * lp;
    mass += p;
    if (i + 1 == 5) f.topk_mass_5 = mass;
    if (i + 1 == 10) f.topk_mass_10 = mass;
  }
  if (tok.top_k.size() < 5) f.topk_mass_5 = mass;
  if (tok.top_k.size() < 10) f.topk_mass_10 = mass;

  const double lp1 = tok.top_k[0].second;
  if (tok.top_k.size() >= 2) {
    const double lp2 = tok.top_k[1].second;
    f.logit_gap = lp1 - lp2;
    f.margin = std::exp(lp1) - std::exp(lp2);
  } else {
    f.logit_gap = 0.0;
    f.margin = std::exp(lp1);
  }

  if (prev) {
    f.d_logp = f.logprob - prev->logprob;
    f.d_entropy = f.entropy - prev->entropy;
    f.d_margin = f.margin - prev->margin;
  }

  if (logp_window.size() >= 2) {
    const double n = static_cast<double>(logp_window.size());
    const double mean = std::accumulate(logp_window.begin(), logp_window.end(), 0.0) / n;
    double var = 0.0;
    for (double x : logp_window) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    if (sd >= 1e-9) f.z_logp = (f.logprob - mean) / sd;
  }
  return f;
}

UncertaintyVector pool_step(std::span<const UncertaintyFeatures> features) {
  if (features.empty()) throw Error(Errc::EmptyStep, "cannot pool a step with no tokens");
  UncertaintyVector out{};
  for (const auto& f : features) {
    const auto a = f.to_array();
    for (std::size_t i = 0; i < kUncertaintyDim; ++i) out[i] += a[i];
  }
  const double n = static_cast<double>(features.size());
  for (double& x : out) x /= n;
  return out;
}

StepFeatureVector fuse(const UncertaintyVector& h_unc, const EmbeddingProvider& provider,
                       std::string_view step_text) {
  StepFeatureVector out;
  out.h_unc = h_unc;
  out.h_sem = provider.embed(step_text);
  if (out.h_sem.size() != kSemanticDim) {
    throw Error(Errc::ProviderDimensionMismatch, "embedding provider returned " +
                                                     std::to_string(out.h_sem.size()) + " dims, expected " +
                                                     std::to_string(kSemanticDim));
  }
  out.z.reserve(kFeatureDim);
  out.z.insert(out.z.end(), h_unc.begin(), h_unc.end());
  out.z.insert(out.z.end(), out.h_sem.begin(), out.h_sem.end());
  return out;
}

UncertaintyFeatures FeatureTracker::push(const TokenMeta& tok) {
  const std::vector<double> window(window_.begin(), window_.end());
  UncertaintyFeatures f = token_features(tok, prev_, window);
  prev_ = f;
  window_.push_back(tok.logprob);
  if (window_.size() > kZScoreWindow) window_.pop_front();
  return f;
}

std::vector<UncertaintyFeatures> FeatureTracker::push_all(std::span<const TokenMeta> tokens) {
  std::vector<UncertaintyFeatures> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(push(t));
  return out;
}

void FeatureTracker::reset() {
  prev_.reset();
  window_.clear();
}

}  // namespace stepctl
