#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "stepctl/segmenter.hpp"

namespace stepctl {

class EmbeddingProvider;

inline constexpr std::size_t kUncertaintyDim = 11;
inline constexpr std::size_t kSemanticDim = 384;
inline constexpr std::size_t kFeatureDim = kUncertaintyDim + kSemanticDim;
inline constexpr std::size_t kZScoreWindow = 20;

/// Per-token uncertainty metrics. Field order is the order of the pooled vector.
struct UncertaintyFeatures {
  // static
  double logprob = 0.0;
  double selected_rank = 0.0;
  double entropy = 0.0;
  double logit_gap = 0.0;
  double margin = 0.0;
  double topk_mass_5 = 0.0;
  double topk_mass_10 = 0.0;
  // dynamic
  double d_logp = 0.0;
  double d_entropy = 0.0;
  double d_margin = 0.0;
  double z_logp = 0.0;

  std::array<double, kUncertaintyDim> to_array() const noexcept;
};

using UncertaintyVector = std::array<double, kUncertaintyDim>;

struct StepFeatureVector {
  UncertaintyVector h_unc{};
  std::vector<double> h_sem;  // kSemanticDim entries
  std::vector<double> z;      // [h_unc; h_sem]
};

/// Computes one token's features. `logp_window` holds the preceding token
/// logprobs (most recent last, at most kZScoreWindow entries).
UncertaintyFeatures token_features(const TokenMeta& tok, const std::optional<UncertaintyFeatures>& prev,
                                   std::span<const double> logp_window);

/// Element-wise mean over a step's tokens.
UncertaintyVector pool_step(std::span<const UncertaintyFeatures> features);

StepFeatureVector fuse(const UncertaintyVector& h_unc, const EmbeddingProvider& provider,
                       std::string_view step_text);

/// Session-level token state: the previous token's features and the z-score
/// window. Crosses step boundaries.
class FeatureTracker {
 public:
  UncertaintyFeatures push(const TokenMeta& tok);
  std::vector<UncertaintyFeatures> push_all(std::span<const TokenMeta> tokens);
  void reset();

 private:
  std::optional<UncertaintyFeatures> prev_;
  std::deque<double> window_;
};

}  // namespace stepctl
