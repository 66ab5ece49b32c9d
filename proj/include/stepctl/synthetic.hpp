#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stepctl/embedding.hpp"
#include "stepctl/features.hpp"
#include "stepctl/segmenter.hpp"

namespace stepctl {

// Synthetic teacher: v*_t = sigmoid(a * mean(h_unc_t) + c * s_t), where s_t is
// an AR(1) walk driven by a seeded unit projection of h_sem_t:
//   s_t = rho * s_{t-1} + sqrt(1 - rho^2) * sqrt(384) * (u . h_sem_t),  s_0 = 0.
inline constexpr double kTeacherUncWeight = 2.0;      // a
inline constexpr double kTeacherWalkWeight = 1.5;     // c
inline constexpr double kTeacherWalkPersistence = 0.8;  // rho

std::vector<double> synth_teacher(std::span<const StepFeatureVector> trajectory, std::uint64_t seed);

/// Builds a token whose top-K distribution is centered on `confidence`, the
/// probability of the most likely candidate. Deterministic in `rng_state`.
TokenMeta synthesize_token(std::string text, double confidence, int top_k, std::uint64_t& rng_state);

/// Splits text into word-like tokens (leading spaces attached to the word).
std::vector<std::string> split_words(const std::string& text);

struct SyntheticTrajectory {
  std::string id;
  std::vector<StepFeatureVector> steps;
  std::vector<double> targets;
};

/// Random reasoning-like trajectories pushed through the real feature
/// pipeline (token features, pooling, hashing embedding), labelled by synth_teacher.
std::vector<SyntheticTrajectory> make_synthetic_dataset(std::size_t count, std::uint64_t seed,
                                                        std::uint64_t teacher_seed, int top_k = 20);

double unit_uniform(std::uint64_t& rng_state) noexcept;

}  // namespace stepctl
