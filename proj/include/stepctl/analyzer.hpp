#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepctl/trace.hpp"

namespace stepctl {

struct CueConfig {
  std::vector<std::string> reflection_cues{"check", "verify", "wait", "actually"};
  std::vector<std::string> branching_cues{"case", "alternative", "another way", "another approach",
                                          "on the other hand"};
  int window = 2;
};

void to_json(nlohmann::json& j, const CueConfig& c);
void from_json(const nlohmann::json& j, CueConfig& c);

struct MarkedTrace {
  std::vector<bool> reflect_marked;
  std::vector<bool> branch_marked;
  std::size_t reflect_steps = 0;
  std::size_t branch_steps = 0;
  std::size_t reflect_tokens = 0;
  std::size_t branch_tokens = 0;
};

/// Case-insensitive substring match against any cue.
bool contains_cue(std::string_view text, std::span<const std::string> cues);

/// A cue hit at step i marks steps i..min(i+W, last); marks union.
std::vector<bool> forward_window_marks(std::span<const StepRecord> steps, std::span<const std::string> cues,
                                       int window);
MarkedTrace mark_steps(std::span<const StepRecord> steps, const CueConfig& cues);

struct SampleSavings {
  std::string id;
  double total = 0.0;    // max(0, baseline - treated) thought tokens
  double reflect = 0.0;  // max(0, baseline - treated) reflection-marked tokens
  double branch = 0.0;
};

struct AttributionReport {
  std::vector<SampleSavings> samples;
  double reflect_ratio = 0.0;
  double branch_ratio = 0.0;
  double reflect_pearson = 0.0;
  double branch_pearson = 0.0;
  int window = 2;
};

AttributionReport token_savings_attribution(std::span<const TraceDocument> baseline,
                                            std::span<const TraceDocument> treated, const CueConfig& cues);

/// Share of steps (by state_after) in NORMAL/FAST/SLOW/SKIP across all traces.
std::map<ThinkingState, double> state_allocation(std::span<const TraceDocument> traces);

struct Grade {
  std::string gold;
  bool correct = false;
};
using GradeBook = std::map<std::string, Grade>;

GradeBook load_grades(const std::string& path);
void save_grades(const std::string& path, const GradeBook& grades);

/// Truncated traces whose answer was graded incorrect.
std::size_t length_limit_failures(std::span<const TraceDocument> traces, const GradeBook& grades);

struct OutcomeSavings {
  std::optional<double> correct_saving_pct;  // undefined when the stratum is empty
  std::optional<double> incorrect_saving_pct;
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
};

/// Mean relative total-token saving, stratified by the treated run's correctness.
OutcomeSavings outcome_conditioned_savings(std::span<const TraceDocument> baseline,
                                           std::span<const TraceDocument> treated, const GradeBook& treated_grades);

nlohmann::json attribution_json(const AttributionReport& r);
nlohmann::json allocation_json(const std::map<ThinkingState, double>& alloc);
nlohmann::json outcome_json(const OutcomeSavings& s);

}  // namespace stepctl
