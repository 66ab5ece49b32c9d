#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepctl/analyzer.hpp"
#include "stepctl/config.hpp"
#include "stepctl/openai_backend.hpp"
#include "stepctl/pilot.hpp"
#include "stepctl/synthetic.hpp"

namespace stepctl {

struct Question {
  std::string id;
  std::string question;
  std::string gold;
};

/// JSONL dataset, one {id, question, gold} per line.
std::vector<Question> load_dataset(const std::string& path);

/// Exact match after removing all whitespace.
bool answers_match(const std::optional<std::string>& predicted, const std::string& gold);

enum class BackendKind { Scripted, OpenAi };

struct RunManifest {
  std::string dataset_path;
  BackendKind backend = BackendKind::Scripted;
  std::string script_path;  // scripted backend
  OpenAiBackendOptions openai;
  ControllerConfig config;
  std::string output_path;
  std::optional<std::string> grades_output_path;
  std::uint64_t seed = 0;
  std::optional<std::string> pilot_checkpoint;  // otherwise a seeded untrained pilot
  int pilot_hidden_dim = kDefaultHiddenDim;
  std::optional<double> constant_difficulty;  // replaces the pilot with a constant score
  std::optional<std::string> embedding_url;   // otherwise the hashing embedding
  int parallel = 1;
  bool record_timing = true;
  bool append = false;
};

/// Checks referenced paths and bounds; throws BadManifest.
void validate_manifest(const RunManifest& m);

struct QuestionSummary {
  std::string id;
  std::size_t total_tokens = 0;
  std::size_t steps = 0;
  std::size_t fast = 0, normal = 0, slow = 0, skip = 0;
  std::optional<std::string> answer;
  std::string gold;
  bool correct = false;
  bool truncated = false;
  std::optional<std::string> error;
};

struct RunSummary {
  std::vector<QuestionSummary> rows;
  std::size_t correct = 0;
  std::size_t backend_failures = 0;

  double accuracy() const noexcept;
};

RunSummary cmd_run(const RunManifest& manifest);
std::string format_run_summary(const RunSummary& summary);

/// JSONL distillation data: {"id", "z": [[395 reals] per step], "targets": [...]}.
std::vector<TrainSample> load_train_samples(const std::string& path);
void write_train_samples(const std::string& path, const std::vector<SyntheticTrajectory>& data);

struct TrainCommand {
  std::string data_path;
  std::string checkpoint_path;
  std::optional<std::string> loss_curve_path;
  TrainConfig train;
  int hidden_dim = kDefaultHiddenDim;
  double holdout_fraction = 0.2;
};

struct TrainCommandResult {
  std::vector<double> loss_history;
  std::size_t n_train = 0;
  std::size_t n_holdout = 0;
  std::optional<double> holdout_pearson;
  std::optional<double> holdout_spearman;
  double seconds = 0.0;
};

/// Splits samples into train/held-out sets (seeded), trains, writes the checkpoint.
TrainCommandResult cmd_train_pilot(const TrainCommand& cmd);

/// Held-out Pearson/Spearman of predictions against targets over all steps.
std::pair<double, double> evaluate_fidelity(const PilotModel& model, std::span<const TrainSample> samples);

struct AnalyzeCommand {
  std::string baseline_path;
  std::string treated_path;
  std::string grades_path;                          // grades for the treated run
  std::optional<std::string> baseline_grades_path;  // optional, for baseline failure counts
  CueConfig cues;
};

nlohmann::json cmd_analyze(const AnalyzeCommand& cmd);
nlohmann::json analyze_traces(std::span<const TraceDocument> baseline, std::span<const TraceDocument> treated,
                              const GradeBook& grades, const GradeBook* baseline_grades, const CueConfig& cues);
std::string format_analysis_table(const nlohmann::json& report);

}  // namespace stepctl
