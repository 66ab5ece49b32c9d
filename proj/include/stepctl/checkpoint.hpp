#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepctl/pilot.hpp"

namespace stepctl {

inline constexpr int kCheckpointFormatVersion = 1;

struct TrainingMetadata {
  std::optional<std::uint64_t> seed;
  std::vector<double> loss_history;
};

/// JSON checkpoint:
///   {format_version, hidden_dim, input_dim,
///    params: {update|reset|candidate: {weight, bias}, head: {weight, bias}},
///    metadata: {seed, loss_history}}
/// Weights are flat row-major arrays; head.bias is a one-element array.
nlohmann::json save_checkpoint(const PilotModel& model, const TrainingMetadata& meta = {});
PilotModel load_checkpoint(const nlohmann::json& doc, TrainingMetadata* meta = nullptr);

void save_checkpoint_file(const std::string& path, const PilotModel& model, const TrainingMetadata& meta = {});
PilotModel load_checkpoint_file(const std::string& path, TrainingMetadata* meta = nullptr);

}  // namespace stepctl
