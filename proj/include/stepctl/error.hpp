#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stepctl {

enum class Errc {
  ThresholdOrderViolation,
  OverlappingHysteresisBands,
  NonPositiveWindow,
  InvalidSampling,
  FedAfterEnd,
  EmptyTopK,
  EmptyStep,
  ProviderDimensionMismatch,
  ProviderFailure,
  DimensionMismatch,
  EmptyDataset,
  InvalidTrainConfig,
  UnsupportedVersion,
  CorruptCheckpoint,
  TransitionAfterEnd,
  BackendFailure,
  LengthMismatch,
  TooShort,
  UnpairedSamples,
  EmptyInput,
  MissingGrades,
  BadManifest,
  MalformedInput,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace stepctl
