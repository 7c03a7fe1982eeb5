#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace biasloop {

enum class ErrorCode {
  EmptyDistribution,
  VocabularyMismatch,
  InvalidArgument,
  BackendUnavailable,
  DegenerateOutput,
  ZeroVector,
  InsufficientData,
  ProtocolViolation,
  InvalidKernel,
  AlignmentError,
  GeometryError,
  DegenerateRegion,
  UndefinedShares,
  RegionSetMismatch,
  EmptyTable,
  InvalidPValue,
  UndefinedKappa,
  UndefinedJaccard,
  EmptyGroup,
  NoConvergence,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a machine-readable code so the
// batch commands can record per-seed/per-image error rows without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class BackendUnavailable : public Error {
 public:
  explicit BackendUnavailable(const std::string& message, std::optional<int> iteration = std::nullopt);

  // Loop iteration reached when the backend gave up (set by the loop engine).
  std::optional<int> iteration() const noexcept { return iteration_; }

 private:
  std::optional<int> iteration_;
};

}  // namespace biasloop
