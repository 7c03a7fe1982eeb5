#include "biasloop/core/error.hpp"

namespace biasloop {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyDistribution: return "EmptyDistribution";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::DegenerateOutput: return "DegenerateOutput";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::InvalidKernel: return "InvalidKernel";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::GeometryError: return "GeometryError";
    case ErrorCode::DegenerateRegion: return "DegenerateRegion";
    case ErrorCode::UndefinedShares: return "UndefinedShares";
    case ErrorCode::RegionSetMismatch: return "RegionSetMismatch";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::InvalidPValue: return "InvalidPValue";
    case ErrorCode::UndefinedKappa: return "UndefinedKappa";
    case ErrorCode::UndefinedJaccard: return "UndefinedJaccard";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

BackendUnavailable::BackendUnavailable(const std::string& message, std::optional<int> iteration)
    : Error(ErrorCode::BackendUnavailable, message), iteration_(iteration) {}

}  // namespace biasloop
