#include "biasloop/core/loop_trace.hpp"

#include "biasloop/core/error.hpp"

namespace biasloop {

std::string_view to_string(SeedKind kind) noexcept { return kind == SeedKind::text ? "text" : "image"; }

std::string_view to_string(Termination termination) noexcept {
  return termination == Termination::converged ? "converged" : "max_iterations";
}

SeedKind seed_kind_from_string(std::string_view text) {
  if (text == "text") return SeedKind::text;
  if (text == "image") return SeedKind::image;
  throw Error(ErrorCode::InvalidArgument, "unknown seed kind '" + std::string(text) + "'");
}

Termination termination_from_string(std::string_view text) {
  if (text == "converged") return Termination::converged;
  if (text == "max_iterations") return Termination::max_iterations;
  throw Error(ErrorCode::InvalidArgument, "unknown termination '" + std::string(text) + "'");
}

}  // namespace biasloop
