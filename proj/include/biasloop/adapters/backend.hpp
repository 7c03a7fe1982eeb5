#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "biasloop/core/heatmap.hpp"
#include "biasloop/core/loop_trace.hpp"

namespace biasloop::adapters {

enum class Capability { generate, describe, embed, saliency };
std::string_view to_string(Capability capability) noexcept;

enum class Modality { text, image };
std::string_view to_string(Modality modality) noexcept;

// What to embed: description text or an image.
using EmbedPayload = std::variant<std::string, Image>;
inline Modality modality_of(const EmbedPayload& payload) noexcept {
  return std::holds_alternative<std::string>(payload) ? Modality::text : Modality::image;
}

// The four model capabilities the loop and the saliency stage consume.
// Implementations must be safe for concurrent calls. Transport failures are
// reported as BackendUnavailable, malformed responses as ProtocolViolation.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual Image generate_image(const std::string& prompt, std::uint64_t seed) = 0;
  virtual Description describe_image(const std::string& prompt, const Image& image) = 0;
  virtual Embedding embed(const EmbedPayload& payload) = 0;
  virtual Heatmap fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) = 0;
};

}  // namespace biasloop::adapters
