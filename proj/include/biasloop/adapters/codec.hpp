#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasloop/core/loop_trace.hpp"

namespace biasloop::adapters {

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws ProtocolViolation on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

// 8-bit RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::uint8_t* pixel(int row, int col) noexcept {
    return rgb.data() + 3 * (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col));
  }
  const std::uint8_t* pixel(int row, int col) const noexcept {
    return rgb.data() + 3 * (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col));
  }
};

Image encode_png(const RgbImage& raster);
// Throws ProtocolViolation when the bytes are not a decodable PNG.
RgbImage decode_png(const Image& image);

// Lowercase hex SHA-1 of "blob <size>\0<bytes>" (git object id of the content).
std::string git_blob_hash(std::string_view content);

}  // namespace biasloop::adapters
