#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace biasloop {

enum class Region : std::uint8_t { hair = 0, face = 1, body = 2, background = 3 };
inline constexpr std::array<Region, 4> kAllRegions{Region::hair, Region::face, Region::body, Region::background};

std::string_view to_string(Region region) noexcept;      // "hair"
std::string_view display_name(Region region) noexcept;   // "Hair"
Region region_from_string(std::string_view text);

// Axis-aligned pixel box, half-open: columns [x, x+w), rows [y, y+h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const noexcept { return static_cast<long long>(w) * h; }
  bool contains(int row, int col) const noexcept { return col >= x && col < x + w && row >= y && row < y + h; }
  bool operator==(const Box&) const = default;
};

struct MaskRun {
  int row = 0;
  int start = 0;
  int length = 0;
  bool operator==(const MaskRun&) const = default;
};

class BinaryMask {
 public:
  BinaryMask(int height, int width);

  // Throws GeometryError for runs outside the image.
  static BinaryMask from_runs(int height, int width, const std::vector<MaskRun>& runs);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  bool get(int row, int col) const noexcept { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool value = true) noexcept { bits_[index(row, col)] = value ? 1 : 0; }
  std::size_t count() const noexcept;

  // Canonical row-major run-length encoding (maximal runs, ascending).
  std::vector<MaskRun> runs() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int height_;
  int width_;
  std::vector<std::uint8_t> bits_;
};

struct RegionDiagnostic {
  Region region;
  std::string reason;
};

// Disjoint cover of an image by {hair, face, body, background}: every pixel has
// exactly one owner. Built by saliency::build_regions.
class RegionSet {
 public:
  RegionSet(int height, int width, std::vector<Region> owners, std::vector<RegionDiagnostic> diagnostics);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  Region owner(int row, int col) const noexcept {
    return owners_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col)];
  }
  std::size_t pixel_count(Region region) const noexcept { return counts_[static_cast<std::size_t>(region)]; }
  bool is_present(Region region) const noexcept { return pixel_count(region) > 0; }
  std::vector<Region> regions_present() const;
  BinaryMask mask(Region region) const;

  const std::vector<RegionDiagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  int height_;
  int width_;
  std::vector<Region> owners_;
  std::array<std::size_t, 4> counts_{};
  std::vector<RegionDiagnostic> diagnostics_;
};

}  // namespace biasloop
