#include "biasloop/core/geometry.hpp"

#include <algorithm>

#include "biasloop/core/error.hpp"
#include "biasloop/core/labels.hpp"

namespace biasloop {

std::string_view to_string(Region region) noexcept {
  switch (region) {
    case Region::hair: return "hair";
    case Region::face: return "face";
    case Region::body: return "body";
    case Region::background: return "background";
  }
  return "?";
}

std::string_view display_name(Region region) noexcept {
  switch (region) {
    case Region::hair: return "Hair";
    case Region::face: return "Face";
    case Region::body: return "Body";
    case Region::background: return "Background";
  }
  return "?";
}

Region region_from_string(std::string_view text) {
  const auto norm = normalize_label(text);
  for (auto region : kAllRegions)
    if (norm == to_string(region)) return region;
  throw Error(ErrorCode::InvalidArgument, "unknown region '" + std::string(text) + "'");
}

BinaryMask::BinaryMask(int height, int width) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw Error(ErrorCode::GeometryError, "mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0);
}

BinaryMask BinaryMask::from_runs(int height, int width, const std::vector<MaskRun>& runs) {
  BinaryMask mask(height, width);
  for (const auto& run : runs) {
    if (run.row < 0 || run.row >= height || run.start < 0 || run.length < 0 || run.start + run.length > width)
      throw Error(ErrorCode::GeometryError, "mask run (" + std::to_string(run.row) + ", " + std::to_string(run.start) +
                                                 ", " + std::to_string(run.length) + ") lies outside the image");
    for (int c = run.start; c < run.start + run.length; ++c) mask.set(run.row, c);
  }
  return mask;
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<MaskRun> BinaryMask::runs() const {
  std::vector<MaskRun> out;
  for (int r = 0; r < height_; ++r) {
    int c = 0;
    while (c < width_) {
      if (!get(r, c)) {
        ++c;
        continue;
      }
      const int start = c;
      while (c < width_ && get(r, c)) ++c;
      out.push_back({r, start, c - start});
    }
  }
  return out;
}

RegionSet::RegionSet(int height, int width, std::vector<Region> owners, std::vector<RegionDiagnostic> diagnostics)
    : height_(height), width_(width), owners_(std::move(owners)), diagnostics_(std::move(diagnostics)) {
  if (height <= 0 || width <= 0) throw Error(ErrorCode::GeometryError, "image dimensions must be positive");
  if (owners_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
    throw Error(ErrorCode::GeometryError, "owner map does not match image dimensions");
  for (auto region : owners_) ++counts_[static_cast<std::size_t>(region)];
}

std::vector<Region> RegionSet::regions_present() const {
  std::vector<Region> out;
  for (auto region : kAllRegions)
    if (is_present(region)) out.push_back(region);
  return out;
}

BinaryMask RegionSet::mask(Region region) const {
  BinaryMask out(height_, width_);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      if (owner(r, c) == region) out.set(r, c);
  return out;
}

}  // namespace biasloop
