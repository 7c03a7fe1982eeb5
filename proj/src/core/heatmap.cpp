#include "biasloop/core/heatmap.hpp"

#include <algorithm>
#include <string>

#include "biasloop/core/error.hpp"

namespace biasloop {

Heatmap::Heatmap(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height_ <= 0 || width_ <= 0) throw Error(ErrorCode::InvalidArgument, "heatmap dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_))
    throw Error(ErrorCode::InvalidArgument, "heatmap has " + std::to_string(values_.size()) + " values for a " +
                                                std::to_string(height_) + "x" + std::to_string(width_) + " grid");
  for (double v : values_)
    if (!(v >= 0.0)) throw Error(ErrorCode::InvalidArgument, "heatmap values must be nonnegative");
}

Heatmap Heatmap::filled(int height, int width, double value) {
  return Heatmap(height, width,
                 std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) * static_cast<std::size_t>(std::max(width, 0)), value));
}

Heatmap Heatmap::scaled(double factor) const {
  auto values = values_;
  for (auto& v : values) v *= factor;
  return Heatmap(height_, width_, std::move(values));
}

}  // namespace biasloop
