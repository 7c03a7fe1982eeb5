#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace biasloop {

// Row-major, nonnegative saliency grid (post-ReLU).
class Heatmap {
 public:
  // Throws InvalidArgument on non-positive dims, size mismatch, or negative/NaN values.
  Heatmap(int height, int width, std::vector<double> values);

  static Heatmap filled(int height, int width, double value);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::span<const double> values() const noexcept { return values_; }

  double at(int row, int col) const noexcept {
    return values_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col)];
  }

  Heatmap scaled(double factor) const;

  bool operator==(const Heatmap&) const = default;

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

}  // namespace biasloop
