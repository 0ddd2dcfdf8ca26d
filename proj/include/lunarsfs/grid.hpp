#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lunarsfs {

/// Dense single-channel W×H field of doubles, row-major.
///
/// All numeric work (heights, slopes, albedo, images) runs on this type.
/// File I/O goes through Raster (float32, multi-channel) in dataset.hpp.
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw std::invalid_argument("Grid: negative dimensions");
    }
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] bool empty() const { return values_.empty(); }

  double& operator()(int x, int y) {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  double operator()(int x, int y) const {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }

  [[nodiscard]] bool same_shape(const Grid& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

inline void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()) + ")");
  }
}

[[nodiscard]] double grid_mean(const Grid& g);
[[nodiscard]] double grid_min(const Grid& g);
[[nodiscard]] double grid_max(const Grid& g);

}  // namespace lunarsfs
