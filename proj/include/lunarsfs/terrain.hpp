#pragma once

#include <cstdint>
#include <vector>

#include "lunarsfs/grid.hpp"
#include "lunarsfs/vec3.hpp"

namespace lunarsfs {

/// Height field in meters with square pixels of `pixel_size` meters.
struct Dem {
  Grid heights;
  double pixel_size = 1.0;

  Dem() = default;
  Dem(Grid h, double pixel) : heights(std::move(h)), pixel_size(pixel) {}

  [[nodiscard]] int width() const { return heights.width(); }
  [[nodiscard]] int height() const { return heights.height(); }

  /// Throws std::invalid_argument unless W, H >= 3, pixel_size > 0 and all
  /// heights are finite.
  void validate() const;
};

/// Surface slopes dz/dx (p) and dz/dy (q), dimensionless.
struct GradientField {
  Grid p;
  Grid q;
};

class NormalMap {
 public:
  NormalMap() = default;
  NormalMap(int width, int height) : width_(width), height_(height), normals_(
      static_cast<std::size_t>(width) * height, Vec3{0.0, 0.0, 1.0}) {}

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  Vec3& operator()(int x, int y) { return normals_[static_cast<std::size_t>(y) * width_ + x]; }
  Vec3 operator()(int x, int y) const { return normals_[static_cast<std::size_t>(y) * width_ + x]; }
  [[nodiscard]] const std::vector<Vec3>& normals() const { return normals_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Vec3> normals_;
};

/// Central differences in the interior, one-sided at the borders.
GradientField gradient_field(const Dem& dem);
GradientField gradient_field(const Grid& heights, double pixel_size);

/// Transpose of the gradient_field operator: returns D_x^T gx + D_y^T gy.
Grid gradient_field_adjoint(const Grid& gx, const Grid& gy, double pixel_size);

/// Unit normal (-p, -q, 1)/sqrt(p^2 + q^2 + 1).
inline Vec3 normal_from_slopes(double p, double q) {
  const double inv = 1.0 / std::sqrt(p * p + q * q + 1.0);
  return {-p * inv, -q * inv, inv};
}

NormalMap normals_from_gradient(const GradientField& gf);

/// Slope angle arctan(sqrt(p^2 + q^2)) in radians.
Grid slope_map(const GradientField& gf);

/// Gaussian low-pass with sigma = scale/2 pixels and radius ceil(3 sigma).
/// Borders use half-sample symmetric reflection, which keeps the grid mean.
/// scale == 1 returns the input unchanged.
Grid lowpass(const Grid& grid, double scale);

/// Transpose of lowpass for the same scale.
Grid lowpass_adjoint(const Grid& grid, double scale);

/// Normalized 1-D Gaussian taps for the given scale (index 0 is offset -radius).
std::vector<double> lowpass_kernel(double scale);

struct TerrainSpec {
  int width = 128;
  int height = 128;
  double pixel_size = 1.0;  // m
  int crater_count = 8;
  double crater_radius_min = 4.0;   // m
  double crater_radius_max = 16.0;  // m
  double crater_depth_ratio_min = 0.10;  // depth / diameter
  double crater_depth_ratio_max = 0.20;
  double rim_height_ratio = 0.25;        // rim crest height / depth
  double fractal_amplitude = 1.0;        // RMS of the fractal base, m
  double roughness_exponent = 2.0;       // amplitude spectrum falls as |k|^-exponent
  std::uint64_t seed = 1;

  void validate() const;
};

struct Crater {
  double center_x = 0.0;  // pixels
  double center_y = 0.0;
  double radius = 0.0;    // m
  double depth = 0.0;     // m below the surrounding plain
  double rim_height = 0.0;
};

/// Crater placements drawn by synth_terrain for this spec.
std::vector<Crater> sample_craters(const TerrainSpec& spec);

/// Height contribution of a single crater at horizontal distance `r` (m)
/// from its center.
double crater_profile(const Crater& crater, double r);

/// Fractal base surface plus craters, deterministic per seed.
Dem synth_terrain(const TerrainSpec& spec);

}  // namespace lunarsfs
