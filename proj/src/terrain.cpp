#include "lunarsfs/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

namespace lunarsfs {

void Dem::validate() const {
  if (width() < 3 || height() < 3) throw std::invalid_argument("Dem: need at least 3x3 samples");
  if (!(pixel_size > 0.0) || !std::isfinite(pixel_size)) {
    throw std::invalid_argument("Dem: pixel_size must be positive");
  }
  for (double h : heights.values()) {
    if (!std::isfinite(h)) throw std::invalid_argument("Dem: non-finite height");
  }
}

GradientField gradient_field(const Dem& dem) {
  dem.validate();
  return gradient_field(dem.heights, dem.pixel_size);
}

GradientField gradient_field(const Grid& z, double pixel_size) {
  const int w = z.width();
  const int h = z.height();
  if (w < 2 || h < 2) throw std::invalid_argument("gradient_field: need at least 2x2 samples");
  GradientField gf{Grid(w, h), Grid(w, h)};
  const double inv = 1.0 / pixel_size;
  const double inv2 = 0.5 / pixel_size;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x == 0) {
        gf.p(x, y) = (z(1, y) - z(0, y)) * inv;
      } else if (x == w - 1) {
        gf.p(x, y) = (z(w - 1, y) - z(w - 2, y)) * inv;
      } else {
        gf.p(x, y) = (z(x + 1, y) - z(x - 1, y)) * inv2;
      }
      if (y == 0) {
        gf.q(x, y) = (z(x, 1) - z(x, 0)) * inv;
      } else if (y == h - 1) {
        gf.q(x, y) = (z(x, h - 1) - z(x, h - 2)) * inv;
      } else {
        gf.q(x, y) = (z(x, y + 1) - z(x, y - 1)) * inv2;
      }
    }
  }
  return gf;
}

Grid gradient_field_adjoint(const Grid& gx, const Grid& gy, double pixel_size) {
  require_same_shape(gx, gy, "gradient_field_adjoint");
  const int w = gx.width();
  const int h = gx.height();
  Grid out(w, h);
  const double inv = 1.0 / pixel_size;
  const double inv2 = 0.5 / pixel_size;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = gx(x, y);
      if (x == 0) {
        out(1, y) += a * inv;
        out(0, y) -= a * inv;
      } else if (x == w - 1) {
        out(w - 1, y) += a * inv;
        out(w - 2, y) -= a * inv;
      } else {
        out(x + 1, y) += a * inv2;
        out(x - 1, y) -= a * inv2;
      }
      const double b = gy(x, y);
      if (y == 0) {
        out(x, 1) += b * inv;
        out(x, 0) -= b * inv;
      } else if (y == h - 1) {
        out(x, h - 1) += b * inv;
        out(x, h - 2) -= b * inv;
      } else {
        out(x, y + 1) += b * inv2;
        out(x, y - 1) -= b * inv2;
      }
    }
  }
  return out;
}

NormalMap normals_from_gradient(const GradientField& gf) {
  require_same_shape(gf.p, gf.q, "normals_from_gradient");
  NormalMap n(gf.p.width(), gf.p.height());
  for (int y = 0; y < n.height(); ++y) {
    for (int x = 0; x < n.width(); ++x) n(x, y) = normal_from_slopes(gf.p(x, y), gf.q(x, y));
  }
  return n;
}

Grid slope_map(const GradientField& gf) {
  require_same_shape(gf.p, gf.q, "slope_map");
  Grid out(gf.p.width(), gf.p.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::atan(std::hypot(gf.p[i], gf.q[i]));
  }
  return out;
}

namespace {

// Half-sample symmetric extension (... c b a | a b c ... ), folded for any offset.
int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

enum class Axis { kX, kY };

void convolve_axis(const Grid& in, Grid& out, const std::vector<double>& taps, Axis axis,
                   bool transpose) {
  const int w = in.width();
  const int h = in.height();
  const int radius = static_cast<int>(taps.size() / 2);
  const int len = axis == Axis::kX ? w : h;
  const int lines = axis == Axis::kX ? h : w;
  const std::ptrdiff_t along = axis == Axis::kX ? 1 : w;
  const std::ptrdiff_t across = axis == Axis::kX ? w : 1;

  // Source index for every (position, tap) pair along the axis.
  std::vector<int> source(static_cast<std::size_t>(len) * taps.size());
  for (int i = 0; i < len; ++i) {
    for (int k = -radius; k <= radius; ++k) {
      source[static_cast<std::size_t>(i) * taps.size() + (k + radius)] = reflect_index(i + k, len);
    }
  }
  const auto src = in.values();
  auto dst = out.values();
  for (int line = 0; line < lines; ++line) {
    const std::ptrdiff_t base = line * across;
    for (int i = 0; i < len; ++i) {
      const int* idx = &source[static_cast<std::size_t>(i) * taps.size()];
      if (!transpose) {
        double acc = 0.0;
        for (std::size_t t = 0; t < taps.size(); ++t) acc += taps[t] * src[base + idx[t] * along];
        dst[base + i * along] = acc;
      } else {
        const double v = src[base + i * along];
        for (std::size_t t = 0; t < taps.size(); ++t) dst[base + idx[t] * along] += taps[t] * v;
      }
    }
  }
}

void check_scale(double scale) {
  if (!(scale >= 1.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("lowpass: scale must be >= 1");
  }
}

}  // namespace

std::vector<double> lowpass_kernel(double scale) {
  check_scale(scale);
  const double sigma = 0.5 * scale;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * (k * k) / (sigma * sigma));
    taps[static_cast<std::size_t>(k + radius)] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Grid lowpass(const Grid& grid, double scale) {
  check_scale(scale);
  if (scale == 1.0) return grid;
  const auto taps = lowpass_kernel(scale);
  Grid tmp(grid.width(), grid.height());
  Grid out(grid.width(), grid.height());
  convolve_axis(grid, tmp, taps, Axis::kX, false);
  convolve_axis(tmp, out, taps, Axis::kY, false);
  return out;
}

Grid lowpass_adjoint(const Grid& grid, double scale) {
  check_scale(scale);
  if (scale == 1.0) return grid;
  const auto taps = lowpass_kernel(scale);
  Grid tmp(grid.width(), grid.height());
  Grid out(grid.width(), grid.height());
  convolve_axis(grid, tmp, taps, Axis::kY, true);
  convolve_axis(tmp, out, taps, Axis::kX, true);
  return out;
}

void TerrainSpec::validate() const {
  if (width < 3 || height < 3) throw std::invalid_argument("TerrainSpec: width/height must be >= 3");
  if (!(pixel_size > 0.0)) throw std::invalid_argument("TerrainSpec: pixel_size must be > 0");
  if (crater_count < 0) throw std::invalid_argument("TerrainSpec: crater_count must be >= 0");
  if (!(fractal_amplitude >= 0.0)) {
    throw std::invalid_argument("TerrainSpec: fractal_amplitude must be >= 0");
  }
  if (!std::isfinite(roughness_exponent)) {
    throw std::invalid_argument("TerrainSpec: roughness_exponent must be finite");
  }
  if (crater_count > 0) {
    const double extent = 0.5 * std::min(width, height) * pixel_size;
    if (!(crater_radius_min > 0.0) || crater_radius_max < crater_radius_min ||
        crater_radius_max > extent) {
      throw std::invalid_argument("TerrainSpec: crater radius range must lie in (0, extent/2]");
    }
    if (!(crater_depth_ratio_min >= 0.0) || crater_depth_ratio_max < crater_depth_ratio_min) {
      throw std::invalid_argument("TerrainSpec: invalid crater depth ratio range");
    }
    if (!(rim_height_ratio >= 0.0)) {
      throw std::invalid_argument("TerrainSpec: rim_height_ratio must be >= 0");
    }
  }
}

namespace {

// Crater placement uses its own stream so the fractal base and the craters
// stay independent when either count changes.
constexpr std::uint64_t kCraterStream = 0x9e3779b97f4a7c15ULL;
constexpr double kRimOuterRadius = 2.0;  // rim taper ends at 2R

}  // namespace

std::vector<Crater> sample_craters(const TerrainSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ kCraterStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Crater> craters;
  craters.reserve(static_cast<std::size_t>(spec.crater_count));
  for (int k = 0; k < spec.crater_count; ++k) {
    Crater c;
    c.center_x = unit(rng) * (spec.width - 1);
    c.center_y = unit(rng) * (spec.height - 1);
    c.radius = spec.crater_radius_min + unit(rng) * (spec.crater_radius_max - spec.crater_radius_min);
    const double ratio = spec.crater_depth_ratio_min +
                         unit(rng) * (spec.crater_depth_ratio_max - spec.crater_depth_ratio_min);
    c.depth = ratio * 2.0 * c.radius;
    c.rim_height = spec.rim_height_ratio * c.depth;
    craters.push_back(c);
  }
  return craters;
}

double crater_profile(const Crater& crater, double r) {
  const double t = r / crater.radius;
  if (t <= 1.0) return -crater.depth + (crater.depth + crater.rim_height) * t * t;
  if (t < kRimOuterRadius) {
    return crater.rim_height * 0.5 *
           (1.0 + std::cos(std::numbers::pi * (t - 1.0) / (kRimOuterRadius - 1.0)));
  }
  return 0.0;
}

namespace {

Grid fractal_surface(const TerrainSpec& spec) {
  const int w = spec.width;
  const int h = spec.height;
  Grid out(w, h);
  if (spec.fractal_amplitude == 0.0) return out;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  const int kx_max = w / 2;
  const int ky_max = h / 2;
  const int ky_count = 2 * ky_max + 1;
  // coeff[kx][ky + ky_max]; half plane kx >= 0 for a real field.
  std::vector<std::complex<double>> coeff(static_cast<std::size_t>(kx_max + 1) * ky_count);
  for (int kx = 0; kx <= kx_max; ++kx) {
    for (int ky = -ky_max; ky <= ky_max; ++ky) {
      const double a = gauss(rng);
      const double phi = phase(rng);
      if (kx == 0 && ky <= 0) continue;
      const double fx = static_cast<double>(kx) / w;
      const double fy = static_cast<double>(ky) / h;
      const double k = std::hypot(fx, fy) * std::max(w, h);
      coeff[static_cast<std::size_t>(kx) * ky_count + (ky + ky_max)] =
          std::polar(a * std::pow(k, -spec.roughness_exponent), phi);
    }
  }

  // Separable inverse transform: first over kx for every column x, then ky.
  std::vector<std::complex<double>> partial(static_cast<std::size_t>(w) * ky_count);
  for (int x = 0; x < w; ++x) {
    for (int kx = 0; kx <= kx_max; ++kx) {
      const auto ex = std::polar(1.0, 2.0 * std::numbers::pi * kx * x / w);
      for (int j = 0; j < ky_count; ++j) {
        partial[static_cast<std::size_t>(x) * ky_count + j] +=
            coeff[static_cast<std::size_t>(kx) * ky_count + j] * ex;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int j = 0; j < ky_count; ++j) {
      const int ky = j - ky_max;
      const auto ey = std::polar(1.0, 2.0 * std::numbers::pi * ky * y / h);
      for (int x = 0; x < w; ++x) {
        out(x, y) += (partial[static_cast<std::size_t>(x) * ky_count + j] * ey).real();
      }
    }
  }

  const double mean = grid_mean(out);
  double ss = 0.0;
  for (double& v : out.values()) {
    v -= mean;
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(out.size()));
  if (rms > 0.0) {
    for (double& v : out.values()) v *= spec.fractal_amplitude / rms;
  }
  return out;
}

}  // namespace

Dem synth_terrain(const TerrainSpec& spec) {
  spec.validate();
  Grid z = fractal_surface(spec);
  for (const Crater& c : sample_craters(spec)) {
    const double reach = kRimOuterRadius * c.radius / spec.pixel_size;
    const int x0 = std::max(0, static_cast<int>(std::floor(c.center_x - reach)));
    const int x1 = std::min(spec.width - 1, static_cast<int>(std::ceil(c.center_x + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.center_y - reach)));
    const int y1 = std::min(spec.height - 1, static_cast<int>(std::ceil(c.center_y + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double r = std::hypot(x - c.center_x, y - c.center_y) * spec.pixel_size;
        z(x, y) += crater_profile(c, r);
      }
    }
  }
  return {std::move(z), spec.pixel_size};
}

}  // namespace lunarsfs
