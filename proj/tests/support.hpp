#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>

#include "lunarsfs/sfs.hpp"

namespace lunarsfs::testing {

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t components = 0;
};

// Central differences of total_error against energy_gradient for every p, q
// and z sample. Differences below the roundoff floor of the difference
// quotient itself (about eps * E / h) are not counted as relative error.
inline GradientCheck check_gradient(SfSState state, const SfSProblem& problem, double h = 1e-6) {
  const EnergyGradient g = energy_gradient(state, problem);
  const double energy = total_error(state, problem);
  const double floor = 1e6 * std::numeric_limits<double>::epsilon() * std::abs(energy) / h;
  GradientCheck out;
  auto sweep = [&](Grid& var, const Grid& analytic) {
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double orig = var[i];
      var[i] = orig + h;
      const double ep = total_error(state, problem);
      var[i] = orig - h;
      const double em = total_error(state, problem);
      var[i] = orig;
      const double fd = (ep - em) / (2.0 * h);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(fd), floor, 1e-300});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - fd) / denom);
      ++out.components;
    }
  };
  sweep(state.slopes.p, g.d_p);
  sweep(state.slopes.q, g.d_q);
  sweep(state.z.heights, g.d_z);
  return out;
}

// A smooth random surface with a perturbed init DEM, noisy slopes, random
// albedo and a random image: a generic, non-stationary point of the energy.
// `weights` selects which of gamma, delta, tau keep their defaults (bits 0..2).
struct RandomEnergyState {
  SfSProblem problem;
  SfSState state;
};

inline RandomEnergyState random_energy_state(std::uint64_t seed, int weights, int n = 16) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RandomEnergyState r;
  SfSProblem& pb = r.problem;
  pb.illum = IlluminationGeometry::from_az_el(30.0, 60.0, 10.0, 85.0);
  pb.cfg.lowpass_scale = 3.0;
  const SfSConfig defaults;
  pb.cfg.gamma = (weights & 1) != 0 ? defaults.gamma : 0.0;
  pb.cfg.delta = (weights & 2) != 0 ? defaults.delta : 0.0;
  pb.cfg.tau = (weights & 4) != 0 ? defaults.tau : 0.0;

  const double a1 = u(rng), a2 = u(rng), a3 = u(rng), phase = 3.0 * u(rng);
  Grid z(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      z(x, y) = 1.5 * a1 * std::sin(0.4 * x + phase) + 1.5 * a2 * std::cos(0.3 * y) +
                a3 * std::sin(0.25 * (x + y)) + 0.2 * u(rng);
    }
  }
  Grid init = z;
  for (double& v : init.values()) v += 0.3 * u(rng);
  pb.dem_init = Dem(init, 1.0);

  r.state.z = Dem(z, 1.0);
  r.state.slopes = gradient_field(r.state.z);
  for (double& v : r.state.slopes.p.values()) v += 0.05 * u(rng);
  for (double& v : r.state.slopes.q.values()) v += 0.05 * u(rng);
  r.state.albedo = Grid(n, n);
  for (double& v : r.state.albedo.values()) v = 0.3 + 0.1 * u(rng);
  pb.image = Grid(n, n);
  for (double& v : pb.image.values()) v = 0.015 + 0.005 * u(rng);
  return r;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lunarsfs_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace lunarsfs::testing
