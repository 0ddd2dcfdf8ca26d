#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lunarsfs/grid.hpp"
#include "lunarsfs/photometry.hpp"
#include "lunarsfs/terrain.hpp"

namespace lunarsfs {

enum class DescentMethod {
  kLbfgs,     // limited-memory quasi-Newton direction, backtracking line search
  kGradient,  // scaled steepest descent, backtracking line search
};

struct SfSConfig {
  double gamma = 1e-1;   // integrability weight
  double delta = 1e-6;   // relative depth weight
  double tau = 1e-8;     // absolute depth weight
  double lowpass_scale = 8.0;
  int max_iters = 2000;
  double step_pq = 1.0;  // initial step scale for the slope block
  double step_z = 1.0;   // initial step scale for the height block
  int albedo_update_period = 25;  // 0 disables albedo estimation
  double stop_tol = 1e-6;
  int stop_window = 20;  // iterations over which the relative decrease is averaged
  DescentMethod method = DescentMethod::kLbfgs;
  int lbfgs_memory = 8;

  void validate() const;
};

/// Unknowns of the reconstruction plus the accepted-iteration energy log.
struct EnergyTerms {
  int iteration = 0;
  double total = 0.0;
  double intensity = 0.0;
  double integrability = 0.0;
  double relative = 0.0;
  double absolute = 0.0;
};

struct SfSState {
  Dem z;
  GradientField slopes;
  Grid albedo;
  std::vector<EnergyTerms> history;

  [[nodiscard]] std::vector<double> energy_history() const;
};

/// Everything the energy depends on besides the unknowns.
struct SfSProblem {
  Grid image;
  Dem dem_init;  // already resampled to the image grid
  IlluminationGeometry illum;
  HapkeParams params;
  SfSConfig cfg;

  void validate() const;
};

class SolverDiverged : public std::runtime_error {
 public:
  explicit SolverDiverged(int iteration)
      : std::runtime_error("SfS solver diverged at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  [[nodiscard]] int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// 1/2 sum (R - I)^2 dx dy.
double intensity_error(const Grid& rendered, const Grid& image, double pixel_size = 1.0);

/// 1/2 sum [(dz/dx - p)^2 + (dz/dy - q)^2] dx dy, derivatives by gradient_field.
double integrability_error(const Dem& z, const GradientField& gf);

/// 1/2 sum [(f(p) - f(p_DEM))^2 + (f(q) - f(q_DEM))^2] dx dy with f = lowpass(., scale).
double relative_depth_error(const GradientField& gf, const Dem& dem_init, double scale);

/// 1/2 sum (f(z) - f(z_DEM))^2 dx dy.
double absolute_depth_error(const Dem& z, const Dem& dem_init, double scale);

/// Initial state: z = dem_init, slopes from dem_init, uniform albedo params.w.
SfSState initial_state(const SfSProblem& problem);

/// Unweighted terms and weighted total. Pixels with cos i <= 0 or cos e <= 0
/// render as R = 0 in the intensity term and carry no slope gradient.
EnergyTerms energy_terms(const SfSState& state, const SfSProblem& problem);
double total_error(const SfSState& state, const SfSProblem& problem);

struct EnergyGradient {
  Grid d_p;
  Grid d_q;
  Grid d_z;
};

/// Analytic derivatives of total_error with respect to every p, q, z sample.
EnergyGradient energy_gradient(const SfSState& state, const SfSProblem& problem);

struct AlbedoEstimate {
  Grid raw;                     // per-pixel bisection result
  Grid smoothed;                // raw after lowpass(cfg.lowpass_scale)
  std::vector<std::uint8_t> clamped;  // 1 where I was outside [R(w_min), R(1)]
};

inline constexpr double kAlbedoMin = 1e-4;

/// Per pixel, solves R_AMSA(i, e, g, w) = I for w by bisection on
/// [kAlbedoMin, 1], then low-passes the field. Unlit pixels keep their
/// current albedo.
AlbedoEstimate estimate_albedo(const SfSState& state, const SfSProblem& problem);

/// Alternates descent steps on (p, q, z) with periodic albedo updates until
/// the relative energy decrease falls below cfg.stop_tol or cfg.max_iters is
/// reached. Steps that would raise the energy are rejected and the step is
/// halved, so the recorded history is non-increasing.
/// Throws SolverDiverged on non-finite energy.
SfSState reconstruct(const SfSProblem& problem);

}  // namespace lunarsfs
