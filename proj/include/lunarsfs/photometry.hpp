#pragma once

#include <functional>

#include "lunarsfs/vec3.hpp"

namespace lunarsfs {

/// Incidence, emission and phase angles in radians.
struct Angles {
  double incidence = 0.0;
  double emission = 0.0;
  double phase = 0.0;
};

/// Distant sun and camera directions for a whole tile.
///
/// Both directions are stored normalized. The phase angle depends only on
/// the two directions; incidence and emission reported here are relative to
/// the horizontal plane (normal +z) and change per facet.
class IlluminationGeometry {
 public:
  IlluminationGeometry() = default;
  IlluminationGeometry(Vec3 sun_dir, Vec3 view_dir);

  static IlluminationGeometry from_az_el(double sun_az_deg, double sun_el_deg,
                                         double view_az_deg, double view_el_deg);

  [[nodiscard]] Vec3 sun() const { return sun_; }
  [[nodiscard]] Vec3 view() const { return view_; }
  [[nodiscard]] double phase() const { return angles_.phase; }
  [[nodiscard]] double incidence() const { return angles_.incidence; }
  [[nodiscard]] double emission() const { return angles_.emission; }

 private:
  Vec3 sun_{0.0, 0.0, 1.0};
  Vec3 view_{0.0, 0.0, 1.0};
  Angles angles_{};
};

/// Hapke model constants. Defaults are the Warell lunar values for the
/// phase function and shadow-hiding opposition effect.
struct HapkeParams {
  double w = 0.3;         // single-scattering albedo, (0, 1]
  double b = 0.21;        // DHG lobe width, [0, 1)
  double c = 0.7;         // DHG forward/backward partition
  double bs0 = 3.1;       // SHOE amplitude B_S0
  double hs = 0.11;       // SHOE angular width h_S
  double theta_bar = 0.0; // macroscopic roughness, radians; only 0 is modeled (S == 1)

  /// Coherent-backscatter factor B_CB(g). Empty means B_CB == 1.
  std::function<double(double)> coherent_backscatter;

  /// Throws std::invalid_argument when a constant is outside its domain.
  void validate() const;
};

/// Computes (i, e, g) from unit normal, sun and view vectors. Dot products
/// are clamped to [-1, 1] before arccos. Throws std::invalid_argument if any
/// input deviates from unit norm by more than 1e-9.
Angles angles_from_vectors(Vec3 normal, Vec3 sun, Vec3 view);

/// Double Henyey-Greenstein phase function, normalized to 1 over the sphere
/// with the 1/(4π) convention.
double dhg_phase(double g, double b, double c);

/// Shadow-hiding opposition effect, 1 + B_S0 / (1 + tan(g/2)/h_S).
/// Returns the limit value 1 at g = π.
double shoe(double g, double bs0, double hs);

/// Ambartsumian-Chandrasekhar H function, Hapke's rational approximation.
double h_function(double x, double w);
/// dH/dx of the same approximation; unbounded as x -> 0+, returns +inf at 0.
double h_function_derivative(double x, double w);

/// Isotropic multiple-scattering term H(mu0) H(mu) - 1.
double multiple_scattering(double mu0, double mu, double w);

/// Reflectance and its derivatives with respect to mu0 = cos i and mu = cos e.
struct ReflectancePartials {
  double value = 0.0;
  double d_mu0 = 0.0;
  double d_mu = 0.0;
};

/// AMSA evaluated at a fixed phase angle. The phase-dependent factor
/// p(g) B_SH(g) B_CB(g) is computed once, so per-pixel evaluation only
/// touches the mu0/mu/w dependent parts.
class AmsaAtPhase {
 public:
  AmsaAtPhase(double g, const HapkeParams& params);

  [[nodiscard]] double value(double mu0, double mu, double w) const;
  [[nodiscard]] ReflectancePartials partials(double mu0, double mu, double w) const;
  [[nodiscard]] double phase_term() const { return phase_term_; }

 private:
  double phase_term_;  // p(g) * B_SH(g)
  double backscatter_; // B_CB(g)
};

/// R_AMSA(i, e, g, w) in I/F units. Zero when cos i <= 0 or cos e <= 0.
double hapke_amsa(double i, double e, double g, double w, const HapkeParams& params);

/// A max(0, cos i).
double lambert_reflectance(double i, double albedo);

}  // namespace lunarsfs
