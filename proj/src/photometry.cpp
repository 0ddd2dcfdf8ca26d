#include "lunarsfs/photometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lunarsfs {

namespace {

constexpr double kUnitTolerance = 1e-9;

double clamped_acos(double cosine) { return std::acos(std::clamp(cosine, -1.0, 1.0)); }

void require_unit(Vec3 v, const char* name) {
  if (!(std::abs(norm(v) - 1.0) <= kUnitTolerance)) {
    throw std::invalid_argument(std::string("angles_from_vectors: ") + name +
                                " is not a unit vector");
  }
}

}  // namespace

Vec3 direction_from_az_el(double azimuth_deg, double elevation_deg) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

IlluminationGeometry::IlluminationGeometry(Vec3 sun_dir, Vec3 view_dir) {
  const double ns = norm(sun_dir);
  const double nv = norm(view_dir);
  if (!(ns > 0.0) || !(nv > 0.0) || !std::isfinite(ns) || !std::isfinite(nv)) {
    throw std::invalid_argument("IlluminationGeometry: zero or non-finite direction");
  }
  sun_ = (1.0 / ns) * sun_dir;
  view_ = (1.0 / nv) * view_dir;
  angles_ = angles_from_vectors({0.0, 0.0, 1.0}, sun_, view_);
}

IlluminationGeometry IlluminationGeometry::from_az_el(double sun_az_deg, double sun_el_deg,
                                                      double view_az_deg, double view_el_deg) {
  return {direction_from_az_el(sun_az_deg, sun_el_deg),
          direction_from_az_el(view_az_deg, view_el_deg)};
}

void HapkeParams::validate() const {
  if (!(w > 0.0 && w <= 1.0)) throw std::invalid_argument("HapkeParams: w must be in (0, 1]");
  if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("HapkeParams: b must be in [0, 1)");
  if (!std::isfinite(c)) throw std::invalid_argument("HapkeParams: c must be finite");
  if (!(hs > 0.0)) throw std::invalid_argument("HapkeParams: h_S must be > 0");
  if (!(bs0 >= 0.0)) throw std::invalid_argument("HapkeParams: B_S0 must be >= 0");
  if (!(theta_bar >= 0.0)) throw std::invalid_argument("HapkeParams: theta_bar must be >= 0");
  if (theta_bar > 0.0) {
    throw std::invalid_argument(
        "HapkeParams: macroscopic roughness shadowing is not modeled, theta_bar must be 0");
  }
}

Angles angles_from_vectors(Vec3 normal, Vec3 sun, Vec3 view) {
  require_unit(normal, "normal");
  require_unit(sun, "sun");
  require_unit(view, "view");
  return {clamped_acos(dot(normal, sun)), clamped_acos(dot(normal, view)),
          clamped_acos(dot(sun, view))};
}

double dhg_phase(double g, double b, double c) {
  if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("dhg_phase: b must be in [0, 1)");
  const double cg = std::cos(g);
  const double b2 = b * b;
  const double back = (1.0 - b2) / std::pow(1.0 + 2.0 * b * cg + b2, 1.5);
  const double forward = (1.0 - b2) / std::pow(1.0 - 2.0 * b * cg + b2, 1.5);
  return 0.5 * (1.0 + c) * back + 0.5 * (1.0 - c) * forward;
}

double shoe(double g, double bs0, double hs) {
  if (!(hs > 0.0)) throw std::invalid_argument("shoe: h_S must be > 0");
  if (g >= std::numbers::pi) return 1.0;
  return 1.0 + bs0 / (1.0 + std::tan(0.5 * g) / hs);
}

namespace {

// Returns 1/H, i.e. the bracketed denominator of the rational approximation.
struct HTerms {
  double r0;
  double denom;
};

HTerms h_terms(double x, double w) {
  const double gamma = std::sqrt(1.0 - w);
  const double r0 = (1.0 - gamma) / (1.0 + gamma);
  const double log_term = std::log((1.0 + x) / x);
  return {r0, 1.0 - w * x * (r0 + 0.5 * (1.0 - 2.0 * r0 * x) * log_term)};
}

void check_h_domain(double x, double w, const char* fn) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument(std::string(fn) + ": x must be in [0, 1]");
  if (!(w > 0.0 && w <= 1.0)) throw std::invalid_argument(std::string(fn) + ": w must be in (0, 1]");
}

}  // namespace

double h_function(double x, double w) {
  check_h_domain(x, w, "h_function");
  if (x == 0.0) return 1.0;
  return 1.0 / h_terms(x, w).denom;
}

double h_function_derivative(double x, double w) {
  check_h_domain(x, w, "h_function_derivative");
  if (x == 0.0) return std::numeric_limits<double>::infinity();
  const auto [r0, denom] = h_terms(x, w);
  const double log_term = std::log((1.0 + x) / x);
  const double d_log = -1.0 / (x * (1.0 + x));
  const double inner = r0 + 0.5 * (1.0 - 2.0 * r0 * x) * log_term;
  const double d_inner = -r0 * log_term + 0.5 * (1.0 - 2.0 * r0 * x) * d_log;
  const double d_denom = -w * (inner + x * d_inner);
  return -d_denom / (denom * denom);
}

double multiple_scattering(double mu0, double mu, double w) {
  return h_function(mu0, w) * h_function(mu, w) - 1.0;
}

AmsaAtPhase::AmsaAtPhase(double g, const HapkeParams& params)
    : phase_term_(dhg_phase(g, params.b, params.c) * shoe(g, params.bs0, params.hs)),
      backscatter_(params.coherent_backscatter ? params.coherent_backscatter(g) : 1.0) {
  params.validate();
}

double AmsaAtPhase::value(double mu0, double mu, double w) const {
  if (mu0 <= 0.0 || mu <= 0.0) return 0.0;
  mu0 = std::min(mu0, 1.0);
  mu = std::min(mu, 1.0);
  const double scale = w / (4.0 * std::numbers::pi) * backscatter_;
  return scale * mu0 / (mu0 + mu) * (phase_term_ + multiple_scattering(mu0, mu, w));
}

ReflectancePartials AmsaAtPhase::partials(double mu0, double mu, double w) const {
  if (mu0 <= 0.0 || mu <= 0.0) return {};
  mu0 = std::min(mu0, 1.0);
  mu = std::min(mu, 1.0);
  const double scale = w / (4.0 * std::numbers::pi) * backscatter_;
  const double sum = mu0 + mu;
  const double k = mu0 / sum;
  const double h0 = h_function(mu0, w);
  const double h1 = h_function(mu, w);
  const double bracket = phase_term_ + h0 * h1 - 1.0;
  ReflectancePartials out;
  out.value = scale * k * bracket;
  out.d_mu0 = scale * (mu / (sum * sum) * bracket + k * h_function_derivative(mu0, w) * h1);
  out.d_mu = scale * (-mu0 / (sum * sum) * bracket + k * h0 * h_function_derivative(mu, w));
  return out;
}

double hapke_amsa(double i, double e, double g, double w, const HapkeParams& params) {
  return AmsaAtPhase(g, params).value(std::cos(i), std::cos(e), w);
}

double lambert_reflectance(double i, double albedo) {
  return albedo * std::max(0.0, std::cos(i));
}

}  // namespace lunarsfs
