#include "lunarsfs/sfs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace lunarsfs {

void SfSConfig::validate() const {
  if (!(gamma >= 0.0) || !(delta >= 0.0) || !(tau >= 0.0)) {
    throw std::invalid_argument("SfSConfig: weights must be >= 0");
  }
  if (!(lowpass_scale >= 1.0)) throw std::invalid_argument("SfSConfig: lowpass_scale must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("SfSConfig: max_iters must be >= 1");
  if (!(step_pq > 0.0) || !(step_z > 0.0)) {
    throw std::invalid_argument("SfSConfig: step sizes must be > 0");
  }
  if (albedo_update_period < 0) {
    throw std::invalid_argument("SfSConfig: albedo_update_period must be >= 0");
  }
  if (!(stop_tol > 0.0)) throw std::invalid_argument("SfSConfig: stop_tol must be > 0");
  if (stop_window < 1) throw std::invalid_argument("SfSConfig: stop_window must be >= 1");
  if (lbfgs_memory < 1) throw std::invalid_argument("SfSConfig: lbfgs_memory must be >= 1");
}

std::vector<double> SfSState::energy_history() const {
  std::vector<double> out;
  out.reserve(history.size());
  for (const auto& e : history) out.push_back(e.total);
  return out;
}

void SfSProblem::validate() const {
  dem_init.validate();
  require_same_shape(image, dem_init.heights, "SfSProblem: image vs dem_init");
  params.validate();
  cfg.validate();
  for (double v : image.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("SfSProblem: non-finite image sample");
  }
}

namespace {

double sum_sq_diff(const Grid& a, const Grid& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    acc += d * d;
  }
  return static_cast<double>(acc);
}

Grid difference(const Grid& a, const Grid& b) {
  Grid out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// Energy evaluator with the init-DEM reference terms precomputed.
class Objective {
 public:
  explicit Objective(const SfSProblem& problem)
      : pb_(problem),
        amsa_(problem.illum.phase(), problem.params),
        area_(problem.dem_init.pixel_size * problem.dem_init.pixel_size) {
    const GradientField ref = gradient_field(problem.dem_init);
    fp_ref_ = lowpass(ref.p, problem.cfg.lowpass_scale);
    fq_ref_ = lowpass(ref.q, problem.cfg.lowpass_scale);
    fz_ref_ = lowpass(problem.dem_init.heights, problem.cfg.lowpass_scale);
  }

  [[nodiscard]] EnergyTerms terms(const Grid& z, const Grid& p, const Grid& q,
                                  const Grid& w) const {
    return evaluate(z, p, q, w, nullptr);
  }

  EnergyTerms with_gradient(const Grid& z, const Grid& p, const Grid& q, const Grid& w,
                            EnergyGradient& grad) const {
    return evaluate(z, p, q, w, &grad);
  }

  [[nodiscard]] const AmsaAtPhase& amsa() const { return amsa_; }

 private:
  EnergyTerms evaluate(const Grid& z, const Grid& p, const Grid& q, const Grid& w,
                       EnergyGradient* grad) const {
    const SfSConfig& cfg = pb_.cfg;
    const double scale = cfg.lowpass_scale;
    const double pixel = pb_.dem_init.pixel_size;
    const Vec3 sun = pb_.illum.sun();
    const Vec3 view = pb_.illum.view();
    const std::size_t n = z.size();

    if (grad != nullptr) {
      grad->d_p = Grid(z.width(), z.height());
      grad->d_q = Grid(z.width(), z.height());
      grad->d_z = Grid(z.width(), z.height());
    }

    // Intensity term.
    long double e_int_acc = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = p[i];
      const double qi = q[i];
      const double rho2 = pi * pi + qi * qi + 1.0;
      const double rho = std::sqrt(rho2);
      const double mu0 = (-pi * sun.x - qi * sun.y + sun.z) / rho;
      const double mu = (-pi * view.x - qi * view.y + view.z) / rho;
      if (mu0 <= 0.0 || mu <= 0.0) {
        // R is zero here; keep the residual so the energy stays continuous.
        e_int_acc += static_cast<long double>(pb_.image[i]) * pb_.image[i];
        continue;
      }
      if (grad == nullptr) {
        const double r = amsa_.value(mu0, mu, w[i]) - pb_.image[i];
        e_int_acc += static_cast<long double>(r) * r;
        continue;
      }
      const ReflectancePartials rp = amsa_.partials(mu0, mu, w[i]);
      const double r = rp.value - pb_.image[i];
      e_int_acc += static_cast<long double>(r) * r;
      const double dmu0_dp = -sun.x / rho - mu0 * pi / rho2;
      const double dmu0_dq = -sun.y / rho - mu0 * qi / rho2;
      const double dmu_dp = -view.x / rho - mu * pi / rho2;
      const double dmu_dq = -view.y / rho - mu * qi / rho2;
      grad->d_p[i] = area_ * r * (rp.d_mu0 * dmu0_dp + rp.d_mu * dmu_dp);
      grad->d_q[i] = area_ * r * (rp.d_mu0 * dmu0_dq + rp.d_mu * dmu_dq);
    }

    EnergyTerms out;
    out.intensity = 0.5 * area_ * static_cast<double>(e_int_acc);

    // Integrability.
    const GradientField dz = gradient_field(z, pixel);
    const Grid ex = difference(dz.p, p);
    const Grid ey = difference(dz.q, q);
    out.integrability = 0.5 * area_ * (sum_sq_diff(dz.p, p) + sum_sq_diff(dz.q, q));

    // Relative and absolute depth.
    const Grid fp = lowpass(p, scale);
    const Grid fq = lowpass(q, scale);
    const Grid fz = lowpass(z, scale);
    out.relative = 0.5 * area_ * (sum_sq_diff(fp, fp_ref_) + sum_sq_diff(fq, fq_ref_));
    out.absolute = 0.5 * area_ * sum_sq_diff(fz, fz_ref_);

    out.total = out.intensity + cfg.gamma * out.integrability + cfg.delta * out.relative +
                cfg.tau * out.absolute;

    if (grad != nullptr) {
      if (cfg.gamma != 0.0) {
        const Grid gz = gradient_field_adjoint(ex, ey, pixel);
        const double k = cfg.gamma * area_;
        for (std::size_t i = 0; i < n; ++i) {
          grad->d_p[i] -= k * ex[i];
          grad->d_q[i] -= k * ey[i];
          grad->d_z[i] += k * gz[i];
        }
      }
      if (cfg.delta != 0.0) {
        const Grid gp = lowpass_adjoint(difference(fp, fp_ref_), scale);
        const Grid gq = lowpass_adjoint(difference(fq, fq_ref_), scale);
        const double k = cfg.delta * area_;
        for (std::size_t i = 0; i < n; ++i) {
          grad->d_p[i] += k * gp[i];
          grad->d_q[i] += k * gq[i];
        }
      }
      if (cfg.tau != 0.0) {
        const Grid gz = lowpass_adjoint(difference(fz, fz_ref_), scale);
        const double k = cfg.tau * area_;
        for (std::size_t i = 0; i < n; ++i) grad->d_z[i] += k * gz[i];
      }
    }
    return out;
  }

  const SfSProblem& pb_;
  AmsaAtPhase amsa_;
  double area_;
  Grid fp_ref_;
  Grid fq_ref_;
  Grid fz_ref_;
};

void check_state(const SfSState& state, const SfSProblem& problem) {
  const Grid& ref = problem.dem_init.heights;
  require_same_shape(state.z.heights, ref, "SfS state z");
  require_same_shape(state.slopes.p, ref, "SfS state p");
  require_same_shape(state.slopes.q, ref, "SfS state q");
  require_same_shape(state.albedo, ref, "SfS state albedo");
  require_same_shape(problem.image, ref, "SfS image");
}

}  // namespace

double intensity_error(const Grid& rendered, const Grid& image, double pixel_size) {
  require_same_shape(rendered, image, "intensity_error");
  return 0.5 * pixel_size * pixel_size * sum_sq_diff(rendered, image);
}

double integrability_error(const Dem& z, const GradientField& gf) {
  require_same_shape(z.heights, gf.p, "integrability_error");
  require_same_shape(z.heights, gf.q, "integrability_error");
  const GradientField dz = gradient_field(z.heights, z.pixel_size);
  return 0.5 * z.pixel_size * z.pixel_size * (sum_sq_diff(dz.p, gf.p) + sum_sq_diff(dz.q, gf.q));
}

double relative_depth_error(const GradientField& gf, const Dem& dem_init, double scale) {
  require_same_shape(gf.p, dem_init.heights, "relative_depth_error");
  require_same_shape(gf.q, dem_init.heights, "relative_depth_error");
  const GradientField ref = gradient_field(dem_init.heights, dem_init.pixel_size);
  const double area = dem_init.pixel_size * dem_init.pixel_size;
  return 0.5 * area *
         (sum_sq_diff(lowpass(gf.p, scale), lowpass(ref.p, scale)) +
          sum_sq_diff(lowpass(gf.q, scale), lowpass(ref.q, scale)));
}

double absolute_depth_error(const Dem& z, const Dem& dem_init, double scale) {
  require_same_shape(z.heights, dem_init.heights, "absolute_depth_error");
  const double area = dem_init.pixel_size * dem_init.pixel_size;
  return 0.5 * area * sum_sq_diff(lowpass(z.heights, scale), lowpass(dem_init.heights, scale));
}

SfSState initial_state(const SfSProblem& problem) {
  problem.validate();
  SfSState s;
  s.z = problem.dem_init;
  s.slopes = gradient_field(problem.dem_init);
  s.albedo = Grid(problem.dem_init.width(), problem.dem_init.height(), problem.params.w);
  return s;
}

EnergyTerms energy_terms(const SfSState& state, const SfSProblem& problem) {
  check_state(state, problem);
  const Objective obj(problem);
  return obj.terms(state.z.heights, state.slopes.p, state.slopes.q, state.albedo);
}

double total_error(const SfSState& state, const SfSProblem& problem) {
  return energy_terms(state, problem).total;
}

EnergyGradient energy_gradient(const SfSState& state, const SfSProblem& problem) {
  check_state(state, problem);
  const Objective obj(problem);
  EnergyGradient grad;
  obj.with_gradient(state.z.heights, state.slopes.p, state.slopes.q, state.albedo, grad);
  return grad;
}

namespace {

AlbedoEstimate estimate_albedo_with(const SfSState& state, const SfSProblem& problem,
                                    const AmsaAtPhase& amsa) {
  const Vec3 sun = problem.illum.sun();
  const Vec3 view = problem.illum.view();
  const std::size_t n = state.albedo.size();
  AlbedoEstimate out;
  out.raw = state.albedo;
  out.clamped.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 normal = normal_from_slopes(state.slopes.p[i], state.slopes.q[i]);
    const double mu0 = dot(normal, sun);
    const double mu = dot(normal, view);
    if (mu0 <= 0.0 || mu <= 0.0) continue;
    const double target = problem.image[i];
    double lo = kAlbedoMin;
    double hi = 1.0;
    if (target <= amsa.value(mu0, mu, lo)) {
      out.raw[i] = lo;
      out.clamped[i] = 1;
      continue;
    }
    if (target >= amsa.value(mu0, mu, hi)) {
      out.raw[i] = hi;
      out.clamped[i] = 1;
      continue;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (amsa.value(mu0, mu, mid) < target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    out.raw[i] = 0.5 * (lo + hi);
  }
  out.smoothed = lowpass(out.raw, problem.cfg.lowpass_scale);
  for (double& v : out.smoothed.values()) v = std::clamp(v, kAlbedoMin, 1.0);
  return out;
}

// Flat views of the (p, q, z) unknowns for the descent loop.
std::vector<double> pack(const Grid& p, const Grid& q, const Grid& z) {
  std::vector<double> x;
  x.reserve(p.size() * 3);
  x.insert(x.end(), p.values().begin(), p.values().end());
  x.insert(x.end(), q.values().begin(), q.values().end());
  x.insert(x.end(), z.values().begin(), z.values().end());
  return x;
}

void unpack(const std::vector<double>& x, Grid& p, Grid& q, Grid& z) {
  const std::size_t n = p.size();
  std::copy_n(x.begin(), n, p.values().begin());
  std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(n), n, q.values().begin());
  std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(2 * n), n, z.values().begin());
}

double dot_product(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

bool energy_finite(const EnergyTerms& e) { return std::isfinite(e.total); }

}  // namespace

AlbedoEstimate estimate_albedo(const SfSState& state, const SfSProblem& problem) {
  check_state(state, problem);
  const AmsaAtPhase amsa(problem.illum.phase(), problem.params);
  return estimate_albedo_with(state, problem, amsa);
}

SfSState reconstruct(const SfSProblem& problem) {
  SfSState state = initial_state(problem);
  if (std::none_of(problem.image.values().begin(), problem.image.values().end(),
                   [](double v) { return v > 0.0; })) {
    throw std::invalid_argument("reconstruct: image has no positive sample");
  }
  const SfSConfig& cfg = problem.cfg;
  const Objective obj(problem);
  const std::size_t n = state.albedo.size();

  Grid& p = state.slopes.p;
  Grid& q = state.slopes.q;
  Grid& z = state.z.heights;

  // Diagonal scaling: step_pq on the slope block, step_z on the height block.
  std::vector<double> diag(3 * n, cfg.step_pq);
  std::fill(diag.begin() + static_cast<std::ptrdiff_t>(2 * n), diag.end(), cfg.step_z);

  EnergyGradient grad;
  EnergyTerms current = obj.with_gradient(z, p, q, state.albedo, grad);
  if (!energy_finite(current)) throw SolverDiverged(0);
  current.iteration = 0;
  state.history.push_back(current);

  std::vector<double> x = pack(p, q, z);
  std::vector<double> g = pack(grad.d_p, grad.d_q, grad.d_z);

  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y) pairs
  double gd_alpha = 1.0;
  int iteration = 0;
  int since_albedo = 0;

  auto record = [&](EnergyTerms e) {
    e.iteration = iteration;
    state.history.push_back(e);
  };

  while (iteration < cfg.max_iters) {
    if (current.total == 0.0) break;

    if (cfg.albedo_update_period > 0 && since_albedo >= cfg.albedo_update_period) {
      since_albedo = 0;
      const AlbedoEstimate est = estimate_albedo_with(state, problem, obj.amsa());
      EnergyGradient trial_grad;
      const EnergyTerms trial = obj.with_gradient(z, p, q, est.smoothed, trial_grad);
      if (energy_finite(trial) && trial.total < current.total) {
        state.albedo = est.smoothed;
        current = trial;
        grad = std::move(trial_grad);
        g = pack(grad.d_p, grad.d_q, grad.d_z);
        memory.clear();
        ++iteration;
        record(current);
        continue;
      }
    }

    // Search direction.
    std::vector<double> d(3 * n);
    if (cfg.method == DescentMethod::kLbfgs && !memory.empty()) {
      std::vector<double> r = g;
      std::vector<double> alphas(memory.size());
      for (std::size_t k = memory.size(); k-- > 0;) {
        const auto& [s, y] = memory[k];
        const double rho = 1.0 / dot_product(y, s);
        alphas[k] = rho * dot_product(s, r);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= alphas[k] * y[i];
      }
      const auto& [s_last, y_last] = memory.back();
      double ydy = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) ydy += y_last[i] * diag[i] * y_last[i];
      const double theta = dot_product(s_last, y_last) / ydy;
      for (std::size_t i = 0; i < r.size(); ++i) r[i] *= theta * diag[i];
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const auto& [s, y] = memory[k];
        const double rho = 1.0 / dot_product(y, s);
        const double beta = rho * dot_product(y, r);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] += s[i] * (alphas[k] - beta);
      }
      for (std::size_t i = 0; i < r.size(); ++i) d[i] = -r[i];
    } else {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = -diag[i] * g[i];
    }
    double slope = dot_product(g, d);
    if (!(slope < 0.0)) {
      memory.clear();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = -diag[i] * g[i];
      slope = dot_product(g, d);
    }
    if (!(slope < 0.0)) break;  // zero gradient

    // Backtracking: halve until the energy drops (Armijo, c1 = 1e-4).
    double alpha = cfg.method == DescentMethod::kGradient ? gd_alpha : 1.0;
    bool accepted = false;
    std::vector<double> x_trial(x.size());
    EnergyTerms trial;
    EnergyGradient trial_grad;
    Grid tp(p.width(), p.height());
    Grid tq(p.width(), p.height());
    Grid tz(p.width(), p.height());
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t i = 0; i < x.size(); ++i) x_trial[i] = x[i] + alpha * d[i];
      unpack(x_trial, tp, tq, tz);
      trial = obj.with_gradient(tz, tp, tq, state.albedo, trial_grad);
      if (energy_finite(trial) && trial.total < current.total &&
          trial.total <= current.total + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!energy_finite(trial) && alpha < 1e-15) throw SolverDiverged(iteration + 1);
      break;  // no decrease possible along the descent direction
    }

    const std::vector<double> g_trial = pack(trial_grad.d_p, trial_grad.d_q, trial_grad.d_z);
    if (cfg.method == DescentMethod::kLbfgs) {
      std::vector<double> s(x.size());
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        s[i] = x_trial[i] - x[i];
        y[i] = g_trial[i] - g[i];
      }
      if (dot_product(s, y) > 1e-12 * std::sqrt(dot_product(s, s) * dot_product(y, y))) {
        memory.emplace_back(std::move(s), std::move(y));
        if (static_cast<int>(memory.size()) > cfg.lbfgs_memory) memory.pop_front();
      }
    } else {
      gd_alpha = std::min(1.0, alpha * 1.5);
    }

    x = std::move(x_trial);
    g = g_trial;
    p = tp;
    q = tq;
    z = tz;
    grad = std::move(trial_grad);
    current = trial;
    ++iteration;
    ++since_albedo;
    record(current);
    if (!energy_finite(current)) throw SolverDiverged(iteration);

    // Mean relative decrease per iteration over the trailing window.
    if (state.history.size() > static_cast<std::size_t>(cfg.stop_window)) {
      const double before = state.history[state.history.size() - 1 - cfg.stop_window].total;
      if ((before - current.total) / std::max(before, 1e-300) < cfg.stop_window * cfg.stop_tol) break;
    }
  }
  return state;
}

}  // namespace lunarsfs
