#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "lunarsfs/metrics.hpp"
#include "lunarsfs/render.hpp"
#include "lunarsfs/sfs.hpp"
#include "support.hpp"

using namespace lunarsfs;

namespace {

Grid random_grid(int w, int h, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Grid g(w, h);
  for (double& v : g.values()) v = u(rng);
  return g;
}

// Direct 2-D Gaussian convolution with half-sample symmetric borders.
Grid brute_lowpass(const Grid& in, double scale) {
  if (scale == 1.0) return in;
  const double sigma = scale / 2.0;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& t : k) t /= sum;
  auto reflect = [](int i, int n) {
    const int m = 2 * n;
    const int t = ((i % m) + m) % m;
    return t < n ? t : m - 1 - t;
  };
  Grid out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j)
        for (int i = -r; i <= r; ++i)
          acc += k[i + r] * k[j + r] * in(reflect(x + i, in.width()), reflect(y + j, in.height()));
      out(x, y) = acc;
    }
  }
  return out;
}

double sum_sq(const Grid& a, const Grid& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Consistent problem: image rendered from the init DEM itself.
SfSProblem consistent_problem(int n, std::uint64_t seed) {
  TerrainSpec spec;
  spec.width = n;
  spec.height = n;
  spec.crater_count = 2;
  spec.crater_radius_min = 3.0;
  spec.crater_radius_max = 6.0;
  spec.seed = seed;
  SfSProblem pb;
  pb.dem_init = synth_terrain(spec);
  pb.illum = IlluminationGeometry::from_az_el(30.0, 45.0, 0.0, 90.0);
  pb.image = render_image(pb.dem_init, Grid(n, n, pb.params.w), pb.illum, ReflectanceModel::kHapke);
  return pb;
}

double slope_rmse_deg(const Dem& truth, const GradientField& gf) {
  return rmse(slope_map(gradient_field(truth)), slope_map(gf)) * 180.0 / 3.14159265358979323846;
}

}  // namespace

TEST_CASE("intensity_error") {
  const Grid r = random_grid(6, 5, 1, 0.0, 0.1);
  const Grid i = random_grid(6, 5, 2, 0.0, 0.1);
  CHECK(intensity_error(r, r) == 0.0);
  CHECK(intensity_error(Grid(1, 1, 0.2), Grid(1, 1, 0.1)) == doctest::Approx(0.005).epsilon(1e-14));
  CHECK(intensity_error(r, i) == intensity_error(i, r));
  CHECK(intensity_error(Grid(1, 1, 0.2), Grid(1, 1, 0.1), 2.0) == doctest::Approx(0.02));
  CHECK_THROWS_AS(intensity_error(r, Grid(5, 6)), std::invalid_argument);
}

TEST_CASE("integrability_error") {
  const Dem z(random_grid(9, 7, 3, -2.0, 2.0), 1.0);
  CHECK(integrability_error(z, gradient_field(z)) == 0.0);

  const Dem flat(Grid(10, 8, 3.0), 1.0);
  const GradientField ones{Grid(10, 8, 1.0), Grid(10, 8, 0.0)};
  CHECK(integrability_error(flat, ones) == doctest::Approx(40.0));

  const GradientField rnd{random_grid(9, 7, 4, -1.0, 1.0), random_grid(9, 7, 5, -1.0, 1.0)};
  CHECK(integrability_error(z, rnd) >= 0.0);
  CHECK_THROWS_AS(integrability_error(z, ones), std::invalid_argument);
}

TEST_CASE("relative_depth_error") {
  const Dem init(random_grid(20, 14, 6, -3.0, 3.0), 1.0);
  CHECK(relative_depth_error(gradient_field(init), init, 4.0) == 0.0);

  const GradientField gf{random_grid(20, 14, 7, -1.0, 1.0), random_grid(20, 14, 8, -1.0, 1.0)};
  Grid lifted = init.heights;
  for (double& v : lifted.values()) v += 42.0;
  CHECK(relative_depth_error(gf, Dem(lifted, 1.0), 4.0) ==
        doctest::Approx(relative_depth_error(gf, init, 4.0)).epsilon(1e-9));

  for (double scale : {1.0, 3.0, 8.0}) {
    const GradientField ref = gradient_field(init);
    const double expected = 0.5 * (sum_sq(brute_lowpass(gf.p, scale), brute_lowpass(ref.p, scale)) +
                                    sum_sq(brute_lowpass(gf.q, scale), brute_lowpass(ref.q, scale)));
    CHECK(relative_depth_error(gf, init, scale) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(relative_depth_error(gf, Dem(Grid(5, 5), 1.0), 4.0), std::invalid_argument);
}

TEST_CASE("absolute_depth_error") {
  const Dem init(random_grid(16, 12, 9, -3.0, 3.0), 1.0);
  CHECK(absolute_depth_error(init, init, 8.0) == 0.0);

  Grid shifted = init.heights;
  for (double& v : shifted.values()) v += 0.5;
  CHECK(absolute_depth_error(Dem(shifted, 1.0), init, 8.0) ==
        doctest::Approx(0.5 * 192 * 0.25).epsilon(1e-9));

  Grid checker = init.heights;
  const double a = 2.0;
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) checker(x, y) += ((x + y) % 2 == 0 ? a : -a);
  const double value = absolute_depth_error(Dem(checker, 1.0), init, 8.0);
  const double oracle = 0.5 * sum_sq(brute_lowpass(checker, 8.0), brute_lowpass(init.heights, 8.0));
  CHECK(value == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(value < 1e-3 * 0.5 * 192 * a * a);
  CHECK_THROWS_AS(absolute_depth_error(Dem(Grid(5, 5), 1.0), init, 8.0), std::invalid_argument);
}

TEST_CASE("total_error decomposition") {
  auto r = testing::random_energy_state(5, 7);
  const EnergyTerms t = energy_terms(r.state, r.problem);
  const SfSConfig& c = r.problem.cfg;
  CHECK(t.total == doctest::Approx(t.intensity + c.gamma * t.integrability + c.delta * t.relative +
                                   c.tau * t.absolute).epsilon(1e-12));

  const Grid rendered = render_from_slopes(r.state.slopes, r.state.albedo, r.problem.illum,
                                           ReflectanceModel::kHapke, r.problem.params);
  CHECK(t.intensity == doctest::Approx(intensity_error(rendered, r.problem.image)).epsilon(1e-12));
  CHECK(t.integrability == doctest::Approx(integrability_error(r.state.z, r.state.slopes)).epsilon(1e-12));
  CHECK(t.relative ==
        doctest::Approx(relative_depth_error(r.state.slopes, r.problem.dem_init, c.lowpass_scale)).epsilon(1e-12));
  CHECK(t.absolute ==
        doctest::Approx(absolute_depth_error(r.state.z, r.problem.dem_init, c.lowpass_scale)).epsilon(1e-12));

  auto bare = testing::random_energy_state(5, 0);
  CHECK(total_error(bare.state, bare.problem) == doctest::Approx(t.intensity).epsilon(1e-12));
}

TEST_CASE("total_error: unlit pixels render as zero reflectance") {
  SfSProblem pb;
  pb.dem_init = Dem(Grid(5, 5), 1.0);
  pb.illum = IlluminationGeometry::from_az_el(0.0, 45.0, 0.0, 90.0);
  pb.image = Grid(5, 5, 0.01);
  pb.cfg.gamma = pb.cfg.delta = pb.cfg.tau = 0.0;
  SfSState s = initial_state(pb);
  s.slopes.p(2, 2) = 3.0;  // facing away from the sun
  const Grid rendered = render_from_slopes(s.slopes, s.albedo, pb.illum, ReflectanceModel::kHapke);
  CHECK(rendered(2, 2) == 0.0);
  CHECK(total_error(s, pb) == doctest::Approx(intensity_error(rendered, pb.image)).epsilon(1e-12));
  CHECK(energy_gradient(s, pb).d_p(2, 2) == 0.0);
}

TEST_CASE("total_error is zero for a perfect render with matching init") {
  const SfSProblem pb = consistent_problem(24, 3);
  const SfSState s = initial_state(pb);
  CHECK(total_error(s, pb) < 1e-25);
  const EnergyGradient g = energy_gradient(s, pb);
  for (const Grid* grid : {&g.d_p, &g.d_q, &g.d_z})
    for (double v : grid->values()) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("energy_gradient matches central differences") {
  for (int weights : {0, 1, 7}) {
    CAPTURE(weights);
    const auto r = testing::random_energy_state(100 + static_cast<std::uint64_t>(weights), weights);
    const auto check = testing::check_gradient(r.state, r.problem);
    CHECK(check.components == 3 * 256);
    CHECK(check.max_rel_error < 1e-5);
  }
}

TEST_CASE("energy_gradient: no z dependence without regularizers") {
  const auto r = testing::random_energy_state(9, 0);
  const EnergyGradient g = energy_gradient(r.state, r.problem);
  for (double v : g.d_z.values()) CHECK(v == 0.0);
}

TEST_CASE("energy_gradient with non-unit pixel size") {
  auto r = testing::random_energy_state(12, 7);
  r.problem.dem_init.pixel_size = 2.5;
  r.state.z.pixel_size = 2.5;
  CHECK(testing::check_gradient(r.state, r.problem).max_rel_error < 1e-5);
}

TEST_CASE("estimate_albedo") {
  SfSProblem pb;
  const int n = 12;
  pb.dem_init = Dem(Grid(n, n), 1.0);
  pb.illum = IlluminationGeometry::from_az_el(20.0, 50.0, 0.0, 90.0);
  pb.image = render_image(pb.dem_init, Grid(n, n, 0.3), pb.illum, ReflectanceModel::kHapke);
  pb.params.w = 0.5;
  SfSState s = initial_state(pb);

  SUBCASE("flat surface recovers w") {
    const AlbedoEstimate est = estimate_albedo(s, pb);
    const Grid re = render_image(pb.dem_init, est.raw, pb.illum, ReflectanceModel::kHapke);
    for (std::size_t i = 0; i < re.size(); ++i) {
      CHECK(est.raw[i] == doctest::Approx(0.3).epsilon(1e-9));
      CHECK(std::abs(re[i] - pb.image[i]) < 1e-8);
      CHECK(est.clamped[i] == 0);
      CHECK(est.smoothed[i] == doctest::Approx(0.3).epsilon(1e-9));
    }
  }
  SUBCASE("dark pixels clamp to the lower bound, bright ones to 1") {
    pb.image(3, 3) = 0.0;
    pb.image(5, 5) = 10.0;
    const AlbedoEstimate est = estimate_albedo(s, pb);
    CHECK(est.raw(3, 3) == kAlbedoMin);
    CHECK(est.clamped[3 * n + 3] == 1);
    CHECK(est.raw(5, 5) == 1.0);
    CHECK(est.clamped[5 * n + 5] == 1);
    CHECK(est.clamped[0] == 0);
  }
  SUBCASE("unlit pixels keep their albedo") {
    s.slopes.p(4, 4) = 5.0;
    s.albedo(4, 4) = 0.77;
    const AlbedoEstimate est = estimate_albedo(s, pb);
    CHECK(est.raw(4, 4) == 0.77);
  }
}

TEST_CASE("estimate_albedo is a fixed point of a consistent state") {
  const SfSProblem pb = consistent_problem(24, 5);
  const SfSState s = initial_state(pb);
  const AlbedoEstimate est = estimate_albedo(s, pb);
  for (std::size_t i = 0; i < est.raw.size(); ++i) {
    CHECK(std::abs(est.raw[i] - pb.params.w) < 1e-12);
    CHECK(std::abs(est.smoothed[i] - pb.params.w) < 1e-12);
  }
}

TEST_CASE("reconstruct: image rendered from the init DEM is a fixed point") {
  const SfSProblem pb = consistent_problem(32, 7);
  const SfSState out = reconstruct(pb);
  for (std::size_t i = 0; i < out.z.heights.size(); ++i)
    CHECK(std::abs(out.z.heights[i] - pb.dem_init.heights[i]) < 1e-6);
  CHECK(out.history.back().total < 1e-8);
}

TEST_CASE("reconstruct: energy history is non-increasing") {
  for (auto method : {DescentMethod::kLbfgs, DescentMethod::kGradient}) {
    auto r = testing::random_energy_state(31, 7, 24);
    r.problem.cfg.max_iters = 150;
    r.problem.cfg.albedo_update_period = 10;
    r.problem.cfg.method = method;
    const SfSState out = reconstruct(r.problem);
    const auto e = out.energy_history();
    CHECK(e.size() > 1);
    for (std::size_t k = 1; k < e.size(); ++k) CHECK(e[k] <= e[k - 1]);
    CHECK(e.back() < e.front());
  }
}

TEST_CASE("reconstruct: translation consistency") {
  TerrainSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.crater_count = 3;
  spec.crater_radius_min = 3.0;
  spec.crater_radius_max = 6.0;
  const Dem truth = synth_terrain(spec);
  SfSProblem pb;
  pb.illum = IlluminationGeometry::from_az_el(30.0, 45.0, 0.0, 90.0);
  pb.image = render_image(truth, Grid(32, 32, 0.3), pb.illum, ReflectanceModel::kHapke);
  pb.dem_init = Dem(lowpass(truth.heights, 4.0), 1.0);
  pb.cfg.lowpass_scale = 4.0;
  pb.cfg.max_iters = 60;
  pb.cfg.tau = 1e-4;
  const SfSState a = reconstruct(pb);
  const double c = 3.0;
  for (double& v : pb.dem_init.heights.values()) v += c;
  const SfSState b = reconstruct(pb);
  for (std::size_t i = 0; i < a.z.heights.size(); ++i) {
    CHECK(std::abs(b.z.heights[i] - a.z.heights[i] - c) < 1e-6);
    CHECK(std::abs(b.slopes.p[i] - a.slopes.p[i]) < 1e-6);
    CHECK(std::abs(b.slopes.q[i] - a.slopes.q[i]) < 1e-6);
    CHECK(std::abs(b.albedo[i] - a.albedo[i]) < 1e-6);
  }
}

TEST_CASE("reconstruct: crater scene beats the low-pass init") {
  TerrainSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.crater_count = 4;
  spec.seed = 4;
  const Dem truth = synth_terrain(spec);
  SfSProblem pb;
  pb.illum = IlluminationGeometry::from_az_el(30.0, 45.0, 0.0, 90.0);
  pb.image = render_image(truth, Grid(64, 64, 0.3), pb.illum, ReflectanceModel::kHapke);
  pb.dem_init = Dem(lowpass(truth.heights, 8.0), 1.0);
  pb.cfg.max_iters = 300;
  const SfSState out = reconstruct(pb);
  CHECK(slope_rmse_deg(truth, gradient_field(out.z)) < slope_rmse_deg(truth, gradient_field(pb.dem_init)));
}

TEST_CASE("reconstruct: errors") {
  SfSProblem pb = consistent_problem(16, 2);
  SUBCASE("dark image") {
    pb.image = Grid(16, 16, 0.0);
    CHECK_THROWS_AS(reconstruct(pb), std::invalid_argument);
  }
  SUBCASE("shape mismatch") {
    pb.image = Grid(15, 16, 0.01);
    CHECK_THROWS_AS(reconstruct(pb), std::invalid_argument);
  }
  SUBCASE("bad config") {
    pb.cfg.gamma = -1.0;
    CHECK_THROWS_AS(reconstruct(pb), std::invalid_argument);
    pb.cfg = SfSConfig{};
    pb.cfg.stop_tol = 0.0;
    CHECK_THROWS_AS(reconstruct(pb), std::invalid_argument);
    pb.cfg = SfSConfig{};
    pb.cfg.max_iters = 0;
    CHECK_THROWS_AS(reconstruct(pb), std::invalid_argument);
  }
  SUBCASE("non-finite energy") {
    pb.params.coherent_backscatter = [](double) { return std::numeric_limits<double>::quiet_NaN(); };
    try {
      (void)reconstruct(pb);
      FAIL("expected SolverDiverged");
    } catch (const SolverDiverged& e) {
      CHECK(e.iteration() == 0);
    }
  }
}
