#include "lunarsfs/render.hpp"

#include <algorithm>
#include <stdexcept>

namespace lunarsfs {

Grid render_from_slopes(const GradientField& gf, const Grid& albedo,
                        const IlluminationGeometry& illum, ReflectanceModel model,
                        const HapkeParams& params) {
  require_same_shape(gf.p, albedo, "render_image");
  require_same_shape(gf.p, gf.q, "render_image");
  const Vec3 sun = illum.sun();
  const Vec3 view = illum.view();
  Grid out(albedo.width(), albedo.height());

  if (model == ReflectanceModel::kLambert) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Vec3 n = normal_from_slopes(gf.p[i], gf.q[i]);
      out[i] = albedo[i] * std::max(0.0, dot(n, sun));
    }
    return out;
  }

  for (double w : albedo.values()) {
    if (!(w > 0.0 && w <= 1.0)) {
      throw std::invalid_argument("render_image: Hapke albedo must lie in (0, 1]");
    }
  }
  const AmsaAtPhase amsa(illum.phase(), params);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Vec3 n = normal_from_slopes(gf.p[i], gf.q[i]);
    out[i] = std::max(0.0, amsa.value(dot(n, sun), dot(n, view), albedo[i]));
  }
  return out;
}

Grid render_image(const Dem& dem, const Grid& albedo, const IlluminationGeometry& illum,
                  ReflectanceModel model, const HapkeParams& params) {
  require_same_shape(dem.heights, albedo, "render_image");
  return render_from_slopes(gradient_field(dem), albedo, illum, model, params);
}

Grid lambert_shade_raw(const Dem& dem, Vec3 light) {
  if (dot(light, light) == 0.0) throw std::invalid_argument("lambert_shade: zero light vector");
  const GradientField gf = gradient_field(dem);
  Grid out(dem.width(), dem.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(0.0, dot(normal_from_slopes(gf.p[i], gf.q[i]), light));
  }
  return out;
}

Grid lambert_shade(const Dem& dem, Vec3 light) {
  Grid out = lambert_shade_raw(dem, light);
  const double lo = grid_min(out);
  const double hi = grid_max(out);
  if (hi - lo <= 0.0) {
    for (double& v : out.values()) v = 0.5;
    return out;
  }
  for (double& v : out.values()) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return out;
}

}  // namespace lunarsfs
