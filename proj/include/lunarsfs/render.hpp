#pragma once

#include "lunarsfs/grid.hpp"
#include "lunarsfs/photometry.hpp"
#include "lunarsfs/terrain.hpp"

namespace lunarsfs {

enum class ReflectanceModel { kHapke, kLambert };

/// Illumination vector used to shade DEMs before SSIM scoring.
inline constexpr Vec3 kShadingLight{0.5, 0.0, 0.4};

/// Renders I/F from per-pixel normals (via gradient_field) and a global
/// sun/view pair. For kHapke the albedo grid is the single-scattering
/// albedo w; for kLambert it is the Lambert albedo A. No cast shadows.
Grid render_image(const Dem& dem, const Grid& albedo, const IlluminationGeometry& illum,
                  ReflectanceModel model, const HapkeParams& params = {});

/// Same as render_image but from an explicit slope field.
Grid render_from_slopes(const GradientField& gf, const Grid& albedo,
                        const IlluminationGeometry& illum, ReflectanceModel model,
                        const HapkeParams& params = {});

/// max(0, n . light) with the raw (unnormalized) light vector.
Grid lambert_shade_raw(const Dem& dem, Vec3 light = kShadingLight);

/// lambert_shade_raw min-max rescaled to [0, 1]; a constant tile maps to 0.5.
Grid lambert_shade(const Dem& dem, Vec3 light = kShadingLight);

}  // namespace lunarsfs
