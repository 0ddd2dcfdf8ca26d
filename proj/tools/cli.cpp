#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "lunarsfs/config.hpp"
#include "lunarsfs/dataset.hpp"
#include "lunarsfs/metrics.hpp"
#include "lunarsfs/render.hpp"
#include "lunarsfs/sfs.hpp"
#include "lunarsfs/terrain.hpp"
#include "lunarsfs/vq.hpp"

namespace lunarsfs::cli {
namespace {

namespace fs = std::filesystem;

// Bad flag values found after parsing; reported as usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + ": not a number: '" + s + "'");
  }
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (const auto& part : split(s, ',')) v.push_back(to_double(part, what));
  if (v.empty()) throw UsageError(what + ": empty list");
  return v;
}

std::pair<double, double> parse_az_el(const std::string& s, const std::string& what) {
  const auto v = parse_list(s, what);
  if (v.size() != 2) throw UsageError(what + ": expected az,el in degrees");
  return {v[0], v[1]};
}

IlluminationGeometry geometry(const std::string& sun, const std::string& view) {
  const auto [saz, sel] = parse_az_el(sun, "--sun");
  const auto [vaz, vel] = parse_az_el(view, "--view");
  return IlluminationGeometry::from_az_el(saz, sel, vaz, vel);
}

Modality modality_flag(const std::string& name) {
  try {
    return parse_modality(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Grid read_grid(const fs::path& path) {
  const Raster r = read_raster(path);
  if (r.channels() != 1) {
    throw std::runtime_error(path.string() + ": expected 1 channel, got " +
                             std::to_string(r.channels()));
  }
  return channel_grid(r);
}

std::ofstream open_text(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.precision(17);
  return f;
}

// Prints +inf as "inf" on every platform.
std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------- gen-terrain

struct GenTerrainArgs {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::optional<int> width, height, crater_count;
  std::optional<double> pixel_size, amplitude;
  std::string out;
};

void add_gen_terrain(CLI::App& app, GenTerrainArgs& a) {
  app.add_option("--spec", a.spec, "terrain spec (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", a.seed, "random seed");
  app.add_option("--width", a.width);
  app.add_option("--height", a.height);
  app.add_option("--pixel-size", a.pixel_size, "meters per pixel");
  app.add_option("--crater-count", a.crater_count);
  app.add_option("--amplitude", a.amplitude, "RMS of the fractal base, m");
  app.add_option("--out", a.out, "output DEM (SFSR)")->required();
}

int gen_terrain(const GenTerrainArgs& a, std::ostream& out) {
  TerrainSpec spec;
  if (!a.spec.empty()) {
    const auto cfg = KeyValueConfig::load(a.spec);
    cfg.require_known({"width", "height", "pixel_size", "crater_count", "crater_radius_min",
                       "crater_radius_max", "crater_depth_ratio_min", "crater_depth_ratio_max",
                       "rim_height_ratio", "fractal_amplitude", "roughness_exponent", "seed"});
    spec.width = static_cast<int>(cfg.get_int("width", spec.width));
    spec.height = static_cast<int>(cfg.get_int("height", spec.height));
    spec.pixel_size = cfg.get_double("pixel_size", spec.pixel_size);
    spec.crater_count = static_cast<int>(cfg.get_int("crater_count", spec.crater_count));
    spec.crater_radius_min = cfg.get_double("crater_radius_min", spec.crater_radius_min);
    spec.crater_radius_max = cfg.get_double("crater_radius_max", spec.crater_radius_max);
    spec.crater_depth_ratio_min = cfg.get_double("crater_depth_ratio_min", spec.crater_depth_ratio_min);
    spec.crater_depth_ratio_max = cfg.get_double("crater_depth_ratio_max", spec.crater_depth_ratio_max);
    spec.rim_height_ratio = cfg.get_double("rim_height_ratio", spec.rim_height_ratio);
    spec.fractal_amplitude = cfg.get_double("fractal_amplitude", spec.fractal_amplitude);
    spec.roughness_exponent = cfg.get_double("roughness_exponent", spec.roughness_exponent);
    const long long seed = cfg.get_int("seed", static_cast<long long>(spec.seed));
    if (seed < 0) throw std::invalid_argument("seed must be non-negative");
    spec.seed = static_cast<std::uint64_t>(seed);
  }
  if (a.seed) spec.seed = *a.seed;
  if (a.width) spec.width = *a.width;
  if (a.height) spec.height = *a.height;
  if (a.pixel_size) spec.pixel_size = *a.pixel_size;
  if (a.crater_count) spec.crater_count = *a.crater_count;
  if (a.amplitude) spec.fractal_amplitude = *a.amplitude;

  const Dem dem = synth_terrain(spec);
  write_raster(a.out, to_raster(dem.heights));
  out << "wrote " << a.out << " (" << spec.width << "x" << spec.height << ")\n";
  return kExitOk;
}

// --------------------------------------------------------------------- render

struct RenderArgs {
  std::string dem, albedo, sun, view = "0,90", model = "hapke", out;
  std::optional<double> albedo_const;
  double pixel_size = 1.0;
};

void add_render(CLI::App& app, RenderArgs& a) {
  app.add_option("--dem", a.dem, "input DEM (SFSR)")->required()->check(CLI::ExistingFile);
  auto* file = app.add_option("--albedo", a.albedo, "albedo map (SFSR)")->check(CLI::ExistingFile);
  auto* cnst = app.add_option("--albedo-const", a.albedo_const, "uniform albedo");
  file->excludes(cnst);
  app.add_option("--sun", a.sun, "sun azimuth,elevation in degrees")->required();
  app.add_option("--view", a.view, "camera azimuth,elevation in degrees");
  app.add_option("--model", a.model, "reflectance model")
      ->check(CLI::IsMember({"hapke", "lambert"}));
  app.add_option("--pixel-size", a.pixel_size, "meters per pixel");
  app.add_option("--out", a.out, "output image (SFSR)")->required();
}

int render(const RenderArgs& a, std::ostream& out) {
  if (a.albedo.empty() && !a.albedo_const) throw UsageError("one of --albedo or --albedo-const is required");
  const IlluminationGeometry illum = geometry(a.sun, a.view);
  const Dem dem(read_grid(a.dem), a.pixel_size);
  const Grid albedo = a.albedo.empty() ? Grid(dem.width(), dem.height(), *a.albedo_const)
                                       : read_grid(a.albedo);
  const auto model = a.model == "lambert" ? ReflectanceModel::kLambert : ReflectanceModel::kHapke;
  const Grid image = render_image(dem, albedo, illum, model);
  write_raster(a.out, to_raster(image));
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------------ sfs

struct SfsArgs {
  std::string image, init_dem, sun, view = "0,90", config;
  std::string out_dem, out_normals, out_albedo, log;
  double pixel_size = 1.0;
};

void add_sfs(CLI::App& app, SfsArgs& a) {
  app.add_option("--image", a.image, "observed I/F image (SFSR)")->required()->check(CLI::ExistingFile);
  app.add_option("--init-dem", a.init_dem, "initial low-resolution DEM on the image grid")
      ->required()->check(CLI::ExistingFile);
  app.add_option("--sun", a.sun, "sun azimuth,elevation in degrees")->required();
  app.add_option("--view", a.view, "camera azimuth,elevation in degrees");
  app.add_option("--config", a.config, "solver settings (key = value)")->check(CLI::ExistingFile);
  app.add_option("--out-dem", a.out_dem)->required();
  app.add_option("--out-normals", a.out_normals);
  app.add_option("--out-albedo", a.out_albedo);
  app.add_option("--log", a.log, "energy history (TSV)");
  app.add_option("--pixel-size", a.pixel_size, "meters per pixel");
}

void apply_sfs_config(const KeyValueConfig& cfg, SfSConfig& s, HapkeParams& h) {
  cfg.require_known({"gamma", "delta", "tau", "lowpass_scale", "max_iters", "step_pq", "step_z",
                     "albedo_update_period", "stop_tol", "stop_window", "method", "lbfgs_memory",
                     "w", "b", "c", "bs0", "hs"});
  s.gamma = cfg.get_double("gamma", s.gamma);
  s.delta = cfg.get_double("delta", s.delta);
  s.tau = cfg.get_double("tau", s.tau);
  s.lowpass_scale = cfg.get_double("lowpass_scale", s.lowpass_scale);
  s.max_iters = static_cast<int>(cfg.get_int("max_iters", s.max_iters));
  s.step_pq = cfg.get_double("step_pq", s.step_pq);
  s.step_z = cfg.get_double("step_z", s.step_z);
  s.albedo_update_period = static_cast<int>(cfg.get_int("albedo_update_period", s.albedo_update_period));
  s.stop_tol = cfg.get_double("stop_tol", s.stop_tol);
  s.stop_window = static_cast<int>(cfg.get_int("stop_window", s.stop_window));
  s.lbfgs_memory = static_cast<int>(cfg.get_int("lbfgs_memory", s.lbfgs_memory));
  const std::string method = cfg.get_string("method", "lbfgs");
  if (method == "lbfgs") {
    s.method = DescentMethod::kLbfgs;
  } else if (method == "gradient") {
    s.method = DescentMethod::kGradient;
  } else {
    throw std::invalid_argument("config: method must be lbfgs or gradient, got '" + method + "'");
  }
  h.w = cfg.get_double("w", h.w);
  h.b = cfg.get_double("b", h.b);
  h.c = cfg.get_double("c", h.c);
  h.bs0 = cfg.get_double("bs0", h.bs0);
  h.hs = cfg.get_double("hs", h.hs);
}

int sfs(const SfsArgs& a, std::ostream& out) {
  SfSProblem problem;
  problem.illum = geometry(a.sun, a.view);
  if (!a.config.empty()) apply_sfs_config(KeyValueConfig::load(a.config), problem.cfg, problem.params);
  problem.image = read_grid(a.image);
  problem.dem_init = Dem(read_grid(a.init_dem), a.pixel_size);

  const SfSState state = reconstruct(problem);

  write_raster(a.out_dem, to_raster(state.z.heights));
  if (!a.out_normals.empty()) write_raster(a.out_normals, to_raster(normals_from_gradient(state.slopes)));
  if (!a.out_albedo.empty()) write_raster(a.out_albedo, to_raster(state.albedo));
  if (!a.log.empty()) {
    auto f = open_text(a.log);
    for (const auto& t : state.history) {
      f << t.iteration << '\t' << t.total << '\t' << t.intensity << '\t' << t.integrability
        << '\t' << t.relative << '\t' << t.absolute << '\n';
    }
  }
  const auto& last = state.history.back();
  out << "iterations " << last.iteration << ", final energy " << format_value(last.total) << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred, truth, modality = "dem", thresholds = "2,4,10", report, profile;
  std::optional<double> datarange;
  double pixel_size = 1.0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  app.add_option("--pred", a.pred)->required()->check(CLI::ExistingFile);
  app.add_option("--truth", a.truth)->required()->check(CLI::ExistingFile);
  app.add_option("--modality", a.modality, "gray|dem|normals|albedo");
  app.add_option("--datarange", a.datarange, "PSNR peak value (default: truth max - min)");
  app.add_option("--thresholds", a.thresholds, "remaining-error thresholds in meters");
  app.add_option("--report", a.report, "write the report here instead of stdout");
  app.add_option("--pixel-size", a.pixel_size, "meters per pixel (dem shading)");
  app.add_option("--profile", a.profile, "center-row profile of channel 0 (TSV)");
}

// Stacks all channels vertically so MSE covers every sample.
Grid stacked(const Raster& r) {
  Grid g(r.width(), r.height() * r.channels());
  std::size_t i = 0;
  for (float v : r.samples()) g[i++] = v;
  return g;
}

// Joint min-max rescale to [0, 1] when either grid leaves that range.
void unit_range(Grid& x, Grid& y) {
  const auto [xlo, xhi] = std::minmax_element(x.values().begin(), x.values().end());
  const auto [ylo, yhi] = std::minmax_element(y.values().begin(), y.values().end());
  const double lo = std::min(*xlo, *ylo);
  const double hi = std::max(*xhi, *yhi);
  if (lo >= 0.0 && hi <= 1.0) return;
  const double span = hi > lo ? hi - lo : 1.0;
  for (double& v : x.values()) v = (v - lo) / span;
  for (double& v : y.values()) v = (v - lo) / span;
}

int eval(const EvalArgs& a, std::ostream& out) {
  const Modality modality = modality_flag(a.modality);
  const std::vector<double> thresholds = parse_list(a.thresholds, "--thresholds");
  const Raster pred = read_raster(a.pred);
  const Raster truth = read_raster(a.truth);
  if (pred.width() != truth.width() || pred.height() != truth.height() ||
      pred.channels() != truth.channels()) {
    throw std::runtime_error("eval: --pred and --truth differ in shape");
  }

  const Grid p_all = stacked(pred);
  const Grid t_all = stacked(truth);
  double range = 1.0;
  if (a.datarange) {
    range = *a.datarange;
  } else {
    const auto [lo, hi] = std::minmax_element(t_all.values().begin(), t_all.values().end());
    if (*hi > *lo) range = *hi - *lo;
  }

  double s = 0.0;
  if (modality == Modality::kDem) {
    s = ssim(lambert_shade(Dem(channel_grid(pred), a.pixel_size)),
             lambert_shade(Dem(channel_grid(truth), a.pixel_size)));
  } else {
    for (int c = 0; c < pred.channels(); ++c) {
      Grid x = channel_grid(pred, c);
      Grid y = channel_grid(truth, c);
      if (modality == Modality::kNormals) {
        for (double& v : x.values()) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
        for (double& v : y.values()) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
      } else {
        unit_range(x, y);
      }
      s += ssim(x, y) / pred.channels();
    }
  }

  std::ostringstream report;
  report << "mse\t" << format_value(mse(t_all, p_all)) << '\n';
  report << "rmse\t" << format_value(rmse(t_all, p_all)) << '\n';
  report << "psnr\t" << format_value(psnr(t_all, p_all, range)) << '\n';
  report << "ssim\t" << format_value(s) << '\n';
  if (modality == Modality::kDem) {
    const Grid pz = channel_grid(pred);
    const Grid tz = channel_grid(truth);
    for (double e : thresholds) {
      report << "re_" << format_value(e) << '\t' << format_value(remaining_error(tz, pz, e)) << '\n';
    }
  }

  if (a.report.empty()) {
    out << report.str();
  } else {
    open_text(a.report) << report.str();
  }
  if (!a.profile.empty()) {
    auto f = open_text(a.profile);
    const int y = pred.height() / 2;
    f << "x\tpred\ttruth\n";
    for (int x = 0; x < pred.width(); ++x) f << x << '\t' << pred.at(x, y) << '\t' << truth.at(x, y) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------- slice

struct SliceArgs {
  std::string in, out_dir, prefix = "patch", normalize;
  int size = kPatchSize;
  int stride = kPatchStride;
  std::optional<double> mean, std;
};

void add_slice(CLI::App& app, SliceArgs& a) {
  app.add_option("--in", a.in)->required()->check(CLI::ExistingFile);
  app.add_option("--out-dir", a.out_dir)->required();
  app.add_option("--size", a.size, "patch side");
  app.add_option("--stride", a.stride, "patch stride");
  app.add_option("--prefix", a.prefix, "file name prefix");
  app.add_option("--normalize", a.normalize, "normalize each patch as this modality");
  app.add_option("--mean", a.mean, "global mean (gray/albedo)");
  app.add_option("--std", a.std, "global std (gray/albedo)");
}

int slice(const SliceArgs& a, std::ostream& out) {
  std::optional<Modality> modality;
  if (!a.normalize.empty()) modality = modality_flag(a.normalize);
  std::optional<NormalizationStats> stats;
  if (a.mean || a.std) {
    if (!a.mean || !a.std) throw UsageError("--mean and --std go together");
    stats = NormalizationStats{*a.mean, *a.std};
  }
  const Raster raster = read_raster(a.in);
  const auto patches = slice_patches(raster, a.size, a.stride);
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "_%04zu.sfsr", i);
    const Raster r = modality ? normalize_modality(patches[i].raster, *modality, stats) : patches[i].raster;
    write_raster(fs::path(a.out_dir) / (a.prefix + name), r);
  }
  out << patches.size() << " patches\n";
  return kExitOk;
}

// ----------------------------------------------------------------------- mask

struct MaskArgs {
  std::string modalities = "gray,dem,normals,albedo", alpha = "1", out;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  bool uniform = false;
  std::size_t tokens = kTokensPerImage;
};

void add_mask(CLI::App& app, MaskArgs& a) {
  app.add_option("--modalities", a.modalities, "comma-separated modality names");
  app.add_option("--alpha", a.alpha, "Dirichlet concentration, one value or one per modality");
  app.add_option("--budget", a.budget, "total input tokens")->required();
  app.add_option("--seed", a.seed, "random seed");
  app.add_flag("--uniform", a.uniform, "equal proportions across modalities");
  app.add_option("--tokens", a.tokens, "tokens per modality");
  app.add_option("--out", a.out, "write the plan here instead of stdout");
}

void write_indices(std::ostream& os, const std::vector<std::size_t>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
}

int mask(const MaskArgs& a, std::ostream& out) {
  const auto names = split(a.modalities, ',');
  if (names.empty()) throw UsageError("--modalities: empty list");
  for (const auto& n : names) modality_flag(n);
  std::vector<double> alphas = parse_list(a.alpha, "--alpha");
  if (alphas.size() == 1) alphas.assign(names.size(), alphas[0]);
  if (alphas.size() != names.size()) throw UsageError("--alpha: need one value or one per modality");

  MaskOptions opts;
  opts.alphas = alphas;
  opts.input_budget = a.budget;
  opts.seed = a.seed;
  opts.uniform = a.uniform;
  opts.tokens_per_modality = a.tokens;
  const MaskPlan plan = dirichlet_mask(opts);

  std::ostringstream text;
  for (std::size_t m = 0; m < names.size(); ++m) {
    text << names[m] << ":input:";
    write_indices(text, plan.modalities[m].inputs);
    text << '\n' << names[m] << ":target:";
    write_indices(text, plan.modalities[m].targets);
    text << '\n';
  }
  if (a.out.empty()) {
    out << text.str();
  } else {
    open_text(a.out) << text.str();
  }
  return kExitOk;
}

// --------------------------------------------------------------------- vq-fit

struct VqFitArgs {
  std::vector<std::string> inputs;
  std::optional<std::size_t> vocab;
  std::string modality = "gray", out, log;
  int epochs = 50;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  double datarange = 1.0;
};

void add_vq_fit(CLI::App& app, VqFitArgs& a) {
  app.add_option("--inputs", a.inputs, "training rasters (SFSR)")->required()->expected(1, -1)
      ->check(CLI::ExistingFile);
  app.add_option("--vocab", a.vocab, "codebook size (default: per modality)");
  app.add_option("--modality", a.modality, "gray|dem|normals|albedo");
  app.add_option("--epochs", a.epochs, "passes over the data");
  app.add_option("--batch-size", a.batch_size, "vectors per EMA step, 0 = all");
  app.add_option("--seed", a.seed, "random seed");
  app.add_option("--datarange", a.datarange, "PSNR peak value in the log");
  app.add_option("--out", a.out, "codebook path (SFSR + .meta)")->required();
  app.add_option("--log", a.log, "per-epoch error (TSV)");
}

VectorBatch concat_cells(const std::vector<std::string>& paths) {
  std::vector<double> data;
  std::size_t dim = 0;
  for (const auto& p : paths) {
    const VectorBatch cells = image_cells(read_raster(p));
    if (dim != 0 && cells.dim() != dim) throw std::runtime_error(p + ": channel count differs");
    dim = cells.dim();
    data.insert(data.end(), cells.data().begin(), cells.data().end());
  }
  const std::size_t rows = dim ? data.size() / dim : 0;
  return VectorBatch(rows, dim, std::move(data));
}

double psnr_from_mse(double m, double range) {
  return m == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(range * range / m);
}

int vq_fit(const VqFitArgs& a, std::ostream& out) {
  const Modality modality = modality_flag(a.modality);
  const VectorBatch data = concat_cells(a.inputs);
  FitConfig cfg;
  cfg.vocab_size = a.vocab ? *a.vocab : default_vocab_size(modality);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.seed = a.seed;
  FitResult fit = fit_codebook(data, cfg);
  fit.codebook.modality = std::string(modality_name(modality));
  write_codebook(a.out, fit.codebook);

  const double dim = static_cast<double>(data.dim());
  if (!a.log.empty()) {
    auto f = open_text(a.log);
    f << "epoch\tmse\tpsnr\n";
    for (std::size_t e = 0; e < fit.epoch_error.size(); ++e) {
      const double m = fit.epoch_error[e] / dim;
      f << e + 1 << '\t' << m << '\t' << format_value(psnr_from_mse(m, a.datarange)) << '\n';
    }
  }
  const double final_mse = fit.epoch_error.back() / dim;
  out << "vectors " << data.rows() << ", vocab " << cfg.vocab_size << ", final psnr "
      << format_value(psnr_from_mse(final_mse, a.datarange)) << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- vq-code

struct VqCodeArgs {
  std::string in, codebook, tokens, recon, out;
  bool decode = false;
  double datarange = 1.0;
};

void add_vq_code(CLI::App& app, VqCodeArgs& a) {
  app.add_option("--codebook", a.codebook)->required()->check(CLI::ExistingFile);
  app.add_option("--tokens", a.tokens, "token file (written when encoding, read when decoding)")->required();
  app.add_flag("--decode", a.decode, "tokens -> raster instead of raster -> tokens");
  app.add_option("--in", a.in, "raster to encode")->check(CLI::ExistingFile);
  app.add_option("--recon", a.recon, "also write the decoded raster when encoding");
  app.add_option("--out", a.out, "decoded raster");
  app.add_option("--datarange", a.datarange, "PSNR peak value");
}

int vq_code(const VqCodeArgs& a, std::ostream& out) {
  const Codebook cb = read_codebook(a.codebook);
  if (a.decode) {
    if (a.out.empty()) throw UsageError("--decode needs --out");
    std::ifstream f(a.tokens);
    if (!f) throw std::runtime_error("cannot open " + a.tokens);
    int w = 0, h = 0, c = 0;
    if (!(f >> w >> h >> c)) throw std::runtime_error(a.tokens + ": missing 'w h c' header");
    std::vector<std::size_t> idx;
    for (std::size_t t; f >> t;) idx.push_back(t);
    if (!f.eof()) throw std::runtime_error(a.tokens + ": malformed token list");
    const Raster r = detokenize(idx, cb, w, h);
    if (r.channels() != c) throw std::runtime_error(a.tokens + ": channel count disagrees with codebook");
    write_raster(a.out, r);
    out << "wrote " << a.out << "\n";
    return kExitOk;
  }

  if (a.in.empty()) throw UsageError("encoding needs --in");
  const Raster img = read_raster(a.in);
  const auto idx = tokenize_image(img, cb);
  {
    auto f = open_text(a.tokens);
    f << img.width() << ' ' << img.height() << ' ' << img.channels() << '\n';
    for (std::size_t i = 0; i < idx.size(); ++i) f << (i ? " " : "") << idx[i];
    f << '\n';
  }
  const Raster back = detokenize(idx, cb, img.width(), img.height());
  if (!a.recon.empty()) write_raster(a.recon, back);
  out << "tokens\t" << idx.size() << "\n";
  out << "psnr\t" << format_value(psnr(stacked(img), stacked(back), a.datarange)) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lunar terrain rendering, shape-from-shading and dataset tools"};
  app.name("lunarsfs");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenTerrainArgs gen;
  RenderArgs ren;
  SfsArgs sf;
  EvalArgs ev;
  SliceArgs sl;
  MaskArgs mk;
  VqFitArgs vf;
  VqCodeArgs vc;

  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
  auto add = [&](const char* name, const char* help, auto setup, auto& a, auto handler) {
    CLI::App* sub = app.add_subcommand(name, help);
    setup(*sub, a);
    commands.emplace_back(sub, [&a, &out, handler] { return handler(a, out); });
  };
  add("gen-terrain", "synthesize a cratered DEM", add_gen_terrain, gen, gen_terrain);
  add("render", "render an I/F image from a DEM", add_render, ren, render);
  add("sfs", "reconstruct DEM, normals and albedo from an image", add_sfs, sf, sfs);
  add("eval", "score a prediction against ground truth", add_eval, ev, eval);
  add("slice", "cut a raster into overlapping patches", add_slice, sl, slice);
  add("mask", "sample a Dirichlet input/target token mask", add_mask, mk, mask);
  add("vq-fit", "fit an EMA vector-quantization codebook", add_vq_fit, vf, vq_fit);
  add("vq-code", "convert between rasters and codebook tokens", add_vq_code, vc, vq_code);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto& [sub, handler] : commands) {
      if (sub->parsed()) return handler();
    }
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace lunarsfs::cli
