#include "lunarsfs/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace lunarsfs {

Raster::Raster(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 0) {
    throw std::invalid_argument("Raster: negative dimensions");
  }
  samples_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Raster to_raster(const Grid& grid) {
  Raster out(grid.width(), grid.height(), 1);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) out.at(x, y) = static_cast<float>(grid(x, y));
  }
  return out;
}

Raster to_raster(const NormalMap& normals) {
  Raster out(normals.width(), normals.height(), 3);
  for (int y = 0; y < normals.height(); ++y) {
    for (int x = 0; x < normals.width(); ++x) {
      const Vec3 n = normals(x, y);
      out.at(x, y, 0) = static_cast<float>(n.x);
      out.at(x, y, 1) = static_cast<float>(n.y);
      out.at(x, y, 2) = static_cast<float>(n.z);
    }
  }
  return out;
}

Grid channel_grid(const Raster& raster, int channel) {
  if (channel < 0 || channel >= raster.channels()) {
    throw std::invalid_argument("channel_grid: channel out of range");
  }
  Grid out(raster.width(), raster.height());
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) out(x, y) = raster.at(x, y, channel);
  }
  return out;
}

// ---- SFSR ----------------------------------------------------------------
// magic "SFSR" | u16 version | u32 width | u32 height | u16 channels |
// u8 dtype (0 = float32) | u16 reserved (0) | float32 LE samples

namespace {

constexpr std::uint8_t kMagic[4] = {0x53, 0x46, 0x53, 0x52};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_sfsr(const Raster& raster) {
  const auto samples = raster.samples();
  for (float v : samples) {
    if (!std::isfinite(v)) throw std::invalid_argument("write_raster: non-finite sample");
  }
  if (raster.channels() > 0xffff) throw std::invalid_argument("write_raster: too many channels");
  std::vector<std::uint8_t> out;
  out.reserve(kSfsrHeaderSize + samples.size() * 4);
  for (std::uint8_t b : kMagic) out.push_back(b);
  put_le<std::uint16_t>(out, kSfsrVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(raster.width()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(raster.height()));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(raster.channels()));
  out.push_back(0);                       // dtype float32
  put_le<std::uint16_t>(out, 0);          // reserved
  for (float v : samples) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Raster decode_sfsr(std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= bytes.size()) throw FormatError("SFSR: truncated magic", bytes.size());
    if (bytes[i] != kMagic[i]) throw FormatError("SFSR: bad magic", i);
  }
  if (bytes.size() < kSfsrHeaderSize) throw FormatError("SFSR: truncated header", bytes.size());
  if (get_le<std::uint16_t>(bytes, 4) != kSfsrVersion) {
    throw FormatError("SFSR: unsupported version", 4);
  }
  const auto width = get_le<std::uint32_t>(bytes, 6);
  const auto height = get_le<std::uint32_t>(bytes, 10);
  const auto channels = get_le<std::uint16_t>(bytes, 14);
  if (bytes[16] != 0) throw FormatError("SFSR: unsupported dtype", 16);
  if (get_le<std::uint16_t>(bytes, 17) != 0) throw FormatError("SFSR: nonzero reserved field", 17);
  if (width > 0x7fffffffu || height > 0x7fffffffu) {
    throw FormatError("SFSR: dimensions too large", 6);
  }
  const std::uint64_t count = static_cast<std::uint64_t>(width) * height * channels;
  const std::uint64_t expected = kSfsrHeaderSize + count * 4;
  if (bytes.size() < expected) throw FormatError("SFSR: truncated payload", bytes.size());
  if (bytes.size() > expected) throw FormatError("SFSR: trailing bytes", expected);

  Raster out(static_cast<int>(width), static_cast<int>(height), channels);
  auto samples = out.samples();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, kSfsrHeaderSize + 4 * i));
  }
  return out;
}

void write_raster(const std::filesystem::path& path, const Raster& raster) {
  const auto bytes = encode_sfsr(raster);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_raster: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_raster: write failed for " + path.string());
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_raster: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_sfsr(bytes);
}

// ---- Patching and normalization -------------------------------------------

std::size_t patch_count(int width, int height, int size, int stride) {
  if (size <= 0 || stride <= 0) throw std::invalid_argument("patch_count: size/stride must be > 0");
  if (width < size || height < size) {
    throw std::invalid_argument("slice_patches: raster smaller than patch size");
  }
  return static_cast<std::size_t>((width - size) / stride + 1) *
         static_cast<std::size_t>((height - size) / stride + 1);
}

std::vector<Patch> slice_patches(const Raster& raster, int size, int stride) {
  const std::size_t count = patch_count(raster.width(), raster.height(), size, stride);
  std::vector<Patch> out;
  out.reserve(count);
  for (int oy = 0; oy + size <= raster.height(); oy += stride) {
    for (int ox = 0; ox + size <= raster.width(); ox += stride) {
      Patch patch{ox, oy, Raster(size, size, raster.channels())};
      for (int c = 0; c < raster.channels(); ++c) {
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) patch.raster.at(x, y, c) = raster.at(ox + x, oy + y, c);
        }
      }
      out.push_back(std::move(patch));
    }
  }
  return out;
}

Modality parse_modality(std::string_view name) {
  if (name == "gray") return Modality::kGray;
  if (name == "dem") return Modality::kDem;
  if (name == "normals") return Modality::kNormals;
  if (name == "albedo") return Modality::kAlbedo;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kGray: return "gray";
    case Modality::kDem: return "dem";
    case Modality::kNormals: return "normals";
    case Modality::kAlbedo: return "albedo";
  }
  return "unknown";
}

Raster normalize_modality(const Raster& raster, Modality modality,
                          std::optional<NormalizationStats> stats) {
  Raster out = raster;
  switch (modality) {
    case Modality::kNormals:
      return out;
    case Modality::kDem: {
      const auto s = raster.samples();
      if (s.empty()) return out;
      const double mean = std::accumulate(s.begin(), s.end(), 0.0L) / static_cast<long double>(s.size());
      for (float& v : out.samples()) v = static_cast<float>(static_cast<double>(v) - mean);
      return out;
    }
    case Modality::kGray:
    case Modality::kAlbedo: {
      if (!stats) {
        throw std::invalid_argument("normalize_modality: " + std::string(modality_name(modality)) +
                                    " requires global mean/std");
      }
      if (!(stats->std > 0.0)) throw std::invalid_argument("normalize_modality: std must be > 0");
      for (float& v : out.samples()) {
        v = static_cast<float>((static_cast<double>(v) - stats->mean) / stats->std);
      }
      return out;
    }
  }
  return out;
}

// ---- Dirichlet masking -----------------------------------------------------

std::size_t MaskPlan::input_count() const {
  std::size_t n = 0;
  for (const auto& m : modalities) n += m.inputs.size();
  return n;
}

std::vector<std::size_t> allocate_budget(std::span<const double> proportions,
                                         std::size_t budget, std::size_t capacity) {
  const std::size_t m = proportions.size();
  if (m == 0) throw std::invalid_argument("allocate_budget: no modalities");
  if (budget > m * capacity) throw std::invalid_argument("allocate_budget: budget exceeds capacity");
  std::vector<std::size_t> counts(m);
  std::vector<double> remainder(m);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double share = proportions[i] * static_cast<double>(budget);
    const auto whole = static_cast<std::size_t>(std::floor(share));
    counts[i] = std::min(whole, capacity);
    remainder[i] = share - std::floor(share);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return proportions[a] > proportions[b];
  });
  // Floating-point floor sums can undershoot or, after capping, leave more than
  // m units; cycle through the remainder order until the budget is met.
  while (assigned < budget) {
    for (std::size_t idx : order) {
      if (assigned == budget) break;
      if (counts[idx] < capacity) {
        ++counts[idx];
        ++assigned;
      }
    }
  }
  while (assigned > budget) {
    for (auto it = order.rbegin(); it != order.rend() && assigned > budget; ++it) {
      if (counts[*it] > 0) {
        --counts[*it];
        --assigned;
      }
    }
  }
  return counts;
}

namespace {

void check_alphas(std::span<const double> alphas) {
  if (alphas.empty()) throw std::invalid_argument("dirichlet_mask: need at least one modality");
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("dirichlet_mask: every alpha must be > 0");
    }
  }
}

// Gamma variates in log space: for shape < 1, Gamma(a) = Gamma(a + 1) U^(1/a),
// whose linear value underflows for the tiny shapes used in masking.
std::vector<double> dirichlet_draw(std::span<const double> alphas, std::mt19937_64& rng) {
  std::vector<double> log_g(alphas.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const double a = alphas[i];
    if (a >= 1.0) {
      std::gamma_distribution<double> gamma(a, 1.0);
      log_g[i] = std::log(gamma(rng));
    } else {
      std::gamma_distribution<double> gamma(a + 1.0, 1.0);
      double u = unit(rng);
      while (u == 0.0) u = unit(rng);
      log_g[i] = std::log(gamma(rng)) + std::log(u) / a;
    }
  }
  const double peak = *std::ranges::max_element(log_g);
  double sum = 0.0;
  std::vector<double> out(alphas.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_g[i] - peak);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

std::vector<double> sample_dirichlet(std::span<const double> alphas, std::uint64_t seed) {
  check_alphas(alphas);
  std::mt19937_64 rng(seed);
  return dirichlet_draw(alphas, rng);
}

MaskPlan dirichlet_mask(const MaskOptions& opts) {
  check_alphas(opts.alphas);
  const std::size_t m = opts.alphas.size();
  const std::size_t tokens = opts.tokens_per_modality;
  if (tokens == 0) throw std::invalid_argument("dirichlet_mask: tokens_per_modality must be > 0");
  if (opts.input_budget == 0 || opts.input_budget > m * tokens) {
    throw std::invalid_argument("dirichlet_mask: input budget must be in (0, total tokens]");
  }

  std::mt19937_64 rng(opts.seed);
  const std::vector<double> proportions =
      opts.uniform ? std::vector<double>(m, 1.0 / static_cast<double>(m))
                   : dirichlet_draw(opts.alphas, rng);
  const auto counts = allocate_budget(proportions, opts.input_budget, tokens);

  MaskPlan plan;
  plan.tokens_per_modality = tokens;
  plan.modalities.resize(m);
  std::vector<std::size_t> pool(tokens);
  for (std::size_t k = 0; k < m; ++k) {
    std::iota(pool.begin(), pool.end(), 0);
    // Partial Fisher-Yates: the first counts[k] entries are a uniform sample.
    for (std::size_t i = 0; i < counts[k]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, tokens - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    auto& mask = plan.modalities[k];
    mask.inputs.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(counts[k]));
    std::ranges::sort(mask.inputs);
    mask.targets.reserve(tokens - counts[k]);
    std::size_t next = 0;
    for (std::size_t t = 0; t < tokens; ++t) {
      if (next < mask.inputs.size() && mask.inputs[next] == t) {
        ++next;
      } else {
        mask.targets.push_back(t);
      }
    }
  }
  return plan;
}

}  // namespace lunarsfs
