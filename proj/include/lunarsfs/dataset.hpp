#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lunarsfs/grid.hpp"
#include "lunarsfs/terrain.hpp"

namespace lunarsfs {

/// Multi-channel float32 raster, planar channel order, row-major within a
/// channel. This is the on-disk carrier for every modality.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels = 1, float fill = 0.0f);

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int channels() const { return channels_; }

  float& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }
  [[nodiscard]] float at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }

  std::span<float> samples() { return samples_; }
  [[nodiscard]] std::span<const float> samples() const { return samples_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  [[nodiscard]] std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> samples_;
};

Raster to_raster(const Grid& grid);
Raster to_raster(const NormalMap& normals);
Grid channel_grid(const Raster& raster, int channel = 0);

/// Malformed SFSR input; `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  [[nodiscard]] std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

inline constexpr std::size_t kSfsrHeaderSize = 19;
inline constexpr std::uint16_t kSfsrVersion = 1;

std::vector<std::uint8_t> encode_sfsr(const Raster& raster);
Raster decode_sfsr(std::span<const std::uint8_t> bytes);
void write_raster(const std::filesystem::path& path, const Raster& raster);
Raster read_raster(const std::filesystem::path& path);

struct Patch {
  int origin_x = 0;
  int origin_y = 0;
  Raster raster;
};

inline constexpr int kPatchSize = 224;
inline constexpr int kPatchStride = 32;
inline constexpr int kTokenPatch = 8;
inline constexpr int kTokensPerSide = kPatchSize / kTokenPatch;           // 28
inline constexpr int kTokensPerImage = kTokensPerSide * kTokensPerSide;  // 784

/// Number of patches slice_patches produces for a width x height raster.
std::size_t patch_count(int width, int height, int size = kPatchSize, int stride = kPatchStride);

/// Row-major sliding-window patches with their origins.
std::vector<Patch> slice_patches(const Raster& raster, int size = kPatchSize,
                                 int stride = kPatchStride);

enum class Modality { kGray, kDem, kNormals, kAlbedo };

Modality parse_modality(std::string_view name);
std::string_view modality_name(Modality m);

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
};

/// dem: per-patch mean subtraction; gray/albedo: (x - mean)/std with the
/// supplied global statistics; normals: unchanged.
Raster normalize_modality(const Raster& raster, Modality modality,
                          std::optional<NormalizationStats> stats = std::nullopt);

struct ModalityMask {
  std::vector<std::size_t> inputs;   // sorted
  std::vector<std::size_t> targets;  // sorted complement
};

struct MaskPlan {
  std::size_t tokens_per_modality = kTokensPerImage;
  std::vector<ModalityMask> modalities;

  [[nodiscard]] std::size_t input_count() const;
};

struct MaskOptions {
  std::vector<double> alphas;     // one per modality, each > 0
  std::size_t input_budget = 0;   // total input tokens across modalities
  std::uint64_t seed = 0;
  bool uniform = false;           // equal proportions (the alpha -> infinity limit)
  std::size_t tokens_per_modality = kTokensPerImage;
};

/// Largest-remainder apportionment of `budget` by `proportions`, capped at
/// `capacity` per entry. The result always sums to `budget`.
std::vector<std::size_t> allocate_budget(std::span<const double> proportions,
                                         std::size_t budget, std::size_t capacity);

/// Draws Dirichlet(alphas) proportions, allocates the budget and picks
/// input tokens uniformly without replacement per modality.
MaskPlan dirichlet_mask(const MaskOptions& opts);

/// The sampled Dirichlet proportions only (same RNG stream as dirichlet_mask).
std::vector<double> sample_dirichlet(std::span<const double> alphas, std::uint64_t seed);

}  // namespace lunarsfs
