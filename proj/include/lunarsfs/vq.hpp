#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lunarsfs/dataset.hpp"

namespace lunarsfs {

/// Row-major N x D block of vectors.
class VectorBatch {
 public:
  VectorBatch() = default;
  VectorBatch(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim) {}
  VectorBatch(std::size_t rows, std::size_t dim, std::vector<double> data);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline constexpr double kCodebookDecay = 0.99;
inline constexpr double kCodebookEpsilon = 1e-5;

/// Vocabulary sizes of the four tokenizers.
std::size_t default_vocab_size(Modality modality);

/// EMA vector-quantization codebook.
struct Codebook {
  VectorBatch vectors;              // K x D codewords
  std::vector<double> ema_counts;   // K
  VectorBatch ema_sums;             // K x D
  double decay = kCodebookDecay;
  double epsilon = kCodebookEpsilon;
  std::string modality = "gray";

  /// Codewords as given; EMA statistics zeroed.
  static Codebook from_vectors(VectorBatch vectors, double decay = kCodebookDecay,
                               double epsilon = kCodebookEpsilon);

  [[nodiscard]] std::size_t vocab_size() const { return vectors.rows(); }
  [[nodiscard]] std::size_t dim() const { return vectors.dim(); }
};

struct Quantized {
  std::vector<std::size_t> indices;
  VectorBatch vectors;
};

/// Nearest codeword by squared Euclidean distance, lowest index on ties.
Quantized quantize(const VectorBatch& vectors, const Codebook& cb);
VectorBatch dequantize(std::span<const std::size_t> indices, const Codebook& cb);

/// One exponential-moving-average step with Laplace-smoothed counts.
/// An empty batch leaves the codebook unchanged; a codeword whose EMA count
/// is exactly zero keeps its current vector.
void ema_update(Codebook& cb, const VectorBatch& batch, std::span<const std::size_t> assignments);

/// Mean squared distance from each row to its nearest codeword.
double mean_quantization_error(const VectorBatch& vectors, const Codebook& cb);

struct FitConfig {
  std::size_t vocab_size = 16;
  int epochs = 50;
  std::size_t batch_size = 0;  // 0 = whole data set per step
  std::uint64_t seed = 0;
  double decay = kCodebookDecay;
  double epsilon = kCodebookEpsilon;
};

struct FitResult {
  Codebook codebook;
  std::vector<double> epoch_error;  // mean quantization error after each epoch
};

/// Seeds codewords with distinct data rows, then alternates quantize and
/// ema_update for cfg.epochs passes over shuffled mini-batches.
FitResult fit_codebook(const VectorBatch& data, const FitConfig& cfg);

/// Flattens each 8x8 cell (channel-planar) into a 64*channels vector.
VectorBatch image_cells(const Raster& raster);

/// 8x8-cell tokens in row-major cell order.
std::vector<std::size_t> tokenize_image(const Raster& raster, const Codebook& cb);
Raster detokenize(std::span<const std::size_t> indices, const Codebook& cb, int width, int height);

/// Codebook as a K x D single-channel SFSR raster plus "<path>.meta" text
/// holding decay, epsilon and modality.
void write_codebook(const std::filesystem::path& path, const Codebook& cb);
Codebook read_codebook(const std::filesystem::path& path);

}  // namespace lunarsfs
