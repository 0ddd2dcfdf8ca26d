#include "lunarsfs/vq.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lunarsfs/config.hpp"

namespace lunarsfs {

VectorBatch::VectorBatch(std::size_t rows, std::size_t dim, std::vector<double> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
  if (data_.size() != rows * dim) throw std::invalid_argument("VectorBatch: data size mismatch");
}

std::size_t default_vocab_size(Modality modality) {
  switch (modality) {
    case Modality::kGray: return 1536;
    case Modality::kDem: return 2048;
    case Modality::kNormals: return 1536;
    case Modality::kAlbedo: return 1024;
  }
  return 1024;
}

Codebook Codebook::from_vectors(VectorBatch vectors, double decay, double epsilon) {
  if (vectors.rows() == 0) throw std::invalid_argument("Codebook: need at least one codeword");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("Codebook: decay must be in (0, 1)");
  Codebook cb;
  cb.ema_counts.assign(vectors.rows(), 0.0);
  cb.ema_sums = VectorBatch(vectors.rows(), vectors.dim());
  cb.vectors = std::move(vectors);
  cb.decay = decay;
  cb.epsilon = epsilon;
  return cb;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::pair<std::size_t, double> nearest(std::span<const double> v, const Codebook& cb) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cb.vocab_size(); ++k) {
    const double d = squared_distance(v, cb.vectors.row(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return {best, best_d};
}

void check_dim(const VectorBatch& v, const Codebook& cb, const char* fn) {
  if (v.rows() > 0 && v.dim() != cb.dim()) {
    throw std::invalid_argument(std::string(fn) + ": dimension mismatch with codebook");
  }
}

}  // namespace

Quantized quantize(const VectorBatch& vectors, const Codebook& cb) {
  check_dim(vectors, cb, "quantize");
  Quantized out{std::vector<std::size_t>(vectors.rows()), VectorBatch(vectors.rows(), cb.dim())};
  for (std::size_t i = 0; i < vectors.rows(); ++i) {
    const std::size_t k = nearest(vectors.row(i), cb).first;
    out.indices[i] = k;
    std::ranges::copy(cb.vectors.row(k), out.vectors.row(i).begin());
  }
  return out;
}

VectorBatch dequantize(std::span<const std::size_t> indices, const Codebook& cb) {
  VectorBatch out(indices.size(), cb.dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= cb.vocab_size()) throw std::invalid_argument("dequantize: index out of range");
    std::ranges::copy(cb.vectors.row(indices[i]), out.row(i).begin());
  }
  return out;
}

void ema_update(Codebook& cb, const VectorBatch& batch, std::span<const std::size_t> assignments) {
  if (batch.rows() == 0) return;
  check_dim(batch, cb, "ema_update");
  if (assignments.size() != batch.rows()) {
    throw std::invalid_argument("ema_update: assignments/batch length mismatch");
  }
  const std::size_t k_count = cb.vocab_size();
  const std::size_t dim = cb.dim();
  std::vector<double> n(k_count, 0.0);
  VectorBatch sums(k_count, dim);
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const std::size_t k = assignments[i];
    if (k >= k_count) throw std::invalid_argument("ema_update: assignment out of range");
    n[k] += 1.0;
    auto dst = sums.row(k);
    const auto src = batch.row(i);
    for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
  }
  const double g = cb.decay;
  double total = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    cb.ema_counts[k] = g * cb.ema_counts[k] + (1.0 - g) * n[k];
    auto es = cb.ema_sums.row(k);
    const auto bs = sums.row(k);
    for (std::size_t d = 0; d < dim; ++d) es[d] = g * es[d] + (1.0 - g) * bs[d];
    total += cb.ema_counts[k];
  }
  const double kk = static_cast<double>(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (cb.ema_counts[k] == 0.0) continue;
    const double smoothed = (cb.ema_counts[k] + cb.epsilon) / (total + kk * cb.epsilon) * total;
    auto v = cb.vectors.row(k);
    const auto es = cb.ema_sums.row(k);
    for (std::size_t d = 0; d < dim; ++d) v[d] = es[d] / smoothed;
  }
}

double mean_quantization_error(const VectorBatch& vectors, const Codebook& cb) {
  check_dim(vectors, cb, "mean_quantization_error");
  if (vectors.rows() == 0) return 0.0;
  long double acc = 0.0L;
  for (std::size_t i = 0; i < vectors.rows(); ++i) acc += nearest(vectors.row(i), cb).second;
  return static_cast<double>(acc / static_cast<long double>(vectors.rows()));
}

FitResult fit_codebook(const VectorBatch& data, const FitConfig& cfg) {
  if (cfg.vocab_size == 0) throw std::invalid_argument("fit_codebook: vocab_size must be >= 1");
  if (data.rows() < cfg.vocab_size) {
    throw std::invalid_argument("fit_codebook: need at least vocab_size data rows");
  }
  if (cfg.epochs < 1) throw std::invalid_argument("fit_codebook: epochs must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::shuffle(order, rng);

  // Prefer rows with distinct values; fall back to repeats if the data has
  // fewer than K distinct rows.
  std::vector<std::size_t> chosen;
  std::set<std::vector<double>> seen;
  std::vector<std::size_t> repeats;
  for (std::size_t idx : order) {
    if (chosen.size() == cfg.vocab_size) break;
    const auto r = data.row(idx);
    if (seen.emplace(r.begin(), r.end()).second) {
      chosen.push_back(idx);
    } else {
      repeats.push_back(idx);
    }
  }
  for (std::size_t i = 0; chosen.size() < cfg.vocab_size; ++i) chosen.push_back(repeats[i]);

  VectorBatch init(cfg.vocab_size, data.dim());
  for (std::size_t k = 0; k < chosen.size(); ++k) std::ranges::copy(data.row(chosen[k]), init.row(k).begin());
  FitResult result{Codebook::from_vectors(init, cfg.decay, cfg.epsilon), {}};
  Codebook& cb = result.codebook;
  // Each seed codeword starts as one observation of itself.
  std::ranges::fill(cb.ema_counts, 1.0);
  cb.ema_sums = init;

  const std::size_t batch = cfg.batch_size == 0 ? data.rows() : cfg.batch_size;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::ranges::shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      VectorBatch chunk(stop - start, data.dim());
      for (std::size_t i = start; i < stop; ++i) {
        std::ranges::copy(data.row(order[i]), chunk.row(i - start).begin());
      }
      const Quantized q = quantize(chunk, cb);
      ema_update(cb, chunk, q.indices);
    }
    result.epoch_error.push_back(mean_quantization_error(data, cb));
  }
  return result;
}

namespace {

void check_cells(const Raster& raster) {
  if (raster.width() % kTokenPatch != 0 || raster.height() % kTokenPatch != 0 ||
      raster.width() == 0 || raster.height() == 0) {
    throw std::invalid_argument("tokenize_image: sides must be positive multiples of 8");
  }
}

}  // namespace

VectorBatch image_cells(const Raster& raster) {
  check_cells(raster);
  const int cols = raster.width() / kTokenPatch;
  const int rows = raster.height() / kTokenPatch;
  const std::size_t dim = static_cast<std::size_t>(kTokenPatch * kTokenPatch) * raster.channels();
  VectorBatch out(static_cast<std::size_t>(cols) * rows, dim);
  for (int cy = 0; cy < rows; ++cy) {
    for (int cx = 0; cx < cols; ++cx) {
      auto dst = out.row(static_cast<std::size_t>(cy) * cols + cx);
      std::size_t j = 0;
      for (int c = 0; c < raster.channels(); ++c) {
        for (int y = 0; y < kTokenPatch; ++y) {
          for (int x = 0; x < kTokenPatch; ++x) {
            dst[j++] = raster.at(cx * kTokenPatch + x, cy * kTokenPatch + y, c);
          }
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> tokenize_image(const Raster& raster, const Codebook& cb) {
  const VectorBatch cells = image_cells(raster);
  if (cells.dim() != cb.dim()) {
    throw std::invalid_argument("tokenize_image: codebook dim must equal 64 * channels");
  }
  return quantize(cells, cb).indices;
}

Raster detokenize(std::span<const std::size_t> indices, const Codebook& cb, int width,
                  int height) {
  const std::size_t cell = static_cast<std::size_t>(kTokenPatch * kTokenPatch);
  if (cb.dim() % cell != 0) throw std::invalid_argument("detokenize: codebook dim not a multiple of 64");
  Raster out(width, height, static_cast<int>(cb.dim() / cell));
  check_cells(out);
  const int cols = width / kTokenPatch;
  const int rows = height / kTokenPatch;
  if (indices.size() != static_cast<std::size_t>(cols) * rows) {
    throw std::invalid_argument("detokenize: token count does not match image size");
  }
  const VectorBatch cells = dequantize(indices, cb);
  for (int cy = 0; cy < rows; ++cy) {
    for (int cx = 0; cx < cols; ++cx) {
      const auto src = cells.row(static_cast<std::size_t>(cy) * cols + cx);
      std::size_t j = 0;
      for (int c = 0; c < out.channels(); ++c) {
        for (int y = 0; y < kTokenPatch; ++y) {
          for (int x = 0; x < kTokenPatch; ++x) {
            out.at(cx * kTokenPatch + x, cy * kTokenPatch + y, c) = static_cast<float>(src[j++]);
          }
        }
      }
    }
  }
  return out;
}

void write_codebook(const std::filesystem::path& path, const Codebook& cb) {
  Raster r(static_cast<int>(cb.dim()), static_cast<int>(cb.vocab_size()), 1);
  for (std::size_t k = 0; k < cb.vocab_size(); ++k) {
    for (std::size_t d = 0; d < cb.dim(); ++d) {
      r.at(static_cast<int>(d), static_cast<int>(k)) = static_cast<float>(cb.vectors.row(k)[d]);
    }
  }
  write_raster(path, r);
  std::ofstream meta(path.string() + ".meta", std::ios::trunc);
  if (!meta) throw std::runtime_error("write_codebook: cannot open sidecar for " + path.string());
  meta.precision(17);
  meta << "decay = " << cb.decay << "\n"
       << "epsilon = " << cb.epsilon << "\n"
       << "modality = " << cb.modality << "\n";
}

Codebook read_codebook(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  const KeyValueConfig meta = KeyValueConfig::load(path.string() + ".meta");
  meta.require_known({"decay", "epsilon", "modality"});
  VectorBatch vectors(static_cast<std::size_t>(r.height()), static_cast<std::size_t>(r.width()));
  for (int k = 0; k < r.height(); ++k) {
    for (int d = 0; d < r.width(); ++d) vectors.row(static_cast<std::size_t>(k))[static_cast<std::size_t>(d)] = r.at(d, k);
  }
  Codebook cb = Codebook::from_vectors(std::move(vectors), meta.get_double("decay", kCodebookDecay),
                                       meta.get_double("epsilon", kCodebookEpsilon));
  cb.modality = meta.get_string("modality", "gray");
  return cb;
}

}  // namespace lunarsfs
