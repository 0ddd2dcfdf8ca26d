#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lunarsfs/grid.hpp"

namespace lunarsfs {

double mse(const Grid& x, const Grid& x_hat);
double rmse(const Grid& x, const Grid& x_hat);

/// 20 log10(max_value / rmse). Returns +infinity for identical inputs.
double psnr(const Grid& x, const Grid& x_hat, double max_value);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully-contained Gaussian windows. Inputs must lie in
/// [0, 1] and be at least window x window.
double ssim(const Grid& x, const Grid& x_hat, const SsimOptions& opts = {});

/// Fraction of pixels with |x - x_hat| < e.
double remaining_error(const Grid& x, const Grid& x_hat, double e);

/// Token-level predictions for one modality: one probability distribution
/// per token and the target index of each token.
struct ModalityPrediction {
  std::vector<std::vector<double>> probabilities;
  std::vector<std::size_t> targets;
};

/// Sum over modalities of the mean token cross-entropy -log p(target).
/// Returns +infinity when a target has zero probability.
double modality_ce_loss(std::span<const ModalityPrediction> modalities);

}  // namespace lunarsfs
