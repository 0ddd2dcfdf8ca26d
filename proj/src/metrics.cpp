#include "lunarsfs/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lunarsfs {

namespace {

void check_pair(const Grid& x, const Grid& x_hat, const char* fn) {
  require_same_shape(x, x_hat, fn);
  if (x.empty()) throw std::invalid_argument(std::string(fn) + ": empty input");
}

}  // namespace

double mse(const Grid& x, const Grid& x_hat) {
  check_pair(x, x_hat, "mse");
  long double acc = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double d = static_cast<long double>(x[i]) - x_hat[i];
    acc += d * d;
  }
  return static_cast<double>(acc / static_cast<long double>(x.size()));
}

double rmse(const Grid& x, const Grid& x_hat) { return std::sqrt(mse(x, x_hat)); }

double psnr(const Grid& x, const Grid& x_hat, double max_value) {
  if (!(max_value > 0.0)) throw std::invalid_argument("psnr: max_value must be > 0");
  const double r = rmse(x, x_hat);
  if (r == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(max_value / r);
}

double ssim(const Grid& x, const Grid& x_hat, const SsimOptions& opts) {
  check_pair(x, x_hat, "ssim");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0) || !(x_hat[i] >= 0.0 && x_hat[i] <= 1.0)) {
      throw std::invalid_argument("ssim: inputs must lie in [0, 1]");
    }
  }
  const int win = opts.window;
  if (x.width() < win || x.height() < win) {
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(win) +
                                "x" + std::to_string(win) + " window");
  }
  const int half = win / 2;
  std::vector<double> taps(static_cast<std::size_t>(win));
  double tsum = 0.0;
  for (int k = 0; k < win; ++k) {
    const double d = k - half;
    taps[static_cast<std::size_t>(k)] = std::exp(-0.5 * d * d / (opts.sigma * opts.sigma));
    tsum += taps[static_cast<std::size_t>(k)];
  }
  for (double& t : taps) t /= tsum;

  const double c1 = opts.k1 * opts.k1;
  const double c2 = opts.k2 * opts.k2;
  long double total = 0.0L;
  std::size_t count = 0;
  for (int cy = half; cy < x.height() - half; ++cy) {
    for (int cx = half; cx < x.width() - half; ++cx) {
      double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int j = 0; j < win; ++j) {
        for (int i = 0; i < win; ++i) {
          const double wgt = taps[static_cast<std::size_t>(i)] * taps[static_cast<std::size_t>(j)];
          const double a = x(cx - half + i, cy - half + j);
          const double b = x_hat(cx - half + i, cy - half + j);
          mx += wgt * a;
          my += wgt * b;
          sxx += wgt * a * a;
          syy += wgt * b * b;
          sxy += wgt * a * b;
        }
      }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cov = sxy - mx * my;
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return static_cast<double>(total / static_cast<long double>(count));
}

double remaining_error(const Grid& x, const Grid& x_hat, double e) {
  check_pair(x, x_hat, "remaining_error");
  if (!(e > 0.0)) throw std::invalid_argument("remaining_error: threshold must be > 0");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x[i] - x_hat[i]) < e) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(x.size());
}

double modality_ce_loss(std::span<const ModalityPrediction> modalities) {
  double loss = 0.0;
  for (const ModalityPrediction& m : modalities) {
    if (m.probabilities.size() != m.targets.size()) {
      throw std::invalid_argument("modality_ce_loss: probabilities/targets length mismatch");
    }
    if (m.targets.empty()) continue;
    long double acc = 0.0L;
    for (std::size_t t = 0; t < m.targets.size(); ++t) {
      const auto& dist = m.probabilities[t];
      long double sum = 0.0L;
      for (double v : dist) {
        if (!(v >= 0.0)) throw std::invalid_argument("modality_ce_loss: negative probability");
        sum += v;
      }
      if (std::abs(static_cast<double>(sum) - 1.0) > 1e-9) {
        throw std::invalid_argument("modality_ce_loss: distribution does not sum to 1");
      }
      if (m.targets[t] >= dist.size()) {
        throw std::invalid_argument("modality_ce_loss: target outside vocabulary");
      }
      const double prob = dist[m.targets[t]];
      if (prob == 0.0) return std::numeric_limits<double>::infinity();
      acc -= std::log(static_cast<long double>(prob));
    }
    loss += static_cast<double>(acc / static_cast<long double>(m.targets.size()));
  }
  return loss;
}

}  // namespace lunarsfs
