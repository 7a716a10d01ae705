#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/filter.hpp"
#include "pocusiq/image.hpp"
#include "pocusiq/preprocess.hpp"

// Natural-scene-statistics building blocks shared by NIQE and PIQE.
namespace pocusiq {

/// Real-valued grid that is not bound to an intensity domain.
struct Field {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double operator()(int x, int y) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  double& operator()(int x, int y) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct MscnResult {
  Field coefficients;  ///< (I - mu) / (sigma + 1)
  Field local_sigma;
};

/// Intensities on the 0..255 scale, whatever the declared domain.
inline std::vector<double> to_u8_scale(const Image& img) {
  const auto b = img.bounds();
  const double s = 255.0 / b.range();
  std::vector<double> v(img.size());
  auto px = img.pixels();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (px[i] - b.lo) * s;
  return v;
}

inline constexpr int kMscnWindow = 7;

/// Mean-subtracted contrast-normalized coefficients with 7x7 Gaussian local
/// moments (sigma 7/6, replicated borders), on the 0..255 scale.
inline MscnResult mscn_full(const std::vector<double>& u8, int width, int height) {
  if (width < kMscnWindow || height < kMscnWindow) {
    throw UsageError("mscn: image smaller than the 7x7 window");
  }
  const auto k = filter::gaussian_kernel(7.0 / 6.0, kMscnWindow / 2);
  std::vector<double> sq(u8.size());
  for (std::size_t i = 0; i < u8.size(); ++i) sq[i] = u8[i] * u8[i];
  const auto mu = filter::separable_same(u8, width, height, k, filter::Border::Replicate);
  const auto e2 = filter::separable_same(sq, width, height, k, filter::Border::Replicate);
  MscnResult r{{width, height, std::vector<double>(u8.size())}, {width, height, std::vector<double>(u8.size())}};
  for (std::size_t i = 0; i < u8.size(); ++i) {
    const double sigma = std::sqrt(std::abs(e2[i] - mu[i] * mu[i]));
    r.local_sigma.data[i] = sigma;
    r.coefficients.data[i] = (u8[i] - mu[i]) / (sigma + 1.0);
  }
  return r;
}

inline Field mscn(const Image& img) {
  return mscn_full(to_u8_scale(img), img.width(), img.height()).coefficients;
}

/// Asymmetric generalized Gaussian parameters.
struct AggdParams {
  double alpha = 2.0;   ///< shape
  double beta_l = 1.0;  ///< left scale
  double beta_r = 1.0;  ///< right scale

  /// Mean of the fitted distribution.
  double mean() const {
    return (beta_r - beta_l) * std::tgamma(2.0 / alpha) / std::tgamma(1.0 / alpha);
  }
};

namespace nss_detail {

inline constexpr double kAlphaMin = 0.2;
inline constexpr double kAlphaMax = 10.0;
inline constexpr double kAlphaStep = 0.001;

// r(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)) on the search grid; it is
// monotonically increasing in alpha.
inline const std::vector<double>& ratio_table() {
  static const std::vector<double> table = [] {
    const int n = static_cast<int>(std::lround((kAlphaMax - kAlphaMin) / kAlphaStep)) + 1;
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) {
      const double a = kAlphaMin + i * kAlphaStep;
      t[i] = std::exp(2.0 * std::lgamma(2.0 / a) - std::lgamma(1.0 / a) - std::lgamma(3.0 / a));
    }
    return t;
  }();
  return table;
}

}  // namespace nss_detail

/// Moment-matching AGGD fit; empty when the samples cannot support a fit
/// (too few, constant, or one-sided).
inline std::optional<AggdParams> try_fit_aggd(std::span<const double> samples) {
  if (samples.size() < 2) return std::nullopt;
  double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  std::size_t n_left = 0, n_right = 0;
  for (double v : samples) {
    if (v < 0.0) {
      left_sq += v * v;
      ++n_left;
    } else if (v > 0.0) {
      right_sq += v * v;
      ++n_right;
    }
    abs_sum += std::abs(v);
    sq_sum += v * v;
  }
  if (n_left == 0 || n_right == 0 || sq_sum == 0.0) return std::nullopt;
  const double n = static_cast<double>(samples.size());
  const double left_std = std::sqrt(left_sq / static_cast<double>(n_left));
  const double right_std = std::sqrt(right_sq / static_cast<double>(n_right));
  const double gamma_hat = left_std / right_std;
  const double r_hat = (abs_sum / n) * (abs_sum / n) / (sq_sum / n);
  const double r_norm = r_hat * (gamma_hat * gamma_hat * gamma_hat + 1.0) * (gamma_hat + 1.0) /
                        ((gamma_hat * gamma_hat + 1.0) * (gamma_hat * gamma_hat + 1.0));
  const auto& table = nss_detail::ratio_table();
  auto it = std::lower_bound(table.begin(), table.end(), r_norm);
  std::size_t idx = 0;
  if (it == table.end()) {
    idx = table.size() - 1;
  } else {
    idx = static_cast<std::size_t>(it - table.begin());
    if (idx > 0 && std::abs(table[idx - 1] - r_norm) <= std::abs(table[idx] - r_norm)) --idx;
  }
  const double alpha = nss_detail::kAlphaMin + static_cast<double>(idx) * nss_detail::kAlphaStep;
  const double scale = std::sqrt(std::tgamma(1.0 / alpha) / std::tgamma(3.0 / alpha));
  return AggdParams{alpha, left_std * scale, right_std * scale};
}

inline constexpr std::size_t kMinAggdSamples = 100;

inline AggdParams fit_aggd(std::span<const double> samples) {
  if (samples.size() < kMinAggdSamples) {
    throw UsageError("fit_aggd: need at least 100 samples, got " + std::to_string(samples.size()));
  }
  auto fit = try_fit_aggd(samples);
  if (!fit) throw NumericError("fit_aggd: degenerate samples (constant or one-sided)");
  return *fit;
}

}  // namespace pocusiq
