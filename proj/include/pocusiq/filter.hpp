#pragma once

#include <cmath>
#include <vector>

#include "pocusiq/core/error.hpp"

// Separable filtering on plain row-major buffers. Shared by the degradation
// stages, the registration pyramid and the quality metrics.
namespace pocusiq::filter {

enum class Border { Reflect101, Replicate };

/// Normalized 1-D Gaussian taps over [-radius, radius].
inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  if (radius < 0) throw UsageError("kernel radius must be non-negative");
  std::vector<double> k(2 * radius + 1);
  if (sigma <= 0.0) {
    k.assign(k.size(), 0.0);
    k[radius] = 1.0;
    return k;
  }
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline int border_index(int i, int n, Border border) noexcept {
  if (n == 1) return 0;
  if (border == Border::Replicate) return i < 0 ? 0 : (i >= n ? n - 1 : i);
  // Reflect without repeating the edge sample: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// "Same"-size separable convolution with a symmetric kernel.
inline std::vector<double> separable_same(const std::vector<double>& src, int width, int height,
                                          const std::vector<double>& kernel, Border border) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(src.size());
  std::vector<double> out(src.size());
  for (int y = 0; y < height; ++y) {
    const double* row = &src[static_cast<std::size_t>(y) * width];
    double* dst = &tmp[static_cast<std::size_t>(y) * width];
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      if (x >= r && x + r < width) {
        for (int k = -r; k <= r; ++k) acc += kernel[k + r] * row[x + k];
      } else {
        for (int k = -r; k <= r; ++k) acc += kernel[k + r] * row[border_index(x + k, width, border)];
      }
      dst[x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    double* dst = &out[static_cast<std::size_t>(y) * width];
    for (int x = 0; x < width; ++x) dst[x] = 0.0;
    for (int k = -r; k <= r; ++k) {
      const int yy = border_index(y + k, height, border);
      const double w = kernel[k + r];
      const double* row = &tmp[static_cast<std::size_t>(yy) * width];
      for (int x = 0; x < width; ++x) dst[x] += w * row[x];
    }
  }
  return out;
}

/// "Valid" separable convolution: output is (width-2r) x (height-2r).
inline std::vector<double> separable_valid(const std::vector<double>& src, int width, int height,
                                           const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  const int ow = width - 2 * r;
  const int oh = height - 2 * r;
  if (ow <= 0 || oh <= 0) throw UsageError("image smaller than filter window");
  std::vector<double> tmp(static_cast<std::size_t>(ow) * height);
  for (int y = 0; y < height; ++y) {
    const double* row = &src[static_cast<std::size_t>(y) * width];
    double* dst = &tmp[static_cast<std::size_t>(y) * ow];
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * row[x + k];
      dst[x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y) {
    double* dst = &out[static_cast<std::size_t>(y) * ow];
    for (std::size_t k = 0; k < kernel.size(); ++k) {
      const double w = kernel[k];
      const double* row = &tmp[static_cast<std::size_t>(y + k) * ow];
      for (int x = 0; x < ow; ++x) dst[x] += w * row[x];
    }
  }
  return out;
}

}  // namespace pocusiq::filter
