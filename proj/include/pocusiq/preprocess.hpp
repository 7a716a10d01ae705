#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <utility>

#include "pocusiq/image.hpp"

namespace pocusiq {

/// Axis-aligned pixel rectangle.
struct Roi {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;

  bool valid_for(const Image& img) const noexcept {
    return x0 >= 0 && y0 >= 0 && width > 0 && height > 0 && x0 + width <= img.width() &&
           y0 + height <= img.height();
  }

  static Roi full(const Image& img) noexcept { return {0, 0, img.width(), img.height()}; }

  friend bool operator==(const Roi&, const Roi&) = default;
};

inline std::string to_string(const Roi& r) {
  return std::to_string(r.x0) + "," + std::to_string(r.y0) + "," + std::to_string(r.width) + "," +
         std::to_string(r.height);
}

/// Affine rescale of the source domain's bounds onto the target domain's
/// bounds. Image content does not influence the mapping.
inline Image normalize(const Image& img, IntensityDomain target) {
  const auto src = img.bounds();
  const auto dst = bounds_of(target);
  Image out(img.width(), img.height(), target, img.spacing_x(), img.spacing_y());
  if (img.domain() == target) {
    std::copy(img.pixels().begin(), img.pixels().end(), out.pixels().begin());
    return out;
  }
  const double scale = dst.range() / src.range();
  auto in = img.pixels();
  auto o = out.pixels();
  for (std::size_t i = 0; i < in.size(); ++i) {
    o[i] = std::clamp((in[i] - src.lo) * scale + dst.lo, dst.lo, dst.hi);
  }
  return out;
}

inline Image crop(const Image& img, const Roi& roi) {
  if (!roi.valid_for(img)) {
    throw UsageError("roi " + to_string(roi) + " out of bounds for " + std::to_string(img.width()) +
                     "x" + std::to_string(img.height()) + " image");
  }
  Image out(roi.width, roi.height, img.domain(), img.spacing_x(), img.spacing_y());
  for (int y = 0; y < roi.height; ++y) {
    auto src = img.row(roi.y0 + y).subspan(roi.x0, roi.width);
    std::copy(src.begin(), src.end(), out.row(y).begin());
  }
  return out;
}

/// Bilinear resampling with pixel centres aligned; spacing is rescaled so
/// that the physical extent is unchanged.
inline Image resample(const Image& img, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) throw UsageError("resample target must be positive");
  const double sx = static_cast<double>(img.width()) / new_width;
  const double sy = static_cast<double>(img.height()) / new_height;
  Image out(new_width, new_height, img.domain(), img.spacing_x() * sx, img.spacing_y() * sy);
  if (new_width == img.width() && new_height == img.height()) {
    std::copy(img.pixels().begin(), img.pixels().end(), out.pixels().begin());
    return out;
  }
  for (int y = 0; y < new_height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    auto dst = out.row(y);
    for (int x = 0; x < new_width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      dst[x] = img.sample_bilinear_clamped(src_x, src_y);
    }
  }
  return out;
}

/// Dimensions that are multiples of 32, picked among the nearest multiple
/// below and above each side so that the aspect-ratio change is minimal.
/// Ties prefer the smallest total size change.
inline std::pair<int, int> divisible_32_size(int width, int height) {
  if (width < 32 || height < 32) {
    throw UsageError("image must be at least 32x32 to fit multiples of 32, got " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
  auto candidates = [](int v) {
    const int lo = (v / 32) * 32;
    const int hi = lo == v ? v : lo + 32;
    return std::pair{lo, hi};
  };
  const auto [wlo, whi] = candidates(width);
  const auto [hlo, hhi] = candidates(height);
  const double ar = static_cast<double>(width) / height;
  std::pair<int, int> best{whi, hhi};
  double best_ar = std::numeric_limits<double>::infinity();
  int best_delta = std::numeric_limits<int>::max();
  for (int w : {wlo, whi}) {
    for (int h : {hlo, hhi}) {
      const double dar = std::abs(static_cast<double>(w) / h - ar);
      const int delta = std::abs(w - width) + std::abs(h - height);
      if (dar < best_ar - 1e-12 || (std::abs(dar - best_ar) <= 1e-12 && delta < best_delta)) {
        best = {w, h};
        best_ar = dar;
        best_delta = delta;
      }
    }
  }
  return best;
}

inline Image fit_divisible_32(const Image& img) {
  const auto [w, h] = divisible_32_size(img.width(), img.height());
  return resample(img, w, h);
}

}  // namespace pocusiq
