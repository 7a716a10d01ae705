#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pocusiq/core/error.hpp"

namespace pocusiq {

/// Declared value range of an image's intensities.
enum class IntensityDomain { U8_0_255, Unit_0_1, Symm_Neg1_1 };

struct DomainBounds {
  double lo;
  double hi;
  constexpr double range() const noexcept { return hi - lo; }
  constexpr double mid() const noexcept { return 0.5 * (lo + hi); }
};

constexpr DomainBounds bounds_of(IntensityDomain d) noexcept {
  switch (d) {
    case IntensityDomain::U8_0_255: return {0.0, 255.0};
    case IntensityDomain::Unit_0_1: return {0.0, 1.0};
    case IntensityDomain::Symm_Neg1_1: return {-1.0, 1.0};
  }
  return {0.0, 1.0};
}

inline std::string_view to_string(IntensityDomain d) noexcept {
  switch (d) {
    case IntensityDomain::U8_0_255: return "u8";
    case IntensityDomain::Unit_0_1: return "unit";
    case IntensityDomain::Symm_Neg1_1: return "symm";
  }
  return "?";
}

/// Grayscale pixel grid with physical spacing (mm/pixel), stored row-major.
class Image {
 public:
  Image() = default;

  /// Constant image; `fill` defaults to the domain minimum.
  Image(int width, int height, IntensityDomain domain, double spacing_x = 1.0,
        double spacing_y = 1.0)
      : Image(width, height, domain, bounds_of(domain).lo, spacing_x, spacing_y) {}

  Image(int width, int height, IntensityDomain domain, double fill, double spacing_x,
        double spacing_y)
      : width_(width), height_(height), domain_(domain) {
    if (width <= 0 || height <= 0) {
      throw UsageError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    set_spacing(spacing_x, spacing_y);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  /// Wraps existing pixels; throws if the length or any value is inconsistent
  /// with the declared domain.
  static Image from_pixels(int width, int height, std::vector<double> pixels,
                           IntensityDomain domain, double spacing_x = 1.0,
                           double spacing_y = 1.0) {
    Image img(width, height, domain, spacing_x, spacing_y);
    if (pixels.size() != img.data_.size()) {
      throw UsageError("pixel buffer has " + std::to_string(pixels.size()) + " values, expected " +
                       std::to_string(img.data_.size()));
    }
    img.data_ = std::move(pixels);
    img.require_within_domain();
    return img;
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  double spacing_x() const noexcept { return spacing_x_; }
  double spacing_y() const noexcept { return spacing_y_; }
  IntensityDomain domain() const noexcept { return domain_; }
  DomainBounds bounds() const noexcept { return bounds_of(domain_); }

  void set_spacing(double sx, double sy) {
    if (!(sx > 0.0) || !(sy > 0.0) || !std::isfinite(sx) || !std::isfinite(sy)) {
      throw UsageError("pixel spacing must be positive and finite");
    }
    spacing_x_ = sx;
    spacing_y_ = sy;
  }

  double& operator()(int x, int y) noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  double operator()(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<double> pixels() noexcept { return data_; }
  std::span<const double> pixels() const noexcept { return data_; }
  std::span<double> row(int y) noexcept {
    return std::span<double>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }
  std::span<const double> row(int y) const noexcept {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }

  /// Clamped read; coordinates outside the grid snap to the nearest edge.
  double at_clamped(int x, int y) const noexcept {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return (*this)(x, y);
  }

  /// Bilinear sample at continuous pixel coordinates, or `outside` when the
  /// point falls off the grid.
  double sample_bilinear(double x, double y, double outside) const noexcept {
    if (!(x >= 0.0 && y >= 0.0 && x <= width_ - 1 && y <= height_ - 1)) return outside;
    const int x0 = std::min(static_cast<int>(x), width_ - 1);
    const int y0 = std::min(static_cast<int>(y), height_ - 1);
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (*this)(x0, y0) * (1.0 - fx) + (*this)(x1, y0) * fx;
    const double bot = (*this)(x0, y1) * (1.0 - fx) + (*this)(x1, y1) * fx;
    return top * (1.0 - fy) + bot * fy;
  }

  /// Bilinear sample with coordinates clamped onto the grid.
  double sample_bilinear_clamped(double x, double y) const noexcept {
    x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
    return sample_bilinear(x, y, 0.0);
  }

  bool within_domain(double tolerance = 0.0) const noexcept {
    const auto b = bounds();
    return std::all_of(data_.begin(), data_.end(), [&](double v) {
      return v >= b.lo - tolerance && v <= b.hi + tolerance;
    });
  }

  void require_within_domain() const {
    if (!within_domain()) {
      throw DataError("image intensities fall outside the declared '" +
                      std::string(to_string(domain_)) + "' domain");
    }
  }

  void clamp_to_domain() noexcept {
    const auto b = bounds();
    for (double& v : data_) v = std::clamp(v, b.lo, b.hi);
  }

  double mean() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v;
    return data_.empty() ? 0.0 : s / static_cast<double>(data_.size());
  }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double spacing_x_ = 1.0;
  double spacing_y_ = 1.0;
  IntensityDomain domain_ = IntensityDomain::Unit_0_1;
  std::vector<double> data_;
};

}  // namespace pocusiq
