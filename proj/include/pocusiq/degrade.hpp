#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>

#include "pocusiq/core/error.hpp"
#include "pocusiq/core/kvconfig.hpp"
#include "pocusiq/core/rng.hpp"
#include "pocusiq/filter.hpp"
#include "pocusiq/image.hpp"
#include "pocusiq/registration.hpp"

namespace pocusiq {

/// Parameters of one synthetic degradation. Every field has a neutral value
/// (0, 0, 100, 0) under which its stage is the identity.
struct DegradationSpec {
  double speckle_sigma = 0.0;
  double blur_sigma = 0.0;
  int compression_quality = 100;
  double warp_magnitude = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(speckle_sigma >= 0.0) || !(blur_sigma >= 0.0) || !(warp_magnitude >= 0.0)) {
      throw UsageError("degradation strengths must be non-negative");
    }
    if (compression_quality < 1 || compression_quality > 100) {
      throw UsageError("compression_quality must lie in 1..100");
    }
  }

  static DegradationSpec from_config(const KeyValueConfig& cfg) {
    DegradationSpec s;
    s.speckle_sigma = cfg.get_double("speckle_sigma", s.speckle_sigma);
    s.blur_sigma = cfg.get_double("blur_sigma", s.blur_sigma);
    s.compression_quality = static_cast<int>(cfg.get_int("compression_quality", s.compression_quality));
    s.warp_magnitude = cfg.get_double("warp_magnitude", s.warp_magnitude);
    s.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(s.seed)));
    s.validate();
    return s;
  }

  KeyValueConfig to_config() const {
    KeyValueConfig cfg;
    cfg.set("speckle_sigma", std::to_string(speckle_sigma));
    cfg.set("blur_sigma", std::to_string(blur_sigma));
    cfg.set("compression_quality", std::to_string(compression_quality));
    cfg.set("warp_magnitude", std::to_string(warp_magnitude));
    cfg.set("seed", std::to_string(seed));
    return cfg;
  }
};

inline void require_unit_domain(const Image& img, const char* stage) {
  if (img.domain() != IntensityDomain::Unit_0_1) {
    throw UsageError(std::string(stage) + " expects an image in the [0,1] intensity domain, got '" +
                     std::string(to_string(img.domain())) + "'");
  }
}

/// Multiplicative Gaussian speckle: out = clamp(in * (1 + n), 0, 1), n ~ N(0, sigma^2).
inline Image speckle(const Image& img, double sigma, std::uint64_t seed) {
  require_unit_domain(img, "speckle");
  if (sigma < 0.0) throw UsageError("speckle sigma must be non-negative");
  Image out = img;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.pixels()) v = std::clamp(v * (1.0 + sigma * rng.normal()), 0.0, 1.0);
  return out;
}

/// Separable Gaussian blur, radius ceil(3 sigma), mirrored borders.
inline Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 0.0) throw UsageError("blur sigma must be non-negative");
  if (sigma == 0.0) return img;
  const auto k = filter::gaussian_kernel(sigma, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> src(img.pixels().begin(), img.pixels().end());
  auto blurred = filter::separable_same(src, img.width(), img.height(), k, filter::Border::Reflect101);
  Image out(img.width(), img.height(), img.domain(), img.spacing_x(), img.spacing_y());
  std::copy(blurred.begin(), blurred.end(), out.pixels().begin());
  out.clamp_to_domain();
  return out;
}

namespace jpeg_detail {

// ITU-T T.81 Annex K luminance quantization table, row-major.
inline constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

/// IJG quality scaling of the base table.
inline std::array<double, 64> scaled_table(int quality) {
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<double, 64> q{};
  for (int i = 0; i < 64; ++i) {
    q[i] = std::clamp((kLuminanceTable[i] * scale + 50) / 100, 1, 255);
  }
  return q;
}

inline const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
      for (int x = 0; x < 8; ++x) {
        b[u * 8 + x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

inline void dct8x8(const double* in, double* out) {
  const auto& c = dct_basis();
  double tmp[64];
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0;
      for (int x = 0; x < 8; ++x) s += c[u * 8 + x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  }
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int y = 0; y < 8; ++y) s += c[v * 8 + y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
  }
}

inline void idct8x8(const double* in, double* out) {
  const auto& c = dct_basis();
  double tmp[64];
  for (int v = 0; v < 8; ++v) {
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int u = 0; u < 8; ++u) s += c[u * 8 + x] * in[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int v = 0; v < 8; ++v) s += c[v * 8 + y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
  }
}

}  // namespace jpeg_detail

/// JPEG-style block coding loss: 8x8 DCT on the 0..255 scale, quantization
/// of the AC coefficients with the quality-scaled luminance table, inverse
/// DCT, clamp. The DC term is kept exact so flat regions keep their level.
/// Partial edge blocks are padded by edge replication. Quality 100 returns
/// the input.
inline Image compression_artifact(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw UsageError("compression quality must lie in 1..100");
  if (quality == 100) return img;
  const auto q = jpeg_detail::scaled_table(quality);
  const auto b = img.bounds();
  const double to255 = 255.0 / b.range();
  Image out = img;
  double block[64], coef[64], rec[64];
  for (int by = 0; by < img.height(); by += 8) {
    for (int bx = 0; bx < img.width(); bx += 8) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          block[y * 8 + x] = (img.at_clamped(bx + x, by + y) - b.lo) * to255 - 128.0;
        }
      }
      jpeg_detail::dct8x8(block, coef);
      for (int i = 1; i < 64; ++i) coef[i] = std::round(coef[i] / q[i]) * q[i];
      jpeg_detail::idct8x8(coef, rec);
      for (int y = 0; y < 8 && by + y < img.height(); ++y) {
        for (int x = 0; x < 8 && bx + x < img.width(); ++x) {
          const double v = std::clamp(rec[y * 8 + x] + 128.0, 0.0, 255.0);
          out(bx + x, by + y) = v / to255 + b.lo;
        }
      }
    }
  }
  return out;
}

/// Random small similarity about the image centre: rotation within
/// +-0.5*magnitude degrees, shifts within +-magnitude pixels, scale within
/// 1 +- 0.01*magnitude.
inline AffineTransform2D random_distortion(const Image& img, double magnitude, std::uint64_t seed) {
  Rng rng(seed);
  const double angle = rng.uniform(-0.5 * magnitude, 0.5 * magnitude);
  const double scale = rng.uniform(1.0 - 0.01 * magnitude, 1.0 + 0.01 * magnitude);
  const double dx = rng.uniform(-magnitude, magnitude) * img.spacing_x();
  const double dy = rng.uniform(-magnitude, magnitude) * img.spacing_y();
  const Point2 centre{0.5 * img.width() * img.spacing_x(), 0.5 * img.height() * img.spacing_y()};
  return AffineTransform2D::similarity(angle, scale, centre, dx, dy);
}

inline Image geometric_distortion(const Image& img, double magnitude, std::uint64_t seed) {
  if (magnitude < 0.0) throw UsageError("warp magnitude must be non-negative");
  if (magnitude == 0.0) return img;
  return warp(img, random_distortion(img, magnitude, seed));
}

/// geometric_distortion -> gaussian_blur -> speckle -> compression_artifact.
inline Image degrade(const Image& img, const DegradationSpec& spec) {
  spec.validate();
  require_unit_domain(img, "degrade");
  Image out = geometric_distortion(img, spec.warp_magnitude, derive_seed(spec.seed, 1));
  out = gaussian_blur(out, spec.blur_sigma);
  out = speckle(out, spec.speckle_sigma, derive_seed(spec.seed, 2));
  out = compression_artifact(out, spec.compression_quality);
  return out;
}

/// Closed intervals from which per-image degradation parameters are drawn
/// when building synthetic pretraining pairs.
struct DegradationRanges {
  std::array<double, 2> speckle_sigma{0.05, 0.25};
  std::array<double, 2> blur_sigma{0.5, 1.5};
  std::array<int, 2> compression_quality{20, 60};
  std::array<double, 2> warp_magnitude{0.0, 1.0};

  void validate() const {
    auto ordered = [](auto r) { return r[0] <= r[1]; };
    if (!ordered(speckle_sigma) || !ordered(blur_sigma) || !ordered(compression_quality) ||
        !ordered(warp_magnitude)) {
      throw UsageError("degradation ranges must satisfy lo <= hi");
    }
    DegradationSpec{speckle_sigma[0], blur_sigma[0], compression_quality[0], warp_magnitude[0]}.validate();
    DegradationSpec{speckle_sigma[1], blur_sigma[1], compression_quality[1], warp_magnitude[1]}.validate();
  }

  DegradationSpec sample(std::uint64_t seed) const {
    Rng rng(seed);
    DegradationSpec s;
    s.speckle_sigma = rng.uniform(speckle_sigma[0], speckle_sigma[1]);
    s.blur_sigma = rng.uniform(blur_sigma[0], blur_sigma[1]);
    s.compression_quality = compression_quality[0] +
        static_cast<int>(rng.below(static_cast<std::uint64_t>(compression_quality[1] - compression_quality[0] + 1)));
    s.warp_magnitude = rng.uniform(warp_magnitude[0], warp_magnitude[1]);
    s.seed = rng.next_u64();
    return s;
  }

  /// Keys `<field>_min` / `<field>_max`.
  static DegradationRanges from_config(const KeyValueConfig& cfg) {
    DegradationRanges r;
    auto pair = [&](const std::string& key, auto& range) {
      using V = std::decay_t<decltype(range[0])>;
      range[0] = static_cast<V>(cfg.get_double(key + "_min", range[0]));
      range[1] = static_cast<V>(cfg.get_double(key + "_max", range[1]));
    };
    pair("speckle_sigma", r.speckle_sigma);
    pair("blur_sigma", r.blur_sigma);
    pair("compression_quality", r.compression_quality);
    pair("warp_magnitude", r.warp_magnitude);
    r.validate();
    return r;
  }
};

}  // namespace pocusiq
